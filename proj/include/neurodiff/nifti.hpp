#pragma once

#include <filesystem>

#include "neurodiff/volume.hpp"

namespace neurodiff {

/// Reads an uncompressed single-file NIfTI-1 image (magic "n+1").
/// Supports int16, uint16 and float32 voxels; applies scl_slope/scl_inter
/// and takes geometry from the sform, then qform, then pixdim.
Volume read_nifti(const std::filesystem::path& path);

/// Writes little-endian NIfTI-1 with vox_offset 352, sform and qform set.
void write_nifti(const Volume& v, const std::filesystem::path& path);

}  // namespace neurodiff
