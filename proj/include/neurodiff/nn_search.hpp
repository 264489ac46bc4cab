#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <vector>

#include "neurodiff/volume.hpp"

namespace neurodiff {

struct Neighbor {
    std::size_t index = 0;
    double mse = 0.0;
};

/// Candidates are visited one at a time; only the current one is resident.
class VolumeSource {
public:
    virtual ~VolumeSource() = default;
    virtual std::size_t size() const = 0;
    virtual Volume load(std::size_t index) const = 0;
};

/// Candidates already in memory.
class InMemorySource final : public VolumeSource {
public:
    explicit InMemorySource(const std::vector<Volume>& volumes) : m_volumes(volumes) {}
    std::size_t size() const override { return m_volumes.size(); }
    Volume load(std::size_t index) const override { return m_volumes.at(index); }

private:
    const std::vector<Volume>& m_volumes;
};

/// NIfTI files read lazily.
class NiftiFileSource final : public VolumeSource {
public:
    explicit NiftiFileSource(std::vector<std::filesystem::path> paths) : m_paths(std::move(paths)) {}
    std::size_t size() const override { return m_paths.size(); }
    Volume load(std::size_t index) const override;
    const std::filesystem::path& path(std::size_t index) const { return m_paths.at(index); }

private:
    std::vector<std::filesystem::path> m_paths;
};

double mean_squared_error(const Volume& a, const Volume& b);

/// The k smallest voxel-space MSEs, ascending, ties broken by lower index.
std::vector<Neighbor> nn_search(const Volume& query, const VolumeSource& candidates, std::size_t k = 2);

}  // namespace neurodiff
