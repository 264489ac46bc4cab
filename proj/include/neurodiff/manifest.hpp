#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace neurodiff {

enum class Split { Train, TestInternal, TestExternal };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct ManifestRecord {
    std::string subject;
    std::string path;
    std::string dataset;
    std::optional<Split> split;
    bool qa_pass = true;
    std::optional<std::string> qa_reason;
    std::optional<std::string> mask_path;
};

using Manifest = std::vector<ManifestRecord>;

/// JSON-lines: one object per line with keys subject, path, dataset, split,
/// qa_status ("pass" | "fail"), and optional qa_reason, mask_path.
Manifest read_manifest(const std::filesystem::path& path);
Manifest parse_manifest(std::istream& is);
void write_manifest(std::ostream& os, const Manifest& manifest);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
void write_manifest_csv(std::ostream& os, const Manifest& manifest);

struct SplitOptions {
    double test_fraction = 0.10;
    std::set<std::string> withheld_datasets{"AIBL", "SLEEP"};
    std::uint64_t seed = 0;
};

/// Subject-level split. Withheld datasets become test-external wholesale;
/// elsewhere round(fraction * subjects) subjects per dataset go to
/// test-internal. QA-failed records are dropped from the result.
Manifest split_subjects(const Manifest& manifest, const SplitOptions& options = {});

}  // namespace neurodiff
