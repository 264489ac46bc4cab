#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace neurodiff {

/// sup |ECDF_a - ECDF_b| over the pooled points. Both inputs sorted ascending.
double ks_statistic(std::span<const double> a_sorted, std::span<const double> b_sorted);

/// Kolmogorov survival function Q(lambda) = P(K > lambda).
double kolmogorov_q(double lambda);

/// Asymptotic two-sided p = Q(sqrt(nm / (n + m)) D), clamped to [0, 1].
double ks_pvalue(double d, std::size_t n, std::size_t m);

/// Asymptotic p-values are unreliable below this sample size.
inline constexpr std::size_t ks_small_sample = 30;

/// The six structures compared between real and synthetic volumes.
inline const std::array<std::string, 6> regional_structures{
    "cerebral_cortex", "brain_stem", "ventricles", "thalamus", "putamen", "cerebellar_cortex"};

/// structure name -> volume in mm^3, one map per image volume.
using RegionalVolumes = std::map<std::string, double>;

struct RegionalTable {
    std::vector<std::string> volume_ids;
    std::vector<RegionalVolumes> volumes;
};

/// CSV with header volume_id,structure,mm3; rows grouped by volume id in
/// first-seen order.
RegionalTable read_regional_csv(const std::filesystem::path& path);
RegionalTable parse_regional_csv(std::istream& is);

struct KsStructureResult {
    std::string structure;
    double fraction_not_significant = 0.0;  // share of reps with p >= alpha
    double median_p = 0.0;
};

struct KsReport {
    std::vector<KsStructureResult> structures;
    std::size_t repetitions = 0;
    std::size_t subsample = 0;
    std::size_t synthetic_count = 0;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    bool small_sample = false;
};

struct PermutationOptions {
    std::size_t repetitions = 1000;
    std::size_t subsample = 1000;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    /// Empty means every structure present in the synthetic set, in
    /// regional_structures order first.
    std::vector<std::string> structures;
};

/// Per structure and repetition: draw `subsample` real values without
/// replacement, KS-test them against all synthetic values, and report the
/// share of repetitions that are not significant at alpha.
KsReport permutation_protocol(const std::vector<RegionalVolumes>& real,
                              const std::vector<RegionalVolumes>& synth,
                              const PermutationOptions& options = {});

void write_ks_csv(std::ostream& os, const KsReport& report);
std::string ks_report_json(const KsReport& report);

}  // namespace neurodiff
