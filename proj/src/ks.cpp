#include "neurodiff/ks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "neurodiff/error.hpp"
#include "neurodiff/rng.hpp"

namespace neurodiff {

double ks_statistic(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) {
        throw Error(Errc::empty_sample, "KS test needs two nonempty samples");
    }
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

double kolmogorov_q(double lambda) {
    if (lambda <= 0.0) {
        return 1.0;
    }
    if (lambda < 1.18) {
        // Q = 1 - sqrt(2 pi)/lambda * sum exp(-(2k-1)^2 pi^2 / (8 lambda^2))
        const double c = -std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
        double sum = 0.0;
        for (int k = 1; k < 100; ++k) {
            const double odd = 2.0 * k - 1.0;
            const double term = std::exp(c * odd * odd);
            sum += term;
            if (term < 1e-17 * sum) break;
        }
        return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * sum, 0.0, 1.0);
    }
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k < 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += sign * term;
        if (term < 1e-17 * std::abs(sum)) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_pvalue(double d, std::size_t n, std::size_t m) {
    if (n == 0 || m == 0) {
        throw Error(Errc::empty_sample, "KS p-value needs nonzero sample sizes");
    }
    const double nn = static_cast<double>(n);
    const double mm = static_cast<double>(m);
    return std::clamp(kolmogorov_q(std::sqrt(nn * mm / (nn + mm)) * d), 0.0, 1.0);
}

RegionalTable parse_regional_csv(std::istream& is) {
    RegionalTable table;
    std::map<std::string, std::size_t> index;
    std::string line;
    bool header = true;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line.rfind("volume_id", 0) == 0) continue;
        }
        std::stringstream ss(line);
        std::string id, structure, value;
        if (!std::getline(ss, id, ',') || !std::getline(ss, structure, ',') || !std::getline(ss, value)) {
            throw Error(Errc::parse_error, "regional CSV line " + std::to_string(line_no));
        }
        double mm3 = 0.0;
        try {
            mm3 = std::stod(value);
        } catch (const std::exception&) {
            throw Error(Errc::parse_error, "regional CSV line " + std::to_string(line_no) + ": bad number");
        }
        if (mm3 < 0.0) {
            throw Error(Errc::parse_error, "negative regional volume on line " + std::to_string(line_no));
        }
        auto [it, inserted] = index.try_emplace(id, table.volume_ids.size());
        if (inserted) {
            table.volume_ids.push_back(id);
            table.volumes.emplace_back();
        }
        table.volumes[it->second][structure] = mm3;
    }
    return table;
}

RegionalTable read_regional_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw Error(Errc::io_error, "cannot open " + path.string());
    }
    return parse_regional_csv(is);
}

namespace {

std::vector<double> column(const std::vector<RegionalVolumes>& rows, const std::string& structure) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        const auto it = r.find(structure);
        if (it != r.end()) out.push_back(it->second);
    }
    return out;
}

}  // namespace

KsReport permutation_protocol(const std::vector<RegionalVolumes>& real,
                              const std::vector<RegionalVolumes>& synth,
                              const PermutationOptions& options) {
    if (synth.empty()) {
        throw Error(Errc::empty_sample, "no synthetic volumes");
    }
    if (options.subsample == 0 || options.repetitions == 0) {
        throw Error(Errc::invalid_parameter, "subsample and repetitions must be positive");
    }
    std::vector<std::string> structures = options.structures;
    if (structures.empty()) {
        for (const auto& name : regional_structures) {
            if (synth.front().count(name)) structures.push_back(name);
        }
        for (const auto& [name, value] : synth.front()) {
            if (std::find(structures.begin(), structures.end(), name) == structures.end()) {
                structures.push_back(name);
            }
        }
    }

    KsReport report;
    report.repetitions = options.repetitions;
    report.subsample = options.subsample;
    report.alpha = options.alpha;
    report.seed = options.seed;

    std::uint64_t structure_index = 0;
    for (const std::string& name : structures) {
        std::vector<double> pool = column(real, name);
        std::vector<double> synthetic = column(synth, name);
        if (pool.size() < options.subsample) {
            throw Error(Errc::insufficient_real_data,
                        name + ": " + std::to_string(pool.size()) + " real values, subsample " +
                            std::to_string(options.subsample));
        }
        if (synthetic.empty()) {
            throw Error(Errc::empty_sample, name + ": no synthetic values");
        }
        std::sort(synthetic.begin(), synthetic.end());
        report.synthetic_count = synthetic.size();
        report.small_sample = report.small_sample ||
                              std::min(options.subsample, synthetic.size()) < ks_small_sample;

        Rng rng(options.seed, structure_index++);
        std::vector<double> draw(options.subsample);
        std::vector<double> pvalues(options.repetitions);
        std::size_t kept = 0;
        for (std::size_t rep = 0; rep < options.repetitions; ++rep) {
            // Partial Fisher-Yates: the first `subsample` slots become the draw.
            for (std::size_t i = 0; i < options.subsample; ++i) {
                const std::size_t j = i + rng.below(pool.size() - i);
                std::swap(pool[i], pool[j]);
                draw[i] = pool[i];
            }
            std::sort(draw.begin(), draw.end());
            const double d = ks_statistic(draw, synthetic);
            const double p = ks_pvalue(d, draw.size(), synthetic.size());
            pvalues[rep] = p;
            if (p >= options.alpha) ++kept;
        }
        std::sort(pvalues.begin(), pvalues.end());
        const std::size_t mid = pvalues.size() / 2;
        const double median = pvalues.size() % 2 ? pvalues[mid] : 0.5 * (pvalues[mid - 1] + pvalues[mid]);
        report.structures.push_back(
            {name, static_cast<double>(kept) / static_cast<double>(options.repetitions), median});
    }
    return report;
}

void write_ks_csv(std::ostream& os, const KsReport& report) {
    os << "structure,fraction_p_ge_alpha,median_p,repetitions,subsample,synthetic,alpha\n";
    for (const auto& s : report.structures) {
        os << s.structure << ',' << s.fraction_not_significant << ',' << s.median_p << ','
           << report.repetitions << ',' << report.subsample << ',' << report.synthetic_count << ','
           << report.alpha << '\n';
    }
}

std::string ks_report_json(const KsReport& report) {
    nlohmann::json j;
    j["repetitions"] = report.repetitions;
    j["subsample"] = report.subsample;
    j["synthetic_count"] = report.synthetic_count;
    j["alpha"] = report.alpha;
    j["seed"] = report.seed;
    j["small_sample_warning"] = report.small_sample;
    for (const auto& s : report.structures) {
        j["structures"].push_back({{"structure", s.structure},
                                   {"fraction_p_ge_alpha", s.fraction_not_significant},
                                   {"median_p", s.median_p}});
    }
    return j.dump(2);
}

}  // namespace neurodiff
