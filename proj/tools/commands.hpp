#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "neurodiff/denoiser.hpp"
#include "neurodiff/param.hpp"
#include "neurodiff/preprocess.hpp"
#include "neurodiff/schedule.hpp"
#include "neurodiff/unet.hpp"

// Subcommand implementations behind the neurodiff executable.
namespace neurodiff::cli {

namespace fs = std::filesystem;

inline constexpr int exit_ok = 0;
inline constexpr int exit_partial = 1;
inline constexpr int exit_usage = 2;

inline constexpr const char* tool_version = "0.1.0";

/// Bad invocation detected after parsing; maps to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// NEURODIFF_WORKERS if set to a positive integer, else hardware threads.
unsigned worker_count();

/// Writes {tool, version, command, argv, config} as pretty JSON.
void write_run_manifest(const fs::path& path, const std::string& command,
                        const std::vector<std::string>& argv, const nlohmann::json& config);

/// Expands a directory (sorted *.nii), a JSON-lines manifest or a single file.
std::vector<fs::path> collect_volumes(const fs::path& input);

/// minutes:seconds, seconds rounded to the nearest whole second.
std::string format_mmss(double seconds);

struct PreprocessArgs {
    fs::path manifest;
    fs::path out_dir;
    double target_mm = 1.0;
    Dims shape = standard_shape;
};
int run_preprocess(const PreprocessArgs& args, const std::vector<std::string>& argv, std::ostream& log);

struct SplitArgs {
    fs::path manifest;
    fs::path out;
    double test_fraction = 0.10;
    std::vector<std::string> withheld{"AIBL", "SLEEP"};
    std::uint64_t seed = 0;
};
int run_split(const SplitArgs& args, const std::vector<std::string>& argv, std::ostream& log);

struct TrainArgs {
    std::vector<fs::path> inputs;
    fs::path out_dir;
    PredictionKind kind = PredictionKind::Velocity;
    int epochs = 100;
    double learning_rate = 1e-4;
    int batch_size = 4;
    std::uint64_t seed = 0;
    UNetConfig unet{};
    bool augment = true;
    double ema_momentum = 0.1;
    NoiseSchedule schedule{};
    /// Fit a Gaussian-oracle stub to the data instead of training the U-Net.
    bool oracle = false;
};
int run_train(const TrainArgs& args, const std::vector<std::string>& argv, std::ostream& log);

struct GenerateArgs {
    fs::path weights;
    fs::path out_dir;
    int count = 1;
    int steps = 64;
    double eta = 0.0;
    std::uint64_t seed = 0;
    std::optional<Dims> shape;
};
int run_generate(const GenerateArgs& args, const std::vector<std::string>& argv, std::ostream& log);

using NamedPath = std::pair<std::string, fs::path>;

/// Parses "name=path"; a bare path is named after its final component.
NamedPath parse_named_path(const std::string& text);

struct FidArgs {
    std::vector<NamedPath> real;
    std::vector<NamedPath> synth;
    fs::path out_dir;
    std::uint64_t projection_seed = 0;
    double slice_mm = 4.0;
};
int run_eval_fid(const FidArgs& args, const std::vector<std::string>& argv, std::ostream& log);

/// Rows are reference groups, columns every group; entries comparing a group
/// with itself are empty. The average of each column skips empty entries.
struct FidTable {
    std::vector<std::string> rows;
    std::vector<std::string> columns;
    std::vector<std::vector<std::optional<double>>> values;
    std::vector<std::optional<double>> average() const;
};
void write_fid_csv(std::ostream& os, const FidTable& table);
std::string render_fid_table(const FidTable& table);

struct KsArgs {
    fs::path real_csv;
    std::vector<NamedPath> synth;
    fs::path out_dir;
    std::size_t repetitions = 1000;
    std::size_t subsample = 1000;
    double alpha = 0.05;
    std::uint64_t seed = 0;
};
int run_eval_ks(const KsArgs& args, const std::vector<std::string>& argv, std::ostream& log);

struct NnArgs {
    fs::path queries;
    fs::path candidates;
    fs::path out_dir;
    std::size_t k = 2;
};
int run_eval_nn(const NnArgs& args, const std::vector<std::string>& argv, std::ostream& log);

struct BenchRow {
    int steps = 0;
    std::vector<double> seconds;  // one wall-clock time per repetition
    double median = 0.0;
};

/// Serial timing of generating `batch` samples per repetition.
std::vector<BenchRow> bench_sampler(const Denoiser& denoiser, const NoiseSchedule& schedule,
                                    const Dims& shape, const std::vector<int>& steps, int batch,
                                    int reps, std::uint64_t seed);
void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows, int batch);
std::string render_bench_table(const std::vector<BenchRow>& rows);

struct BenchArgs {
    fs::path weights;
    fs::path out_dir;
    std::vector<int> steps{16, 32, 64};
    int batch = 1;
    int reps = 3;
    std::uint64_t seed = 0;
    std::optional<Dims> shape;
};
int run_bench(const BenchArgs& args, const std::vector<std::string>& argv, std::ostream& log);

}  // namespace neurodiff::cli
