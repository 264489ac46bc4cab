#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <ostream>
#include <sstream>
#include <thread>

#include "neurodiff/error.hpp"
#include "neurodiff/features.hpp"
#include "neurodiff/frechet.hpp"
#include "neurodiff/ks.hpp"
#include "neurodiff/manifest.hpp"
#include "neurodiff/model_io.hpp"
#include "neurodiff/nifti.hpp"
#include "neurodiff/nn_search.hpp"
#include "neurodiff/sampler.hpp"
#include "neurodiff/train.hpp"

namespace neurodiff::cli {
namespace {

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

nlohmann::json dims_json(const Dims& d) { return nlohmann::json::array({d.nx, d.ny, d.nz}); }

fs::path resolve(const fs::path& base_dir, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
}

void require_exists(const fs::path& p, const char* what) {
    if (!fs::exists(p)) {
        throw UsageError(std::string(what) + " not found: " + p.string());
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw UsageError("cannot create output directory " + dir.string() + ": " + ec.message());
    }
}

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

bool is_feature_file(const fs::path& p) {
    const auto ext = p.extension().string();
    return fs::is_regular_file(p) && (ext == ".feat" || ext == ".features");
}

}  // namespace

unsigned worker_count() {
    if (const char* env = std::getenv("NEURODIFF_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) {
            return static_cast<unsigned>(v);
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void write_run_manifest(const fs::path& path, const std::string& command,
                        const std::vector<std::string>& argv, const nlohmann::json& config) {
    nlohmann::json j;
    j["tool"] = "neurodiff";
    j["version"] = tool_version;
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = config;
    std::ofstream os(path);
    if (!os) {
        throw Error(Errc::io_error, "cannot write " + path.string());
    }
    os << j.dump(2) << '\n';
}

std::vector<fs::path> collect_volumes(const fs::path& input) {
    std::vector<fs::path> out;
    if (fs::is_directory(input)) {
        for (const auto& entry : fs::directory_iterator(input)) {
            if (entry.is_regular_file() && entry.path().extension() == ".nii") {
                out.push_back(entry.path());
            }
        }
        std::sort(out.begin(), out.end());
    } else if (input.extension() == ".jsonl") {
        const fs::path base = input.parent_path();
        for (const ManifestRecord& r : read_manifest(input)) {
            if (r.qa_pass) out.push_back(resolve(base, r.path));
        }
    } else {
        out.push_back(input);
    }
    return out;
}

std::string format_mmss(double seconds) {
    const long total = std::lround(std::max(0.0, seconds));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%ld:%02ld", total / 60, total % 60);
    return buf;
}

// ---------------------------------------------------------------- preprocess

int run_preprocess(const PreprocessArgs& args, const std::vector<std::string>& argv, std::ostream& log) {
    require_exists(args.manifest, "manifest");
    ensure_dir(args.out_dir);
    ensure_dir(args.out_dir / "logs");
    const Manifest in = read_manifest(args.manifest);
    const fs::path base = args.manifest.parent_path();

    struct Outcome {
        bool skipped = false;
        bool ok = false;
        std::string message;
        ManifestRecord record;
    };
    std::vector<Outcome> outcomes(in.size());
    parallel_for(in.size(), [&](std::size_t i) {
        const ManifestRecord& rec = in[i];
        Outcome& out = outcomes[i];
        out.record = rec;
        if (!rec.qa_pass) {
            out.skipped = true;
            return;
        }
        const fs::path src = resolve(base, rec.path);
        const std::string name = rec.subject + "_" + src.stem().string();
        std::ofstream file_log(args.out_dir / "logs" / (name + ".log"));
        try {
            const Volume image = read_nifti(src);
            std::optional<Volume> mask;
            if (rec.mask_path) mask = read_nifti(resolve(base, *rec.mask_path));
            PreprocessOptions opt;
            opt.target_mm = args.target_mm;
            opt.shape = args.shape;
            const Volume processed = preprocess_volume(image, mask, opt);
            const fs::path dst = args.out_dir / (name + ".nii");
            write_nifti(processed, dst);
            out.ok = true;
            out.record.path = fs::absolute(dst).string();
            out.record.mask_path.reset();
            file_log << "ok " << src.string() << " -> " << dst.string() << " mask="
                     << (mask ? "provided" : "otsu-fallback") << '\n';
        } catch (const std::exception& e) {
            out.message = e.what();
            file_log << "failed " << src.string() << ": " << e.what() << '\n';
        }
    });

    Manifest processed;
    std::size_t failures = 0;
    std::size_t skipped = 0;
    std::ofstream errors(args.out_dir / "errors.log");
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const Outcome& o = outcomes[i];
        if (o.skipped) {
            ++skipped;
        } else if (o.ok) {
            processed.push_back(o.record);
        } else {
            ++failures;
            errors << resolve(base, in[i].path).string() << ": " << o.message << '\n';
            log << "error: " << resolve(base, in[i].path).string() << ": " << o.message << '\n';
        }
    }
    write_manifest(args.out_dir / "manifest.jsonl", processed);
    write_run_manifest(args.out_dir / "run_manifest.json", "preprocess", argv,
                       {{"manifest", fs::absolute(args.manifest).string()},
                        {"out_dir", fs::absolute(args.out_dir).string()},
                        {"target_mm", args.target_mm},
                        {"shape", dims_json(args.shape)},
                        {"processed", processed.size()},
                        {"skipped_qa", skipped},
                        {"failed", failures}});
    log << "preprocessed " << processed.size() << ", skipped " << skipped << " (QA), failed "
        << failures << '\n';
    return failures > 0 ? exit_partial : exit_ok;
}

// --------------------------------------------------------------------- split

int run_split(const SplitArgs& args, const std::vector<std::string>& argv, std::ostream& log) {
    require_exists(args.manifest, "manifest");
    if (!(args.test_fraction >= 0.0 && args.test_fraction <= 1.0)) {
        throw UsageError("test fraction must lie in [0, 1]");
    }
    if (args.out.has_parent_path()) ensure_dir(args.out.parent_path());
    SplitOptions opt;
    opt.test_fraction = args.test_fraction;
    opt.withheld_datasets = {args.withheld.begin(), args.withheld.end()};
    opt.seed = args.seed;
    const Manifest out = split_subjects(read_manifest(args.manifest), opt);
    write_manifest(args.out, out);
    fs::path csv = args.out;
    csv.replace_extension(".csv");
    std::ofstream csv_os(csv);
    write_manifest_csv(csv_os, out);

    std::map<std::string, std::size_t> counts;
    for (const auto& r : out) ++counts[std::string(to_string(*r.split))];
    fs::path run = args.out;
    run.replace_extension(".run.json");
    write_run_manifest(run, "split", argv,
                       {{"manifest", fs::absolute(args.manifest).string()},
                        {"out", fs::absolute(args.out).string()},
                        {"test_fraction", args.test_fraction},
                        {"withheld", args.withheld},
                        {"seed", args.seed},
                        {"records", counts}});
    for (const auto& [split, n] : counts) log << split << ": " << n << " records\n";
    return exit_ok;
}

// --------------------------------------------------------------------- train

int run_train(const TrainArgs& args, const std::vector<std::string>& argv, std::ostream& log) {
    std::vector<fs::path> files;
    for (const fs::path& input : args.inputs) {
        require_exists(input, "training input");
        if (input.extension() == ".jsonl") {
            const fs::path base = input.parent_path();
            for (const ManifestRecord& r : read_manifest(input)) {
                if (r.qa_pass && (!r.split || *r.split == Split::Train)) files.push_back(resolve(base, r.path));
            }
        } else {
            const auto more = collect_volumes(input);
            files.insert(files.end(), more.begin(), more.end());
        }
    }
    if (files.empty()) {
        throw UsageError("no training volumes found");
    }
    ensure_dir(args.out_dir);

    std::vector<Volume> data;
    data.reserve(files.size());
    bool all_u16 = true;
    for (const fs::path& f : files) {
        data.push_back(read_nifti(f));
        all_u16 = all_u16 && data.back().dtype() == DType::U16;
    }
    const double offset = all_u16 ? 32767.5 : 0.0;
    const double scale = all_u16 ? 32767.5 : 1.0;
    for (Volume& v : data) {
        for (float& x : v.data()) x = static_cast<float>((x - offset) / scale);
        v.set_dtype(DType::F32);
    }

    if (args.oracle) {
        double sum = 0.0;
        double sq = 0.0;
        std::size_t n = 0;
        for (const Volume& v : data) {
            for (float x : v.data()) {
                sum += x;
                sq += static_cast<double>(x) * x;
                ++n;
            }
        }
        const double mean = sum / static_cast<double>(n);
        const double variance = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
        const fs::path out = args.out_dir / "oracle.weights";
        save_oracle_stub(out, args.kind, mean, variance, args.schedule, data.front().dims());
        write_run_manifest(args.out_dir / "run_manifest.json", "train", argv,
                           {{"model", "gaussian_oracle"},
                            {"volumes", files.size()},
                            {"kind", std::string(to_string(args.kind))},
                            {"mean", mean},
                            {"variance", variance},
                            {"schedule", args.schedule}});
        log << "oracle stub mean " << mean << " variance " << variance << " -> " << out.string() << '\n';
        return exit_ok;
    }

    TinyUNet net(args.unet, args.kind);
    net.initialize(args.seed);
    TrainConfig cfg;
    cfg.learning_rate = args.learning_rate;
    cfg.batch_size = args.batch_size;
    cfg.epochs = args.epochs;
    cfg.augment = args.augment;
    cfg.ema_momentum = args.ema_momentum;
    cfg.seed = args.seed;
    const TrainResult result = train(net, data, args.schedule, cfg);

    WeightsHeader header;
    header.kind = args.kind;
    header.unet = args.unet;
    header.schedule = args.schedule;
    header.epoch = result.last_good_epoch;
    header.ema_momentum = args.ema_momentum;
    header.shape = data.front().dims();
    header.intensity_offset = offset;
    header.intensity_scale = scale;
    if (result.ema.initialized) {
        save_unet_weights(args.out_dir / "model_ema.weights", net, header, result.ema.shadow);
    }
    save_unet_weights(args.out_dir / "model_last.weights", net, header, result.weights);
    std::ofstream loss(args.out_dir / "loss.csv");
    write_loss_csv(loss, result.history);

    std::vector<std::string> input_strings;
    for (const auto& p : args.inputs) input_strings.push_back(fs::absolute(p).string());
    write_run_manifest(args.out_dir / "run_manifest.json", "train", argv,
                       {{"inputs", input_strings},
                        {"volumes", files.size()},
                        {"out_dir", fs::absolute(args.out_dir).string()},
                        {"kind", std::string(to_string(args.kind))},
                        {"epochs", args.epochs},
                        {"learning_rate", args.learning_rate},
                        {"batch_size", args.batch_size},
                        {"seed", args.seed},
                        {"widths", args.unet.widths},
                        {"blocks_per_level", args.unet.blocks_per_level},
                        {"time_dim", args.unet.time_dim},
                        {"augment", args.augment},
                        {"ema_momentum", args.ema_momentum},
                        {"schedule", args.schedule},
                        {"diverged", result.diverged},
                        {"last_good_epoch", result.last_good_epoch}});
    if (result.diverged) {
        log << "training diverged; weights rolled back to epoch " << result.last_good_epoch << '\n';
    }
    if (!result.history.empty()) {
        log << "epochs " << result.history.size() << ", first loss " << result.history.front().mean_loss
            << ", last loss " << result.history.back().mean_loss << '\n';
    }
    return exit_ok;
}

// ------------------------------------------------------------------ generate

int run_generate(const GenerateArgs& args, const std::vector<std::string>& argv, std::ostream& log) {
    if (args.steps < 1) throw UsageError("--steps must be at least 1");
    if (args.count < 1) throw UsageError("--count must be at least 1");
    require_exists(args.weights, "weights");
    const LoadedModel model = load_model(args.weights);
    if (args.steps > model.schedule.steps()) {
        throw UsageError("--steps exceeds the schedule length " + std::to_string(model.schedule.steps()));
    }
    ensure_dir(args.out_dir);
    const Dims shape = args.shape.value_or(model.shape);
    const bool to_u16 = model.intensity_offset != 0.0 || model.intensity_scale != 1.0;

    std::vector<std::string> failures(static_cast<std::size_t>(args.count));
    parallel_for(failures.size(), [&](std::size_t i) {
        const std::uint64_t seed = args.seed + i;
        try {
            SamplerConfig cfg;
            cfg.steps = args.steps;
            cfg.eta = args.eta;
            cfg.seed = seed;
            cfg.shape = shape;
            GenerationStats stats;
            Volume v = generate(*model.denoiser, model.schedule, cfg, &stats);
            if (to_u16) {
                for (float& x : v.data()) {
                    const double stored = x * model.intensity_scale + model.intensity_offset;
                    x = static_cast<float>(std::round(std::clamp(stored, 0.0, 65535.0)));
                }
                v.set_dtype(DType::U16);
            }
            const std::string stem = "sample_" + std::to_string(seed);
            write_nifti(v, args.out_dir / (stem + ".nii"));
            nlohmann::json side;
            side["seed"] = seed;
            side["steps"] = args.steps;
            side["eta"] = args.eta;
            side["kind"] = std::string(to_string(model.denoiser->kind()));
            side["schedule"] = model.schedule;
            side["weights"] = fs::absolute(args.weights).string();
            side["shape"] = dims_json(shape);
            side["min"] = stats.min;
            side["max"] = stats.max;
            std::ofstream(args.out_dir / (stem + ".json")) << side.dump(2) << '\n';
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    });

    std::size_t failed = 0;
    for (std::size_t i = 0; i < failures.size(); ++i) {
        if (!failures[i].empty()) {
            ++failed;
            log << "error: seed " << args.seed + i << ": " << failures[i] << '\n';
        }
    }
    write_run_manifest(args.out_dir / "run_manifest.json", "generate", argv,
                       {{"weights", fs::absolute(args.weights).string()},
                        {"out_dir", fs::absolute(args.out_dir).string()},
                        {"count", args.count},
                        {"steps", args.steps},
                        {"eta", args.eta},
                        {"seed", args.seed},
                        {"shape", dims_json(shape)},
                        {"failed", failed}});
    log << "generated " << args.count - static_cast<int>(failed) << " of " << args.count << " volumes\n";
    return failed > 0 ? exit_partial : exit_ok;
}

// ----------------------------------------------------------------------- fid

NamedPath parse_named_path(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
        fs::path p(text);
        const std::string name = p.has_filename() ? p.filename().string() : p.parent_path().filename().string();
        return {name, p};
    }
    if (eq == 0 || eq + 1 == text.size()) {
        throw UsageError("expected name=path, got '" + text + "'");
    }
    return {text.substr(0, eq), fs::path(text.substr(eq + 1))};
}

std::vector<std::optional<double>> FidTable::average() const {
    std::vector<std::optional<double>> avg(columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& row : values) {
            if (row[c]) {
                sum += *row[c];
                ++n;
            }
        }
        if (n > 0) avg[c] = sum / static_cast<double>(n);
    }
    return avg;
}

void write_fid_csv(std::ostream& os, const FidTable& table) {
    os << "reference";
    for (const auto& c : table.columns) os << ',' << c;
    os << '\n';
    auto cells = [&os](const std::vector<std::optional<double>>& row) {
        for (const auto& v : row) {
            os << ',';
            if (v) os << fixed(*v, 6);
        }
        os << '\n';
    };
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        os << table.rows[r];
        cells(table.values[r]);
    }
    os << "Average";
    cells(table.average());
}

std::string render_fid_table(const FidTable& table) {
    std::vector<std::vector<std::string>> grid;
    grid.push_back({"Reference Dataset"});
    grid.back().insert(grid.back().end(), table.columns.begin(), table.columns.end());
    auto add = [&](const std::string& name, const std::vector<std::optional<double>>& row) {
        grid.push_back({name});
        for (const auto& v : row) grid.back().push_back(v ? fixed(*v, 2) : "-");
    };
    for (std::size_t r = 0; r < table.rows.size(); ++r) add(table.rows[r], table.values[r]);
    add("Average", table.average());
    std::vector<std::size_t> width(grid.front().size(), 0);
    for (const auto& row : grid)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    std::ostringstream os;
    for (std::size_t r = 0; r < grid.size(); ++r) {
        if (r == grid.size() - 1) {
            for (std::size_t c = 0; c < width.size(); ++c) os << std::string(width[c] + (c ? 2 : 0), '-');
            os << '\n';
        }
        for (std::size_t c = 0; c < grid[r].size(); ++c) {
            if (c == 0) os << std::left << std::setw(static_cast<int>(width[c])) << grid[r][c];
            else os << "  " << std::right << std::setw(static_cast<int>(width[c])) << grid[r][c];
        }
        os << '\n';
    }
    return os.str();
}

int run_eval_fid(const FidArgs& args, const std::vector<std::string>& argv, std::ostream& log) {
    if (args.real.empty()) throw UsageError("fid needs at least one --real group");
    std::vector<NamedPath> groups = args.real;
    groups.insert(groups.end(), args.synth.begin(), args.synth.end());
    for (const auto& [name, path] : groups) require_exists(path, ("group " + name).c_str());
    ensure_dir(args.out_dir);

    struct GroupStats {
        FeatureStats stats;
        std::size_t volumes = 0;
        std::size_t slices = 0;
        std::string extractor;
        std::string error;
    };
    std::vector<GroupStats> fitted(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const fs::path& path = groups[g].second;
        GroupStats& out = fitted[g];
        try {
            FeatureMatrix features;
            if (is_feature_file(path)) {
                features = read_feature_file(path);
            } else {
                const auto files = collect_volumes(path);
                std::vector<FeatureMatrix> per_file(files.size());
                std::vector<std::string> errors(files.size());
                parallel_for(files.size(), [&](std::size_t i) {
                    try {
                        per_file[i] = extract_features(extract_slices(read_nifti(files[i]), args.slice_mm),
                                                       projection_extractor_id, args.projection_seed);
                    } catch (const std::exception& e) {
                        errors[i] = files[i].string() + ": " + e.what();
                    }
                });
                for (const auto& e : errors) {
                    if (!e.empty()) throw std::runtime_error(e);
                }
                features.cols = projection_dim;
                features.extractor = std::string(projection_extractor_id);
                for (const auto& f : per_file) {
                    features.rows += f.rows;
                    features.values.insert(features.values.end(), f.values.begin(), f.values.end());
                }
                out.volumes = files.size();
            }
            out.slices = features.rows;
            out.extractor = features.extractor;
            out.stats = fit_stats(features);
        } catch (const std::exception& e) {
            out.error = e.what();
        }
    }

    FidTable table;
    for (const auto& g : args.real) table.rows.push_back(g.first);
    for (const auto& g : groups) table.columns.push_back(g.first);
    bool failed = false;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (!fitted[g].error.empty()) {
            failed = true;
            log << "error: group " << groups[g].first << ": " << fitted[g].error << '\n';
        }
    }
    std::set<std::string> extractors;
    for (const auto& f : fitted)
        if (f.error.empty()) extractors.insert(f.extractor);
    if (extractors.size() > 1) {
        log << "error: groups use different feature extractors\n";
        failed = true;
    }
    for (std::size_t r = 0; r < args.real.size(); ++r) {
        std::vector<std::optional<double>> row(groups.size());
        for (std::size_t c = 0; c < groups.size(); ++c) {
            if (c == r || !fitted[r].error.empty() || !fitted[c].error.empty() || extractors.size() > 1) continue;
            try {
                row[c] = frechet_distance(fitted[r].stats, fitted[c].stats);
            } catch (const std::exception& e) {
                failed = true;
                log << "error: " << groups[r].first << " vs " << groups[c].first << ": " << e.what() << '\n';
            }
        }
        table.values.push_back(std::move(row));
    }

    std::ofstream csv(args.out_dir / "fid.csv");
    write_fid_csv(csv, table);
    nlohmann::json j;
    j["extractor"] = extractors.size() == 1 ? *extractors.begin() : "";
    j["projection_seed"] = args.projection_seed;
    j["slice_mm"] = args.slice_mm;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        j["groups"].push_back({{"name", groups[g].first},
                               {"path", fs::absolute(groups[g].second).string()},
                               {"volumes", fitted[g].volumes},
                               {"slices", fitted[g].slices}});
    }
    auto row_json = [](const std::vector<std::optional<double>>& row) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& v : row) out.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
        return out;
    };
    j["columns"] = table.columns;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        j["rows"].push_back({{"reference", table.rows[r]}, {"fid", row_json(table.values[r])}});
    }
    j["average"] = row_json(table.average());
    std::ofstream(args.out_dir / "fid.json") << j.dump(2) << '\n';
    const std::string rendered = render_fid_table(table);
    std::ofstream(args.out_dir / "fid.txt") << rendered;
    log << rendered;

    nlohmann::json cfg;
    for (const auto& [name, path] : args.real) cfg["real"][name] = fs::absolute(path).string();
    for (const auto& [name, path] : args.synth) cfg["synth"][name] = fs::absolute(path).string();
    cfg["out_dir"] = fs::absolute(args.out_dir).string();
    cfg["projection_seed"] = args.projection_seed;
    cfg["slice_mm"] = args.slice_mm;
    write_run_manifest(args.out_dir / "run_manifest.json", "eval fid", argv, cfg);
    return failed ? exit_partial : exit_ok;
}

// ------------------------------------------------------------------------ ks

int run_eval_ks(const KsArgs& args, const std::vector<std::string>& argv, std::ostream& log) {
    require_exists(args.real_csv, "real regional CSV");
    if (args.synth.empty()) throw UsageError("ks needs at least one --synth table");
    for (const auto& [name, path] : args.synth) require_exists(path, ("synthetic table " + name).c_str());
    ensure_dir(args.out_dir);
    const RegionalTable real = read_regional_csv(args.real_csv);

    PermutationOptions opt;
    opt.repetitions = args.repetitions;
    opt.subsample = args.subsample;
    opt.alpha = args.alpha;
    opt.seed = args.seed;

    bool failed = false;
    nlohmann::json models = nlohmann::json::array();
    std::vector<std::pair<std::string, KsReport>> reports;
    for (const auto& [name, path] : args.synth) {
        try {
            const KsReport rep = permutation_protocol(real.volumes, read_regional_csv(path).volumes, opt);
            std::ofstream csv(args.out_dir / ("ks_" + name + ".csv"));
            write_ks_csv(csv, rep);
            nlohmann::json entry = nlohmann::json::parse(ks_report_json(rep));
            entry["model"] = name;
            models.push_back(entry);
            if (rep.small_sample) log << "warning: " << name << ": asymptotic p-values at small sample size\n";
            reports.emplace_back(name, rep);
        } catch (const std::exception& e) {
            failed = true;
            log << "error: " << name << ": " << e.what() << '\n';
        }
    }

    // Percentage table: one row per model, one column per structure.
    std::vector<std::string> structures;
    for (const auto& s : regional_structures) {
        for (const auto& [name, rep] : reports) {
            const bool has = std::any_of(rep.structures.begin(), rep.structures.end(),
                                         [&](const KsStructureResult& r) { return r.structure == s; });
            if (has) {
                structures.push_back(s);
                break;
            }
        }
    }
    for (const auto& [name, rep] : reports)
        for (const auto& r : rep.structures)
            if (std::find(structures.begin(), structures.end(), r.structure) == structures.end())
                structures.push_back(r.structure);
    std::ofstream table(args.out_dir / "ks_table.csv");
    table << "model";
    for (const auto& s : structures) table << ',' << s;
    table << '\n';
    for (const auto& [name, rep] : reports) {
        table << name;
        log << name << ':';
        for (const auto& s : structures) {
            table << ',';
            for (const auto& r : rep.structures) {
                if (r.structure == s) {
                    table << fixed(100.0 * r.fraction_not_significant, 1);
                    log << ' ' << s << '=' << fixed(100.0 * r.fraction_not_significant, 1) << '%';
                }
            }
        }
        table << '\n';
        log << '\n';
    }
    std::ofstream(args.out_dir / "ks.json") << models.dump(2) << '\n';

    nlohmann::json cfg{{"real", fs::absolute(args.real_csv).string()},
                       {"out_dir", fs::absolute(args.out_dir).string()},
                       {"repetitions", args.repetitions},
                       {"subsample", args.subsample},
                       {"alpha", args.alpha},
                       {"seed", args.seed}};
    for (const auto& [name, path] : args.synth) cfg["synth"][name] = fs::absolute(path).string();
    write_run_manifest(args.out_dir / "run_manifest.json", "eval ks", argv, cfg);
    return failed ? exit_partial : exit_ok;
}

// ------------------------------------------------------------------------ nn

int run_eval_nn(const NnArgs& args, const std::vector<std::string>& argv, std::ostream& log) {
    require_exists(args.queries, "queries");
    require_exists(args.candidates, "candidates");
    if (args.k < 1) throw UsageError("--k must be at least 1");
    ensure_dir(args.out_dir);
    const auto queries = collect_volumes(args.queries);
    const NiftiFileSource source(collect_volumes(args.candidates));
    if (source.size() == 0) throw UsageError("no candidate volumes in " + args.candidates.string());

    std::vector<std::vector<Neighbor>> results(queries.size());
    std::vector<std::string> errors(queries.size());
    parallel_for(queries.size(), [&](std::size_t i) {
        try {
            results[i] = nn_search(read_nifti(queries[i]), source, args.k);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });

    std::ofstream csv(args.out_dir / "nn.csv");
    csv << "query,rank,candidate,mse\n";
    nlohmann::json j = nlohmann::json::array();
    std::size_t failed = 0;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (!errors[i].empty()) {
            ++failed;
            log << "error: " << queries[i].string() << ": " << errors[i] << '\n';
            continue;
        }
        nlohmann::json entry{{"query", queries[i].string()}, {"neighbors", nlohmann::json::array()}};
        for (std::size_t r = 0; r < results[i].size(); ++r) {
            const Neighbor& n = results[i][r];
            csv << queries[i].string() << ',' << r + 1 << ',' << source.path(n.index).string() << ','
                << std::setprecision(17) << n.mse << '\n';
            entry["neighbors"].push_back({{"rank", r + 1}, {"candidate", source.path(n.index).string()}, {"mse", n.mse}});
        }
        j.push_back(entry);
    }
    std::ofstream(args.out_dir / "nn.json") << j.dump(2) << '\n';
    write_run_manifest(args.out_dir / "run_manifest.json", "eval nn", argv,
                       {{"queries", fs::absolute(args.queries).string()},
                        {"candidates", fs::absolute(args.candidates).string()},
                        {"out_dir", fs::absolute(args.out_dir).string()},
                        {"k", args.k},
                        {"failed", failed}});
    log << "searched " << queries.size() - failed << " queries against " << source.size() << " candidates\n";
    return failed > 0 ? exit_partial : exit_ok;
}

// --------------------------------------------------------------------- bench

std::vector<BenchRow> bench_sampler(const Denoiser& denoiser, const NoiseSchedule& schedule,
                                    const Dims& shape, const std::vector<int>& steps, int batch,
                                    int reps, std::uint64_t seed) {
    if (batch < 1 || reps < 1) throw UsageError("batch and reps must be positive");
    std::vector<BenchRow> rows;
    for (int s : steps) {
        if (s < 1 || s > schedule.steps()) throw UsageError("invalid step count " + std::to_string(s));
        BenchRow row;
        row.steps = s;
        for (int r = 0; r < reps; ++r) {
            const auto start = std::chrono::steady_clock::now();
            for (int b = 0; b < batch; ++b) {
                SamplerConfig cfg;
                cfg.steps = s;
                cfg.seed = seed + static_cast<std::uint64_t>(b);
                cfg.shape = shape;
                generate_field(denoiser, schedule, cfg);
            }
            row.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
        }
        std::vector<double> sorted = row.seconds;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t n = sorted.size();
        row.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows, int batch) {
    os << "steps,batch,reps,median_seconds,mmss";
    const std::size_t reps = rows.empty() ? 0 : rows.front().seconds.size();
    for (std::size_t r = 0; r < reps; ++r) os << ",rep" << r + 1 << "_seconds";
    os << '\n';
    for (const BenchRow& row : rows) {
        os << row.steps << ',' << batch << ',' << row.seconds.size() << ',' << fixed(row.median, 6) << ','
           << format_mmss(row.median);
        for (double s : row.seconds) os << ',' << fixed(s, 6);
        os << '\n';
    }
}

std::string render_bench_table(const std::vector<BenchRow>& rows) {
    std::ostringstream os;
    os << std::right << std::setw(5) << "Steps" << "  " << std::setw(7) << "Time" << "  " << std::setw(10)
       << "Seconds" << '\n';
    for (const BenchRow& row : rows) {
        os << std::setw(5) << row.steps << "  " << std::setw(7) << format_mmss(row.median) << "  "
           << std::setw(10) << fixed(row.median, 3) << '\n';
    }
    return os.str();
}

int run_bench(const BenchArgs& args, const std::vector<std::string>& argv, std::ostream& log) {
    require_exists(args.weights, "weights");
    if (args.steps.empty()) throw UsageError("--steps needs at least one value");
    const LoadedModel model = load_model(args.weights);
    ensure_dir(args.out_dir);
    const Dims shape = args.shape.value_or(model.shape);
    const auto rows = bench_sampler(*model.denoiser, model.schedule, shape, args.steps, args.batch, args.reps, args.seed);
    std::ofstream csv(args.out_dir / "bench.csv");
    write_bench_csv(csv, rows, args.batch);
    const std::string table = render_bench_table(rows);
    std::ofstream(args.out_dir / "bench.txt") << table;
    log << table;
    write_run_manifest(args.out_dir / "run_manifest.json", "bench", argv,
                       {{"weights", fs::absolute(args.weights).string()},
                        {"out_dir", fs::absolute(args.out_dir).string()},
                        {"steps", args.steps},
                        {"batch", args.batch},
                        {"reps", args.reps},
                        {"seed", args.seed},
                        {"shape", dims_json(shape)}});
    return exit_ok;
}

}  // namespace neurodiff::cli
