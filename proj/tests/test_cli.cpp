#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "neurodiff/manifest.hpp"
#include "neurodiff/model_io.hpp"
#include "neurodiff/nifti.hpp"
#include "neurodiff/rng.hpp"
#include "neurodiff/sampler.hpp"

using namespace neurodiff;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "neurodiff_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + NEURODIFF_CLI + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Volume blob(Dims d, double seed_shift = 0.0) {
    Volume v(d, Vec3{1.2, 1.2, 1.2});
    v.set_dtype(DType::U16);
    const double cx = d.nx / 2.0 + seed_shift, cy = d.ny / 2.0, cz = d.nz / 2.0;
    for (std::size_t k = 0; k < d.nz; ++k)
        for (std::size_t j = 0; j < d.ny; ++j)
            for (std::size_t i = 0; i < d.nx; ++i) {
                const double r2 = (i - cx) * (i - cx) + (j - cy) * (j - cy) + (k - cz) * (k - cz);
                v.at(i, j, k) = static_cast<float>(std::round(1000.0 * std::exp(-r2 / 18.0)));
            }
    return v;
}

Volume random_volume(Dims d, std::uint64_t seed) {
    Rng rng(seed);
    Volume v(d);
    for (float& x : v.data()) x = static_cast<float>(rng.uniform(0.0, 100.0));
    return v;
}

const std::vector<std::string> no_argv;

}  // namespace

TEST_CASE("preprocess command") {
    const fs::path dir = fresh_dir("preprocess");
    std::ostringstream log;

    SUBCASE("empty manifest") {
        std::ofstream(dir / "empty.jsonl").close();
        cli::PreprocessArgs a;
        a.manifest = dir / "empty.jsonl";
        a.out_dir = dir / "out";
        CHECK(cli::run_preprocess(a, no_argv, log) == cli::exit_ok);
        CHECK(read_manifest(dir / "out" / "manifest.jsonl").empty());
        CHECK(fs::exists(dir / "out" / "run_manifest.json"));
    }
    SUBCASE("valid and corrupt records") {
        write_nifti(blob(Dims{20, 18, 16}), dir / "good.nii");
        std::ofstream(dir / "bad.nii") << "definitely not nifti";
        Manifest m{{"s1", "good.nii", "ADNI", {}, true, {}, {}},
                   {"s2", "bad.nii", "ADNI", {}, true, {}, {}},
                   {"s3", "missing.nii", "ADNI", {}, false, std::string("Pathology"), {}}};
        write_manifest(dir / "m.jsonl", m);
        cli::PreprocessArgs a;
        a.manifest = dir / "m.jsonl";
        a.out_dir = dir / "out";
        CHECK(cli::run_preprocess(a, no_argv, log) == cli::exit_partial);
        const Manifest out = read_manifest(dir / "out" / "manifest.jsonl");
        REQUIRE(out.size() == 1);
        const Volume v = read_nifti(out[0].path);
        CHECK(v.dims() == Dims{192, 224, 192});
        CHECK(v.dtype() == DType::U16);
        CHECK(slurp(dir / "out" / "errors.log").find("bad.nii") != std::string::npos);
        CHECK(fs::exists(dir / "out" / "logs" / "s1_good.log"));
        CHECK(run_cli("preprocess --manifest \"" + (dir / "m.jsonl").string() + "\" --out \"" +
                      (dir / "out2").string() + "\"") == cli::exit_partial);
    }
}

TEST_CASE("split command") {
    const fs::path dir = fresh_dir("split");
    Manifest m;
    for (int s = 0; s < 30; ++s) m.push_back({"a" + std::to_string(s), "x.nii", "OASIS", {}, true, {}, {}});
    for (int s = 0; s < 5; ++s) m.push_back({"b" + std::to_string(s), "y.nii", "AIBL", {}, true, {}, {}});
    write_manifest(dir / "m.jsonl", m);
    cli::SplitArgs a;
    a.manifest = dir / "m.jsonl";
    a.out = dir / "split.jsonl";
    std::ostringstream log;
    CHECK(cli::run_split(a, no_argv, log) == cli::exit_ok);
    const Manifest out = read_manifest(a.out);
    std::size_t test = 0;
    for (const auto& r : out) {
        if (r.dataset == "AIBL") CHECK(*r.split == Split::TestExternal);
        if (*r.split == Split::TestInternal) ++test;
    }
    CHECK(test == 3);
    CHECK(fs::exists(dir / "split.csv"));
    CHECK(fs::exists(dir / "split.run.json"));
}

TEST_CASE("train, generate and bench through the oracle stub") {
    const fs::path dir = fresh_dir("oracle");
    Volume v(Dims{8, 8, 8});
    Rng rng(2);
    for (float& x : v.data()) x = static_cast<float>(0.3 + 0.05 * rng.normal());
    write_nifti(v, dir / "data.nii");
    std::ostringstream log;

    cli::TrainArgs t;
    t.inputs = {dir / "data.nii"};
    t.out_dir = dir / "model";
    t.oracle = true;
    t.kind = PredictionKind::Flow;
    CHECK(cli::run_train(t, no_argv, log) == cli::exit_ok);
    const fs::path weights = dir / "model" / "oracle.weights";
    const LoadedModel model = load_model(weights);
    CHECK(model.header.at("mean").get<double>() == doctest::Approx(0.3).epsilon(0.02));

    cli::GenerateArgs g;
    g.weights = weights;
    g.out_dir = dir / "gen_a";
    g.count = 2;
    g.seed = 40;
    g.steps = 16;
    CHECK(cli::run_generate(g, no_argv, log) == cli::exit_ok);
    g.out_dir = dir / "gen_b";
    CHECK(cli::run_generate(g, no_argv, log) == cli::exit_ok);
    for (const char* name : {"sample_40.nii", "sample_41.nii"}) {
        CHECK(slurp(dir / "gen_a" / name) == slurp(dir / "gen_b" / name));
    }
    CHECK(slurp(dir / "gen_a" / "sample_40.nii") != slurp(dir / "gen_a" / "sample_41.nii"));
    const auto side = nlohmann::json::parse(slurp(dir / "gen_a" / "sample_41.json"));
    CHECK(side.at("seed") == 41);
    CHECK(side.at("steps") == 16);
    CHECK(side.at("kind") == "flow");
    CHECK(side.at("schedule").at("T") == 1000);
    CHECK(side.at("min").get<double>() <= side.at("max").get<double>());

    // Written volume equals the in-process chain at the same seed.
    SamplerConfig cfg;
    cfg.steps = 16;
    cfg.seed = 41;
    cfg.shape = model.shape;
    const Volume direct = generate(*model.denoiser, model.schedule, cfg);
    CHECK(read_nifti(dir / "gen_a" / "sample_41.nii").data() == direct.data());
    double mean = 0.0;
    for (float x : direct.data()) mean += x;
    mean /= static_cast<double>(direct.data().size());
    CHECK(std::abs(mean - model.header.at("mean").get<double>()) < 3.0 * 0.05 / std::sqrt(512.0) * 3.0);

    CHECK(run_cli("generate --weights \"" + weights.string() + "\" --out \"" + (dir / "x").string() + "\" --steps 0") ==
          cli::exit_usage);
    CHECK(run_cli("generate --weights \"" + (dir / "nope.weights").string() + "\" --out \"" + (dir / "x").string() + "\"") ==
          cli::exit_usage);
    std::ofstream(dir / "corrupt.weights") << "{\"format\": \"other\"}\n";
    CHECK(run_cli("generate --weights \"" + (dir / "corrupt.weights").string() + "\" --out \"" +
                  (dir / "x").string() + "\"") == cli::exit_partial);

    cli::BenchArgs b;
    b.weights = weights;
    b.out_dir = dir / "bench";
    b.steps = {4, 8};
    b.reps = 3;
    CHECK(cli::run_bench(b, no_argv, log) == cli::exit_ok);
    const std::string csv = slurp(dir / "bench" / "bench.csv");
    CHECK(csv.rfind("steps,batch,reps,median_seconds,mmss,rep1_seconds,rep2_seconds,rep3_seconds\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(fs::exists(dir / "bench" / "run_manifest.json"));
}

TEST_CASE("bench aggregation and formatting") {
    CHECK(cli::format_mmss(92.0) == "1:32");
    CHECK(cli::format_mmss(5.4) == "0:05");
    CHECK(cli::format_mmss(5784.0) == "96:24");
    CHECK(cli::format_mmss(0.2) == "0:00");
    const NoiseSchedule schedule;
    const GaussianOracle oracle(PredictionKind::Sample, 0.0, 1.0, schedule);
    const auto rows = cli::bench_sampler(oracle, schedule, Dims{4, 4, 4}, {2, 4, 8}, 1, 3, 0);
    REQUIRE(rows.size() == 3);
    for (const auto& r : rows) {
        REQUIRE(r.seconds.size() == 3);
        auto s = r.seconds;
        std::sort(s.begin(), s.end());
        CHECK(r.median == s[1]);
    }
    CHECK(rows[2].steps == 8);
}

TEST_CASE("train command writes loadable unet weights") {
    const fs::path dir = fresh_dir("train");
    for (int i = 0; i < 2; ++i) write_nifti(blob(Dims{8, 8, 8}, i), dir / ("v" + std::to_string(i) + ".nii"));
    cli::TrainArgs t;
    t.inputs = {dir};
    t.out_dir = dir / "model";
    t.epochs = 2;
    t.unet.widths = {2, 2};
    t.unet.time_dim = 4;
    t.kind = PredictionKind::Sample;
    std::ostringstream log;
    CHECK(cli::run_train(t, no_argv, log) == cli::exit_ok);
    CHECK(slurp(dir / "model" / "loss.csv").rfind("epoch,mean_loss,diverged\n", 0) == 0);
    const LoadedModel m = load_model(dir / "model" / "model_ema.weights");
    CHECK(m.header.at("epoch") == 2);
    CHECK(m.intensity_offset == 32767.5);
    const auto run = nlohmann::json::parse(slurp(dir / "model" / "run_manifest.json"));
    CHECK(run.at("command") == "train");
    CHECK(run.at("config").at("epochs") == 2);

    cli::GenerateArgs g;
    g.weights = dir / "model" / "model_ema.weights";
    g.out_dir = dir / "gen";
    g.steps = 4;
    CHECK(cli::run_generate(g, no_argv, log) == cli::exit_ok);
    const Volume out = read_nifti(dir / "gen" / "sample_0.nii");
    CHECK(out.dtype() == DType::U16);
    CHECK(out.dims() == Dims{8, 8, 8});
}

TEST_CASE("fid command") {
    const fs::path dir = fresh_dir("fid");
    for (int i = 0; i < 3; ++i) {
        fs::create_directories(dir / "train");
        fs::create_directories(dir / "test");
        write_nifti(random_volume(Dims{16, 16, 16}, 10 + i), dir / "train" / ("v" + std::to_string(i) + ".nii"));
        write_nifti(random_volume(Dims{16, 16, 16}, 20 + i), dir / "test" / ("v" + std::to_string(i) + ".nii"));
    }
    cli::FidArgs a;
    a.real = {{"Training Data", dir / "train"}, {"Test Data", dir / "test"}};
    a.synth = {{"Copy", dir / "train"}};
    a.out_dir = dir / "out";
    std::ostringstream log;
    CHECK(cli::run_eval_fid(a, no_argv, log) == cli::exit_ok);
    const auto j = nlohmann::json::parse(slurp(dir / "out" / "fid.json"));
    CHECK(j.at("extractor") == "randproj-pool8-d64");
    CHECK(j.at("groups").at(0).at("slices") == 3 * 12);
    const auto& first = j.at("rows").at(0).at("fid");
    CHECK(first.at(0).is_null());
    CHECK(first.at(1).get<double>() > 0.0);
    CHECK(std::abs(first.at(2).get<double>()) < 1e-8);
    CHECK(slurp(dir / "out" / "fid.csv").find("Average") != std::string::npos);
}

TEST_CASE("fid average row follows the published table") {
    // Published FIDs: reference rows against Training (Int.), Test (Int.),
    // Test (Ext.), Sample, Velocity, Flow.
    cli::FidTable t;
    t.rows = {"Training Data", "Test Data (Int.)", "Test Data (Ext.)"};
    t.columns = {"Training Data (Int.)", "Test Data (Int.)", "Test Data (Ext.)", "Sample", "Velocity", "Flow"};
    t.values = {{std::nullopt, 0.11, 10.05, 81.82, 43.14, 38.53},
                {0.11, std::nullopt, 10.31, 81.62, 42.99, 38.35},
                {10.05, 10.31, std::nullopt, 94.61, 56.02, 52.78}};
    const auto avg = t.average();
    CHECK(*avg[0] == doctest::Approx(5.08).epsilon(0.005 / 5.08));
    CHECK(*avg[1] == doctest::Approx(5.21).epsilon(0.005 / 5.21));
    CHECK(*avg[3] == doctest::Approx(86.02).epsilon(0.005 / 86.02));
    CHECK(*avg[4] == doctest::Approx(47.38).epsilon(0.005 / 47.38));
    CHECK(*avg[5] == doctest::Approx(43.22).epsilon(0.005 / 43.22));
    // The published External column average (5.21) repeats the Internal one;
    // the mean of its two entries is 10.18.
    CHECK(*avg[2] == doctest::Approx(10.18).epsilon(1e-12));
    const std::string text = cli::render_fid_table(t);
    CHECK(text.find("Average") != std::string::npos);
    CHECK(text.find("86.02") != std::string::npos);
}

TEST_CASE("ks command is deterministic") {
    const fs::path dir = fresh_dir("ks");
    auto write_table = [](const fs::path& p, std::size_t n, double shift, std::uint64_t seed) {
        Rng rng(seed);
        std::ofstream os(p);
        os << "volume_id,structure,mm3\n";
        for (std::size_t i = 0; i < n; ++i) {
            os << "v" << i << ",thalamus," << 7000 + 300 * rng.normal() + shift << '\n';
            os << "v" << i << ",putamen," << 5000 + 200 * rng.normal() << '\n';
        }
    };
    write_table(dir / "real.csv", 300, 0.0, 1);
    write_table(dir / "velocity.csv", 100, 0.0, 2);
    write_table(dir / "sample.csv", 100, 3000.0, 3);
    cli::KsArgs a;
    a.real_csv = dir / "real.csv";
    a.synth = {{"Sample", dir / "sample.csv"}, {"Velocity", dir / "velocity.csv"}};
    a.repetitions = 50;
    a.subsample = 100;
    a.seed = 5;
    std::ostringstream log;
    a.out_dir = dir / "a";
    CHECK(cli::run_eval_ks(a, no_argv, log) == cli::exit_ok);
    a.out_dir = dir / "b";
    CHECK(cli::run_eval_ks(a, no_argv, log) == cli::exit_ok);
    CHECK(slurp(dir / "a" / "ks_table.csv") == slurp(dir / "b" / "ks_table.csv"));
    CHECK(slurp(dir / "a" / "ks.json") == slurp(dir / "b" / "ks.json"));
    const std::string table = slurp(dir / "a" / "ks_table.csv");
    CHECK(table.rfind("model,thalamus,putamen\nSample,0.0,", 0) == 0);
}

TEST_CASE("nn command") {
    const fs::path dir = fresh_dir("nn");
    fs::create_directories(dir / "train");
    fs::create_directories(dir / "query");
    for (int i = 0; i < 4; ++i) write_nifti(random_volume(Dims{6, 6, 6}, 30 + i), dir / "train" / ("t" + std::to_string(i) + ".nii"));
    write_nifti(random_volume(Dims{6, 6, 6}, 32), dir / "query" / "q.nii");
    cli::NnArgs a;
    a.queries = dir / "query";
    a.candidates = dir / "train";
    a.out_dir = dir / "out";
    std::ostringstream log;
    CHECK(cli::run_eval_nn(a, no_argv, log) == cli::exit_ok);
    const auto j = nlohmann::json::parse(slurp(dir / "out" / "nn.json"));
    REQUIRE(j.size() == 1);
    REQUIRE(j[0].at("neighbors").size() == 2);
    CHECK(j[0]["neighbors"][0]["mse"] == 0.0);
    CHECK(j[0]["neighbors"][0]["candidate"].get<std::string>().find("t2.nii") != std::string::npos);
}

TEST_CASE("usage errors exit with 2") {
    CHECK(run_cli("") == cli::exit_usage);
    CHECK(run_cli("frobnicate") == cli::exit_usage);
    CHECK(run_cli("generate --out /tmp/x") == cli::exit_usage);
    CHECK(run_cli("train --data /tmp --out /tmp/x --kind epsilon") == cli::exit_usage);
    CHECK(run_cli("--help") == cli::exit_ok);
    CHECK(run_cli("--version") == cli::exit_ok);
}

TEST_CASE("worker count comes from the environment") {
    setenv("NEURODIFF_WORKERS", "3", 1);
    CHECK(cli::worker_count() == 3);
    setenv("NEURODIFF_WORKERS", "zero", 1);
    CHECK(cli::worker_count() >= 1);
    unsetenv("NEURODIFF_WORKERS");
}

TEST_CASE("named paths") {
    CHECK(cli::parse_named_path("Flow=/data/flow") == cli::NamedPath{"Flow", "/data/flow"});
    CHECK(cli::parse_named_path("/data/velocity").first == "velocity");
    CHECK_THROWS_AS(cli::parse_named_path("=x"), cli::UsageError);
}
