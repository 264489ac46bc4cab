#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "neurodiff/error.hpp"

namespace cli = neurodiff::cli;
using neurodiff::Dims;

namespace {

std::optional<Dims> to_dims(const std::vector<std::size_t>& v) {
    if (v.empty()) return std::nullopt;
    return Dims{v[0], v[1], v[2]};
}

neurodiff::PredictionKind kind_option(const std::string& text) {
    return neurodiff::parse_prediction_kind(text);
}

std::vector<cli::NamedPath> named(const std::vector<std::string>& items) {
    std::vector<cli::NamedPath> out;
    for (const auto& s : items) out.push_back(cli::parse_named_path(s));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Volumetric diffusion toolkit: preprocessing, training, generation and evaluation"};
    app.set_version_flag("--version", std::string("neurodiff ") + cli::tool_version);
    app.require_subcommand(1);
    const std::vector<std::string> kinds{"sample", "velocity", "flow"};
    std::vector<std::string> args_copy(argv + 1, argv + argc);

    // preprocess
    cli::PreprocessArgs pre;
    std::vector<std::size_t> pre_shape;
    auto* preprocess = app.add_subcommand("preprocess", "Reorient, resample, pad/crop and quantize every manifest record");
    preprocess->add_option("--manifest", pre.manifest, "JSON-lines manifest")->required()->check(CLI::ExistingFile);
    preprocess->add_option("--out,--out-dir", pre.out_dir, "Output directory")->required();
    preprocess->add_option("--target-mm", pre.target_mm, "Isotropic voxel size")->check(CLI::PositiveNumber);
    preprocess->add_option("--shape", pre_shape, "Output grid nx,ny,nz")->expected(3)->delimiter(',');

    // split
    cli::SplitArgs split;
    auto* split_cmd = app.add_subcommand("split", "Subject-level train/test split");
    split_cmd->add_option("--manifest", split.manifest, "JSON-lines manifest")->required()->check(CLI::ExistingFile);
    split_cmd->add_option("--out", split.out, "Output JSON-lines manifest")->required();
    split_cmd->add_option("--test-fraction", split.test_fraction, "Per-dataset test share")->check(CLI::Range(0.0, 1.0));
    split_cmd->add_option("--withheld", split.withheld, "Datasets held out entirely")->delimiter(',');
    split_cmd->add_option("--seed", split.seed, "Shuffle seed");

    // train
    cli::TrainArgs tr;
    std::string train_kind = "velocity";
    bool no_augment = false;
    auto* train_cmd = app.add_subcommand("train", "Train the small 3D U-Net");
    train_cmd->add_option("--data", tr.inputs, "Directories, NIfTI files or manifests")->required()->check(CLI::ExistingPath);
    train_cmd->add_option("--out,--out-dir", tr.out_dir, "Output directory")->required();
    train_cmd->add_option("--kind", train_kind, "Prediction target")->check(CLI::IsMember(kinds));
    train_cmd->add_option("--epochs", tr.epochs, "Epoch count")->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", tr.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
    train_cmd->add_option("--batch", tr.batch_size, "Batch size")->check(CLI::PositiveNumber);
    train_cmd->add_option("--seed", tr.seed, "Seed");
    train_cmd->add_option("--widths", tr.unet.widths, "Channel width per level")->delimiter(',');
    train_cmd->add_option("--blocks", tr.unet.blocks_per_level, "Blocks per level")->check(CLI::PositiveNumber);
    train_cmd->add_option("--time-dim", tr.unet.time_dim, "Time embedding size")->check(CLI::PositiveNumber);
    train_cmd->add_option("--ema", tr.ema_momentum, "EMA momentum")->check(CLI::Range(0.0, 1.0));
    train_cmd->add_flag("--no-augment", no_augment, "Disable rigid augmentation");
    std::string train_model = "unet";
    train_cmd->add_option("--model", train_model, "unet, or oracle for a fitted Gaussian stub")
        ->check(CLI::IsMember({"unet", "oracle"}));

    // generate
    cli::GenerateArgs gen;
    std::vector<std::size_t> gen_shape;
    auto* generate = app.add_subcommand("generate", "Sample volumes with DDIM");
    generate->add_option("--weights", gen.weights, "Weights file")->required()->check(CLI::ExistingFile);
    generate->add_option("--out,--out-dir", gen.out_dir, "Output directory")->required();
    generate->add_option("--count", gen.count, "Number of volumes")->check(CLI::PositiveNumber);
    generate->add_option("--steps", gen.steps, "DDIM steps")->check(CLI::PositiveNumber);
    generate->add_option("--eta", gen.eta, "DDIM stochasticity")->check(CLI::Range(0.0, 1.0));
    generate->add_option("--seed", gen.seed, "First seed");
    generate->add_option("--shape", gen_shape, "Override grid nx,ny,nz")->expected(3)->delimiter(',');

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluation reports");
    eval->require_subcommand(1);

    cli::FidArgs fid;
    std::vector<std::string> fid_real;
    std::vector<std::string> fid_synth;
    auto* fid_cmd = eval->add_subcommand("fid", "Frechet distance table over triplanar slice features");
    fid_cmd->add_option("--real", fid_real, "Reference group name=dir|features")->required();
    fid_cmd->add_option("--synth", fid_synth, "Synthetic group name=dir|features");
    fid_cmd->add_option("--out,--out-dir", fid.out_dir, "Output directory")->required();
    fid_cmd->add_option("--seed", fid.projection_seed, "Projection seed");
    fid_cmd->add_option("--slice-mm", fid.slice_mm, "Slice spacing")->check(CLI::PositiveNumber);

    cli::KsArgs ks;
    std::vector<std::string> ks_synth;
    auto* ks_cmd = eval->add_subcommand("ks", "KS permutation protocol over regional volumes");
    ks_cmd->add_option("--real", ks.real_csv, "Real regional CSV")->required();
    ks_cmd->add_option("--synth", ks_synth, "Synthetic regional CSV as name=path")->required();
    ks_cmd->add_option("--out,--out-dir", ks.out_dir, "Output directory")->required();
    ks_cmd->add_option("--reps", ks.repetitions, "Repetitions")->check(CLI::PositiveNumber);
    ks_cmd->add_option("--subsample", ks.subsample, "Real volumes per repetition")->check(CLI::PositiveNumber);
    ks_cmd->add_option("--alpha", ks.alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
    ks_cmd->add_option("--seed", ks.seed, "Seed");

    cli::NnArgs nn;
    auto* nn_cmd = eval->add_subcommand("nn", "Nearest training volumes by voxel MSE");
    nn_cmd->add_option("--query", nn.queries, "Query directory or file")->required();
    nn_cmd->add_option("--candidates", nn.candidates, "Candidate directory or manifest")->required();
    nn_cmd->add_option("--out,--out-dir", nn.out_dir, "Output directory")->required();
    nn_cmd->add_option("--k", nn.k, "Neighbours per query")->check(CLI::PositiveNumber);

    // bench
    cli::BenchArgs bench;
    std::vector<std::size_t> bench_shape;
    auto* bench_cmd = app.add_subcommand("bench", "Time single-sample generation per step count");
    bench_cmd->add_option("--weights", bench.weights, "Weights file")->required()->check(CLI::ExistingFile);
    bench_cmd->add_option("--out,--out-dir", bench.out_dir, "Output directory")->required();
    bench_cmd->add_option("--steps", bench.steps, "Step counts")->delimiter(',')->check(CLI::PositiveNumber);
    bench_cmd->add_option("--batch", bench.batch, "Samples per timing")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--reps", bench.reps, "Repetitions (median reported)")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--seed", bench.seed, "Seed");
    bench_cmd->add_option("--shape", bench_shape, "Override grid nx,ny,nz")->expected(3)->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? cli::exit_ok : cli::exit_usage;
    }

    try {
        if (*preprocess) {
            if (auto d = to_dims(pre_shape)) pre.shape = *d;
            return cli::run_preprocess(pre, args_copy, std::cout);
        }
        if (*split_cmd) return cli::run_split(split, args_copy, std::cout);
        if (*train_cmd) {
            tr.kind = kind_option(train_kind);
            tr.augment = !no_augment;
            tr.oracle = train_model == "oracle";
            return cli::run_train(tr, args_copy, std::cout);
        }
        if (*generate) {
            gen.shape = to_dims(gen_shape);
            return cli::run_generate(gen, args_copy, std::cout);
        }
        if (*fid_cmd) {
            fid.real = named(fid_real);
            fid.synth = named(fid_synth);
            return cli::run_eval_fid(fid, args_copy, std::cout);
        }
        if (*ks_cmd) {
            ks.synth = named(ks_synth);
            return cli::run_eval_ks(ks, args_copy, std::cout);
        }
        if (*nn_cmd) return cli::run_eval_nn(nn, args_copy, std::cout);
        if (*bench_cmd) {
            bench.shape = to_dims(bench_shape);
            return cli::run_bench(bench, args_copy, std::cout);
        }
    } catch (const cli::UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return cli::exit_usage;
    } catch (const neurodiff::Error& e) {
        std::cerr << "error [" << neurodiff::to_string(e.code()) << "]: " << e.what() << '\n';
        return cli::exit_partial;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::exit_partial;
    }
    return cli::exit_usage;
}
