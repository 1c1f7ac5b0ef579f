#include <iostream>

#include <CLI11.hpp>

#include "tcagcn/cli.hpp"

using namespace tcagcn;

namespace {

// Flags that were given on the command line win over the config file.
struct Overrides {
    std::string config;
    std::optional<std::string> dataset, eval_dataset, out_dir, checkpoint, sample_id, stream, graph;
    std::optional<std::vector<std::string>> streams, scores;
    std::optional<double> width_scale, noise, step, target_acc, lr;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs, batch_size, classes, per_class, frames;
    std::optional<std::string> mode;
    std::optional<std::vector<double>> preset;

    cli::RunConfig resolve() const
    {
        cli::RunConfig c = config.empty() ? cli::RunConfig{} : cli::load_config(config);
        if (dataset) c.dataset = *dataset;
        if (eval_dataset) c.eval_dataset = *eval_dataset;
        if (out_dir) c.out_dir = *out_dir;
        if (checkpoint) c.checkpoint = *checkpoint;
        if (sample_id) c.sample_id = *sample_id;
        if (stream) c.stream = *stream;
        if (streams) c.streams = *streams;
        if (width_scale) c.width_scale = *width_scale;
        if (seed) {
            c.seed = *seed;
            c.synth.seed = *seed;
        }
        c.schedule.seed = c.seed;
        if (epochs) c.schedule.epochs = *epochs;
        if (batch_size) c.schedule.batch_size = *batch_size;
        if (lr) c.schedule.base_lr = *lr;
        if (target_acc) c.schedule.target_train_acc = *target_acc;
        if (graph) c.synth.graph = *graph;
        if (noise) c.synth.noise = *noise;
        if (classes) c.synth.num_classes = *classes;
        if (per_class) c.synth.samples_per_class = *per_class;
        if (frames) c.synth.frames = *frames;
        if (scores) c.fuse.scores = *scores;
        if (step) c.fuse.step = *step;
        if (mode) c.fuse.mode = *mode;
        if (preset) {
            if (preset->size() != 4) throw ValidationError("--preset takes four weights a b c d");
            c.fuse.preset = fusion::Weights{(*preset)[0], (*preset)[1], (*preset)[2], (*preset)[3]};
        }
        c.validate();
        return c;
    }
};

void add_common(CLI::App* cmd, Overrides& o)
{
    cmd->add_option("-c,--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "random seed");
}

void add_training(CLI::App* cmd, Overrides& o)
{
    cmd->add_option("--dataset", o.dataset, "training dataset manifest");
    cmd->add_option("--eval-dataset", o.eval_dataset, "evaluation dataset manifest");
    cmd->add_option("--out-dir", o.out_dir, "output directory");
    cmd->add_option("--width-scale", o.width_scale, "multiplier on the 64/128/256 channel plan");
    cmd->add_option("--epochs", o.epochs, "number of epochs");
    cmd->add_option("--batch-size", o.batch_size, "mini-batch size");
    cmd->add_option("--lr", o.lr, "base learning rate");
    cmd->add_option("--target-acc", o.target_acc, "stop once train accuracy reaches this value");
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Skeleton action recognition with temporal-channel aggregation graph convolutions"};
    app.require_subcommand(1);
    Overrides o;
    std::string synth_out;
    bool corrupt = false;

    auto* synth = app.add_subcommand("synth", "generate a synthetic skeleton dataset");
    add_common(synth, o);
    synth->add_option("--out", synth_out, "dataset manifest to write")->required();
    synth->add_option("--graph", o.graph, "graph template name or JSON path");
    synth->add_option("--noise", o.noise, "per-coordinate Gaussian noise sigma");
    synth->add_option("--classes", o.classes, "number of classes");
    synth->add_option("--per-class", o.per_class, "samples per class");
    synth->add_option("--frames", o.frames, "frames per sample");

    auto* train = app.add_subcommand("train", "train one stream and write checkpoint and metrics");
    add_common(train, o);
    add_training(train, o);
    train->add_option("--stream", o.stream, "joint, bone, joint_motion or bone_motion");

    auto* eval = app.add_subcommand("eval", "accuracy of a checkpoint on a dataset");
    add_common(eval, o);
    eval->add_option("--checkpoint", o.checkpoint, "checkpoint manifest");
    eval->add_option("--dataset", o.dataset, "dataset manifest");
    eval->add_option("--stream", o.stream, "input stream");

    auto* scores = app.add_subcommand("scores", "train one model per stream and write score CSVs");
    add_common(scores, o);
    add_training(scores, o);
    scores->add_option("--streams", o.streams, "streams to train");

    auto* fuse = app.add_subcommand("fuse", "search stream weights over four score CSVs");
    add_common(fuse, o);
    fuse->add_option("--scores", o.scores, "four score CSVs in weight order a b c d")->expected(4);
    fuse->add_option("--step", o.step, "grid step");
    fuse->add_option("--mode", o.mode, "exact, greedy or static")
        ->check(CLI::IsMember({"exact", "greedy", "static"}));
    fuse->add_option("--preset", o.preset, "static weights, or greedy start: a b c d")->expected(4);

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every parameter group");
    add_common(gradcheck, o);
    gradcheck->add_flag("--corrupt-backward", corrupt, "test hook: perturb one backward pass");

    auto* inspect = app.add_subcommand("inspect", "dump topologies, calibration and joint features as CSV");
    add_common(inspect, o);
    inspect->add_option("--checkpoint", o.checkpoint, "checkpoint manifest");
    inspect->add_option("--dataset", o.dataset, "dataset manifest");
    inspect->add_option("--sample", o.sample_id, "sample id");
    inspect->add_option("--stream", o.stream, "input stream");
    inspect->add_option("--out-dir", o.out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto cfg = o.resolve();
        if (*synth) {
            cli::cmd_synth(cfg.synth, synth_out);
            std::cout << "wrote " << synth_out << '\n';
        } else if (*train) {
            auto r = cli::cmd_train(cfg, std::cerr);
            std::cout << "checkpoint " << r.checkpoint.string() << "\nmetrics " << r.metrics.string() << '\n';
        } else if (*eval) {
            std::cout << "accuracy " << cli::cmd_eval(cfg.checkpoint, cfg.dataset, cfg.stream) << '\n';
        } else if (*scores) {
            for (const auto& p : cli::cmd_scores(cfg, std::cerr)) std::cout << p.string() << '\n';
        } else if (*fuse) {
            std::cout << cli::cmd_fuse(cfg.fuse, cli::env_threads()).dump(2) << '\n';
        } else if (*gradcheck) {
            auto report = cli::cmd_gradcheck(cfg.seed, corrupt);
            cli::print_gradcheck(std::cout, report);
            return report.passed ? cli::kExitOk : cli::kExitNumerical;
        } else if (*inspect) {
            auto files = cli::cmd_inspect(cfg.checkpoint, cfg.dataset, cfg.sample_id, cfg.stream, cfg.out_dir);
            std::cout << "wrote " << files.size() << " files to " << cfg.out_dir << '\n';
        }
    } catch (const fusion::AlignmentError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        for (const auto& id : ex.offending_ids) std::cerr << "  misaligned: " << id << '\n';
        return cli::kExitValidation;
    } catch (const ValidationError& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return cli::kExitValidation;
    } catch (const NumericalError& ex) {
        std::cerr << "numerical failure: " << ex.what() << '\n';
        return cli::kExitNumerical;
    }
    return cli::kExitOk;
}
