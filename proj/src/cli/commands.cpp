#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

#include "tcagcn/cli.hpp"

namespace tcagcn::cli {

namespace fs = std::filesystem;

net::NetworkConfig network_for(const net::LabeledDataset& data, double width_scale)
{
    net::NetworkConfig cfg;
    cfg.in_channels = data.samples.at(0).dim(2);
    cfg.num_classes = data.num_classes;
    cfg.blocks = net::channel_plan(cfg.in_channels, width_scale);
    return cfg;
}

namespace {

net::LabeledDataset load_stream(const std::string& path, const std::string& stream)
{
    if (path.empty()) throw ValidationError("no dataset given");
    return net::derive_stream(net::load_dataset(path), net::stream_from_name(stream));
}

void log_epoch(std::ostream& log, const std::string& tag, const net::EpochMetrics& m)
{
    log << tag << " epoch " << m.epoch << " lr " << m.lr << " loss " << m.loss << " train_acc " << m.train_acc
        << " eval_acc " << m.eval_acc << '\n';
}

}  // namespace

TrainOutcome cmd_train(const RunConfig& config, std::ostream& log)
{
    config.validate();
    auto train_set = load_stream(config.dataset, config.stream);
    std::optional<net::LabeledDataset> eval_set;
    if (!config.eval_dataset.empty()) eval_set = load_stream(config.eval_dataset, config.stream);

    net::Model model(network_for(train_set, config.width_scale), train_set.graph, config.seed);
    auto schedule = config.schedule;
    schedule.seed = config.seed;
    auto history = net::train(model, train_set, eval_set ? &*eval_set : nullptr, schedule,
                              [&](const net::EpochMetrics& m) { log_epoch(log, config.stream, m); });

    fs::create_directories(config.out_dir);
    TrainOutcome out{fs::path(config.out_dir) / "checkpoint.json", fs::path(config.out_dir) / "metrics.csv",
                     std::move(history)};
    net::save_checkpoint(out.checkpoint, model);
    net::write_metrics_csv(out.metrics, out.history);
    return out;
}

double cmd_eval(const fs::path& checkpoint, const fs::path& dataset, const std::string& stream)
{
    auto model = net::load_checkpoint(checkpoint);
    auto data = load_stream(dataset.string(), stream);
    if (data.graph.num_joints() != model.graph().num_joints()) {
        throw ShapeError("dataset has " + std::to_string(data.graph.num_joints()) + " joints, checkpoint expects " +
                         std::to_string(model.graph().num_joints()));
    }
    return net::evaluate_accuracy(model, data);
}

std::vector<fs::path> cmd_scores(const RunConfig& config, std::ostream& log)
{
    config.validate();
    auto train_raw = net::load_dataset(config.dataset);
    std::optional<net::LabeledDataset> eval_raw;
    if (!config.eval_dataset.empty()) eval_raw = net::load_dataset(config.eval_dataset);

    fs::create_directories(config.out_dir);
    std::vector<fs::path> written;
    for (std::size_t i = 0; i < config.streams.size(); ++i) {
        const auto stream = net::stream_from_name(config.streams[i]);
        auto train_set = net::derive_stream(train_raw, stream);
        std::optional<net::LabeledDataset> eval_set;
        if (eval_raw) eval_set = net::derive_stream(*eval_raw, stream);

        // Independent initialization and shuffling per stream.
        const std::uint64_t seed = config.seed + 1000 * (i + 1);
        net::Model model(network_for(train_set, config.width_scale), train_set.graph, seed);
        auto schedule = config.schedule;
        schedule.seed = seed;
        const std::string name = net::stream_name(stream);
        auto history = net::train(model, train_set, eval_set ? &*eval_set : nullptr, schedule,
                                  [&](const net::EpochMetrics& m) { log_epoch(log, name, m); });
        net::write_metrics_csv(fs::path(config.out_dir) / ("metrics_" + name + ".csv"), history);
        net::save_checkpoint(fs::path(config.out_dir) / ("checkpoint_" + name + ".json"), model);

        auto scores = net::predict_scores(model, eval_set ? *eval_set : train_set, name);
        auto path = fs::path(config.out_dir) / ("scores_" + name + ".csv");
        fusion::write_scores_csv(path, scores);
        written.push_back(path);
    }
    return written;
}

nlohmann::json cmd_fuse(const FuseSettings& settings, std::size_t threads)
{
    if (settings.scores.size() != 4) throw ValidationError("fuse needs exactly four score files");
    std::array<fusion::ScoreMatrix, 4> streams;
    for (std::size_t i = 0; i < 4; ++i) {
        streams[i] = fusion::read_scores_csv(settings.scores[i], fs::path(settings.scores[i]).stem().string());
    }
    fusion::check_aligned(streams);

    nlohmann::json out;
    if (settings.mode == "static") {
        const auto w = settings.preset.value_or(fusion::Weights{1.0, 1.0, 1.0, 1.0});
        auto r = fusion::static_fuse(streams, w);
        out = {{"weights", {{"a", w.a}, {"b", w.b}, {"c", w.c}, {"d", w.d}}},
               {"accuracy", r.accuracy},
               {"right", r.right},
               {"zong", r.zong}};
    } else if (settings.mode == "greedy") {
        out = fusion::result_to_json(fusion::solve_greedy(streams, settings.step, settings.preset));
    } else if (settings.mode == "exact") {
        out = fusion::result_to_json(fusion::solve(streams, settings.step, threads));
    } else {
        throw ValidationError("unknown fuse mode '" + settings.mode + "'");
    }
    out["mode"] = settings.mode;
    out["step"] = settings.step;
    nlohmann::json singles = nlohmann::json::object();
    for (const auto& s : streams) {
        std::size_t right = 0;
        for (std::size_t i = 0; i < s.num_samples(); ++i) {
            auto row = s.row(i);
            right += std::max_element(row.begin(), row.end()) - row.begin() == s.labels[i];
        }
        singles[s.stream_id] = static_cast<double>(right) / static_cast<double>(s.num_samples());
    }
    out["single_stream_accuracy"] = singles;
    return out;
}

GradcheckReport cmd_gradcheck(std::uint64_t seed, bool corrupt_backward)
{
    const std::vector<graph::Edge> edges{{0, 1}, {1, 2}, {1, 3}, {3, 4}};
    auto g = graph::SkeletonGraph::build(edges, 5, 1);

    net::NetworkConfig cfg;
    cfg.in_channels = 3;
    cfg.num_classes = 3;
    cfg.blocks = {{3, 8, 1}, {8, 8, 2}};
    net::Model model(cfg, g, seed);

    // Move every parameter off its initialization: alpha and the last
    // calibration layer start at zero, where their gradients vanish.
    std::mt19937_64 rng(seed + 1);
    std::uniform_real_distribution<double> shift(-0.3, 0.3);
    auto params = model.parameters();
    for (auto& [name, p] : params)
        for (auto& v : p.mutable_data()) v += shift(rng);

    const Tensor batch = Tensor::uniform({3, 8, 5, 3}, -1.0, 1.0, rng);
    const std::vector<int> labels{0, 1, 2};
    auto loss = [&] { return cross_entropy(model.forward(batch, Mode::train), labels); };

    testing_hooks::set_corrupt_backward(corrupt_backward);
    GradcheckReport report;
    try {
        report.groups = gradcheck_params(loss, params, net::parameter_group);
    } catch (...) {
        testing_hooks::set_corrupt_backward(false);
        throw;
    }
    testing_hooks::set_corrupt_backward(false);
    for (const auto& grp : report.groups) report.max_rel_error = std::max(report.max_rel_error, grp.max_rel_error);
    report.passed = report.max_rel_error < kGradTolerance;
    return report;
}

void print_gradcheck(std::ostream& out, const GradcheckReport& report)
{
    char line[160];
    std::snprintf(line, sizeof line, "%-24s %8s %14s\n", "group", "count", "max_rel_error");
    out << line;
    for (const auto& g : report.groups) {
        std::snprintf(line, sizeof line, "%-24s %8zu %14.3e%s\n", g.group.c_str(), g.count, g.max_rel_error,
                      g.max_rel_error < kGradTolerance ? "" : "  FAIL");
        out << line;
    }
    std::snprintf(line, sizeof line, "max %.3e (tolerance %.0e): %s\n", report.max_rel_error, kGradTolerance,
                  report.passed ? "pass" : "fail");
    out << line;
}

void write_matrix_csv(const fs::path& path, std::size_t rows, std::size_t cols, const std::vector<double>& values)
{
    if (values.size() != rows * cols) throw ShapeError("matrix CSV: value count does not match shape");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    char buf[32];
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", values[r * cols + c]);
            out << (c ? "," : "") << buf;
        }
        out << '\n';
    }
}

std::vector<std::vector<double>> read_matrix_csv(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            std::size_t pos = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &pos);
            } catch (const std::exception&) {
                pos = std::string::npos;
            }
            if (pos != cell.size()) throw ValidationError(path.string() + ": malformed number '" + cell + "'");
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows[0].size()) throw ValidationError(path.string() + ": ragged rows");
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<fs::path> cmd_inspect(const fs::path& checkpoint, const fs::path& dataset, const std::string& sample_id,
                                  const std::string& stream, const fs::path& out_dir)
{
    auto model = net::load_checkpoint(checkpoint);
    auto data = load_stream(dataset.string(), stream);
    auto it = std::find(data.ids.begin(), data.ids.end(), sample_id);
    if (it == data.ids.end()) throw ValidationError("unknown sample '" + sample_id + "'");
    const std::size_t idx = static_cast<std::size_t>(it - data.ids.begin());
    const std::size_t one[1] = {idx};
    const Tensor batch = net::stack_batch(data, one);
    if (batch.dim(2) != model.graph().num_joints() || batch.dim(3) != model.config().in_channels) {
        throw ShapeError("sample " + sample_id + " has shape " + shape_str(data.samples[idx].shape()) +
                         ", checkpoint expects " + std::to_string(model.graph().num_joints()) + " joints");
    }

    auto& block = model.blocks().at(0);
    const auto& parts = model.partitions();
    const Tensor x = batch_norm(batch, model.input_bn(), Mode::eval);
    const std::size_t T = x.dim(1), N = x.dim(2), C1 = block.spec.out_channels;

    fs::create_directories(out_dir);
    std::vector<fs::path> written;
    for (std::size_t k = 0; k < graph::PartitionedAdjacency::kSubsets; ++k) {
        const auto& p = block.tca[k];
        Tensor s = tca::refine_topology(tca::correlation_model(x, p), parts.normalized[k], p.alpha);
        auto sd = s.data();
        for (std::size_t c = 0; c < C1; ++c) {
            std::vector<double> m(N * N);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t j = 0; j < N; ++j) m[n * N + j] = sd[(n * N + j) * C1 + c];
            auto path = out_dir / ("topology_k" + std::to_string(k + 1) + "_c" + std::to_string(c) + ".csv");
            write_matrix_csv(path, N, N, m);
            written.push_back(path);
        }
    }

    Tensor alpha_t = tca::calibration(x, block.tca[0]);
    auto calib_path = out_dir / "calibration.csv";
    write_matrix_csv(calib_path, T, C1, {alpha_t.data().begin(), alpha_t.data().end()});
    written.push_back(calib_path);

    Tensor y = net::tcaf_block(x, block, parts, Mode::eval);
    const std::size_t Ty = y.dim(1), Cy = y.dim(3);
    auto yd = y.data();
    std::vector<double> mag(Ty * N, 0.0);
    for (std::size_t t = 0; t < Ty; ++t)
        for (std::size_t n = 0; n < N; ++n) {
            double acc = 0.0;
            for (std::size_t c = 0; c < Cy; ++c) acc += yd[(t * N + n) * Cy + c] * yd[(t * N + n) * Cy + c];
            mag[t * N + n] = std::sqrt(acc);
        }
    auto feat_path = out_dir / "joint_features.csv";
    write_matrix_csv(feat_path, Ty, N, mag);
    written.push_back(feat_path);
    return written;
}

}  // namespace tcagcn::cli
