// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "fusion_support.hpp"
#include "support.hpp"
#include "tcagcn/cli.hpp"

using namespace tcagcn;
using namespace tcagcn::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name)
{
    auto dir = fs::temp_directory_path() / ("tcagcn_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Outcome gradient_correctness()
{
    const auto t0 = Clock::now();
    auto report = cli::cmd_gradcheck(1);
    const double dt = seconds_since(t0);
    return {report.passed && dt < 60.0,
            fmt("max rel error %.3e over %zu groups (< 1e-4), %.1f s (< 60 s)", report.max_rel_error,
                report.groups.size(), dt)};
}

tca::TcaParams random_tca(std::size_t C, std::size_t C1, std::mt19937_64& rng)
{
    tca::TcaConfig cfg;
    cfg.in_channels = C;
    cfg.out_channels = C1;
    cfg.corr_reduction = 2;
    cfg.calib_reduction = 2;
    auto p = tca::TcaParams::init(cfg, rng);
    NamedTensors all;
    p.collect("m", all);
    for (auto& [n, t] : all) randomize(t, rng, -0.8, 0.8);
    return p;
}

tf::TfParams random_tf(std::size_t C1, std::mt19937_64& rng)
{
    tf::TfParams p = tf::TfParams::init({C1, 2}, rng);
    NamedTensors params, buffers;
    p.collect("tf", params, buffers);
    for (auto& [n, t] : params) randomize(t, rng, n.find("gamma") != std::string::npos ? 0.5 : -0.8, 1.0);
    return p;
}

Outcome oracle_equivalence()
{
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2);
    double worst = 0.0;
    std::size_t cases = 0;
    for (std::size_t T = 1; T <= 4; ++T)
        for (std::size_t N = 1; N <= 4; ++N)
            for (std::size_t C = 1; C <= 4; ++C)
                for (std::size_t C1 = 1; C1 <= 4; ++C1) {
                    const std::size_t B = 2;
                    auto p = random_tca(C, C1, rng);
                    Tensor x = random_tensor({B, T, N, C}, rng);
                    Tensor alpha_t = random_tensor({B, T, C1}, rng);
                    worst = std::max(worst, max_abs_diff(tca::temporal_aggregate(x, p.w0, alpha_t),
                                                         oracle_temporal_aggregate(x, p.w0, alpha_t)));
                    Tensor a = random_tensor({B, T, N, C1}, rng);
                    Tensor s = random_tensor({B, N, N, C1}, rng);
                    worst = std::max(worst, max_abs_diff(tca::channel_aggregate(a, s), oracle_channel_aggregate(a, s)));
                    worst = std::max(worst, max_abs_diff(tca::correlation_model(x, p), oracle_correlation(x, p)));
                    cases += 3;
                    if (C1 % 4 != 0) continue;
                    // The TF module runs on C1 channels.
                    auto q = random_tf(C1, rng);
                    Tensor z = random_tensor({B, T, N, C1}, rng);
                    for (std::size_t stride : {1u, 2u}) {
                        Tensor got = tf::msconv(z, q, stride, Mode::train);
                        const std::size_t To = got.dim(1), Cb = C1 / 4;
                        for (std::size_t i = 0; i < 4; ++i) {
                            Vec part = oracle_msconv_branch(z, q.branches[i], stride);
                            for (std::size_t r = 0; r < B * To * N; ++r)
                                for (std::size_t c = 0; c < Cb; ++c) {
                                    worst = std::max(worst, std::abs(got.data()[r * C1 + i * Cb + c] - part[r * Cb + c]));
                                }
                        }
                        ++cases;
                    }
                    worst = std::max(worst, max_abs_diff(tf::aff_fuse(z, q), oracle_aff(z, q)));
                    ++cases;
                }
    const double dt = seconds_since(t0);
    return {worst <= 1e-12 && dt < 30.0,
            fmt("%zu comparisons, max abs diff %.2e (<= 1e-12), %.2f s (< 30 s)", cases, worst, dt)};
}

Outcome reduction_invariants()
{
    std::mt19937_64 rng(3);
    double worst_static = 0.0, worst_shared = 0.0;
    bool ones = true;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t T = 1 + rng() % 6, N = 1 + rng() % 8, C = 1 + rng() % 5, C1 = 1 + rng() % 6;
        auto p = random_tca(C, C1, rng);
        randomize(p.alpha, rng, 0.0, 0.0);
        randomize(p.calib2_w, rng, 0.0, 0.0);
        randomize(p.calib2_b, rng, 0.0, 0.0);
        Tensor x = random_tensor({2, T, N, C}, rng);
        Tensor mu = random_tensor({N, N}, rng);
        Tensor y = tca::tca_forward(x, mu, p);
        // Static graph convolution sum_m mu[n,m] W0 x[m], by loops.
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t o = 0; o < C1; ++o) {
                        double acc = 0.0;
                        for (std::size_t m = 0; m < N; ++m)
                            for (std::size_t c = 0; c < C; ++c) acc += mu.at({n, m}) * p.w0.at({o, c}) * x.at({b, t, m, c});
                        worst_static = std::max(worst_static, std::abs(y.at({b, t, n, o}) - acc));
                    }
        Tensor alpha_t = tca::calibration(x, p);
        for (double v : alpha_t.data()) ones = ones && v == 1.0;
        // Frame-shared weights: every frame goes through the same W0.
        Tensor a = tca::temporal_aggregate(x, p.w0, alpha_t);
        worst_shared = std::max(worst_shared, max_abs_diff(a, linear(x, p.w0)));
    }
    return {worst_static <= 1e-12 && ones && worst_shared <= 1e-12,
            fmt("static path diff %.2e, alpha_t == 1 exactly: %s, frame-shared diff %.2e", worst_static,
                ones ? "yes" : "no", worst_shared)};
}

Outcome partition_completeness()
{
    auto complete = [](const graph::SkeletonGraph& g) {
        auto p = graph::spatial_partition(g);
        const std::size_t n = g.num_joints();
        Vec target(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) target[i * n + i] = 1.0;
        for (auto [a, b] : g.edges()) target[a * n + b] = target[b * n + a] = 1.0;
        for (std::size_t i = 0; i < n * n; ++i) {
            double s = 0.0;
            for (const auto& m : p.masks) s += m.data()[i];
            if (s != target[i]) return false;
        }
        return true;
    };
    std::size_t ok = 0, total = 0;
    for (const char* name : {"ntu25", "nwucla20"}) {
        ++total;
        ok += complete(graph::load_graph(cli::resolve_graph(name)));
    }
    std::mt19937_64 rng(4);
    for (int i = 0; i < 100; ++i) {
        ++total;
        ok += complete(random_tree(2 + rng() % 29, rng));
    }
    return {ok == total, fmt("%zu/%zu graphs (ntu25, nwucla20, 100 random trees with N <= 30)", ok, total)};
}

Outcome permutation_property()
{
    auto g = graph::load_graph(cli::resolve_graph("toy9"));
    net::NetworkConfig cfg;
    cfg.num_classes = 4;
    cfg.blocks = net::channel_plan(3, 0.25);
    std::mt19937_64 rng(5);
    net::Model base(cfg, g, 5);
    auto params = base.parameters();
    // Live topology and calibration so every path depends on the joint order.
    for (auto& [n, t] : params) {
        if (n.find(".alpha") != std::string::npos || n.find("calib2") != std::string::npos) randomize(t, rng, -0.5, 0.5);
    }
    for (auto& [n, t] : base.buffers()) {
        if (n.find("running_var") != std::string::npos) randomize(t, rng, 0.5, 2.0);
    }
    Tensor x = random_tensor({2, 16, 9, 3}, rng);
    Tensor ref = base.forward(x, Mode::eval);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        auto perm = random_permutation(9, rng);
        net::Model m(cfg, g.relabeled(perm), 5);
        auto mp = m.parameters();
        auto mb = m.buffers();
        auto bb = base.buffers();
        for (std::size_t i = 0; i < mp.size(); ++i)
            std::copy(params[i].second.data().begin(), params[i].second.data().end(), mp[i].second.mutable_data().begin());
        for (std::size_t i = 0; i < mb.size(); ++i)
            std::copy(bb[i].second.data().begin(), bb[i].second.data().end(), mb[i].second.mutable_data().begin());
        Vec px(x.numel());
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t t = 0; t < 16; ++t)
                for (std::size_t n = 0; n < 9; ++n)
                    for (std::size_t c = 0; c < 3; ++c) px[((b * 16 + t) * 9 + perm[n]) * 3 + c] = x.at({b, t, n, c});
        worst = std::max(worst, max_abs_diff(m.forward(Tensor(x.shape(), px), Mode::eval), ref));
    }
    return {worst <= 1e-8, fmt("10 relabelings of the 9-joint graph, max logit diff %.2e (<= 1e-8)", worst)};
}

net::LabeledDataset toy_train_set(std::uint64_t seed)
{
    cli::SyntheticSpec s;  // 2 classes x 20 samples, T=16, toy9, noise 0.05
    s.seed = seed;
    return net::derive_stream(cli::generate_synthetic(s, graph::load_graph(cli::resolve_graph(s.graph))),
                              net::Stream::joint);
}

Outcome trainability()
{
    auto data = toy_train_set(1);
    auto cfg = cli::network_for(data, 0.25);
    const auto t0 = Clock::now();
    net::Model model(cfg, data.graph, 1);
    net::Schedule s;
    s.epochs = 200;
    s.seed = 1;
    s.target_train_acc = 0.95;
    auto history = net::train(model, data, nullptr, s);
    const double dt = seconds_since(t0);
    const bool reached = history.back().train_acc >= 0.95;

    std::size_t monotone = 0;
    std::string losses;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto d = toy_train_set(seed);
        net::Model m(cfg, d.graph, seed);
        net::Schedule sc;
        sc.epochs = 10;
        sc.seed = seed;
        auto h = net::train(m, d, nullptr, sc);
        bool dec = true;
        for (std::size_t i = 1; i < h.size(); ++i) dec = dec && h[i].loss < h[i - 1].loss;
        monotone += dec;
        losses += dec ? "+" : "-";
    }
    return {reached && dt < 300.0 && monotone >= 8,
            fmt("train acc %.3f at epoch %zu in %.1f s (>= 0.95, <= 200 epochs, < 300 s); strictly decreasing "
                "loss over 10 epochs in %zu/10 seeds [%s] (>= 8)",
                history.back().train_acc, history.back().epoch, dt, monotone, losses.c_str())};
}

Outcome fusion_exactness()
{
    std::mt19937_64 rng(7);
    std::size_t agree = 0;
    bool strict = true;
    for (int trial = 0; trial < 50; ++trial) {
        auto s = random_streams(1 + rng() % 20, 2 + rng() % 3, rng, trial % 2 == 0);
        auto r = fusion::solve(s, 0.1);
        auto bf = brute_force(s, 0.1);
        agree += r.right == bf.right && r.weights.a == bf.levels[0] * 0.1 && r.weights.b == bf.levels[1] * 0.1 &&
                 r.weights.c == bf.levels[2] * 0.1 && r.weights.d == bf.levels[3] * 0.1;
        strict = strict && r.weights.b > r.weights.a && r.weights.a > r.weights.c && r.weights.c > r.weights.d &&
                 r.weights.d > 0.0 && r.weights.b <= 1.0;
    }
    std::size_t counted = 0;
    for (int b = 1; b <= 20; ++b)
        for (int a = 1; a < b; ++a)
            for (int c = 1; c < a; ++c)
                for (int d = 1; d < c; ++d) ++counted;

    auto big = random_streams(1000, 60, rng, false);
    const auto t0 = Clock::now();
    auto r = fusion::solve(big, 0.05);
    const double dt = seconds_since(t0);
    strict = strict && r.weights.b > r.weights.a && r.weights.a > r.weights.c && r.weights.c > r.weights.d;
    const bool ok = agree == 50 && strict && counted == 4845 && r.tuples_evaluated == 4845 &&
                    fusion::grid_cardinality(0.05) == 4845 && dt < 5.0;
    return {ok, fmt("%zu/50 match brute force, strict ordering: %s, grid %zu (enumerated %zu, solver %zu), "
                    "1000x60 solve %.2f s (< 5 s)",
                    agree, strict ? "yes" : "no", fusion::grid_cardinality(0.05), counted, r.tuples_evaluated, dt)};
}

Outcome fusion_dominance()
{
    auto dir = scratch("fusion");
    cli::SyntheticSpec spec;
    spec.num_classes = 4;
    spec.samples_per_class = 20;
    spec.noise = 0.35;
    spec.seed = 8;
    auto g = graph::load_graph(cli::resolve_graph(spec.graph));
    auto all = cli::generate_synthetic(spec, g);
    // Alternate samples into a training and a held-out split.
    net::LabeledDataset train{all.graph, all.num_classes, {}, {}, {}}, held{all.graph, all.num_classes, {}, {}, {}};
    for (std::size_t i = 0; i < all.size(); ++i) {
        auto& part = i % 2 == 0 ? train : held;
        part.ids.push_back(all.ids[i]);
        part.samples.push_back(all.samples[i]);
        part.labels.push_back(all.labels[i]);
    }
    net::save_dataset(dir / "train.json", train);
    net::save_dataset(dir / "held.json", held);

    cli::RunConfig cfg;
    cfg.dataset = (dir / "train.json").string();
    cfg.eval_dataset = (dir / "held.json").string();
    cfg.out_dir = (dir / "out").string();
    cfg.width_scale = 0.25;
    cfg.seed = 8;
    cfg.schedule.epochs = 8;
    std::ostringstream log;
    auto paths = cli::cmd_scores(cfg, log);

    cli::FuseSettings f;
    for (const auto& p : paths) f.scores.push_back(p.string());
    auto exact = cli::cmd_fuse(f, 1);
    f.mode = "static";
    auto uniform = cli::cmd_fuse(f, 1);
    const double dyn = exact.at("accuracy").get<double>();
    const double stat = uniform.at("accuracy").get<double>();
    bool ok = dyn >= stat;
    std::string singles;
    for (auto& [name, acc] : exact.at("single_stream_accuracy").items()) {
        ok = ok && dyn >= acc.get<double>();
        singles += fmt(" %s=%.3f", name.c_str(), acc.get<double>());
    }
    return {ok, fmt("dynamic %.3f vs static (1,1,1,1) %.3f; single streams:%s", dyn, stat, singles.c_str())};
}

Outcome determinism()
{
    auto dir = scratch("determinism");
    cli::SyntheticSpec spec;
    cli::cmd_synth(spec, dir / "train.json");
    cli::RunConfig cfg;
    cfg.dataset = (dir / "train.json").string();
    cfg.width_scale = 0.25;
    cfg.seed = 9;
    cfg.schedule.epochs = 3;
    std::ostringstream log;
    cfg.out_dir = (dir / "a").string();
    cli::cmd_train(cfg, log);
    cfg.out_dir = (dir / "b").string();
    cli::cmd_train(cfg, log);
    bool ok = true;
    for (const char* f : {"metrics.csv", "checkpoint.json", "checkpoint.bin"}) {
        const auto a = slurp(dir / "a" / f), b = slurp(dir / "b" / f);
        ok = ok && !a.empty() && a == b;
    }
    return {ok, "metrics.csv, checkpoint.json and checkpoint.bin identical across two runs"};
}

}  // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient correctness", gradient_correctness},
        {"oracle equivalence", oracle_equivalence},
        {"reduction invariants", reduction_invariants},
        {"partition completeness", partition_completeness},
        {"permutation property", permutation_property},
        {"trainability", trainability},
        {"fusion solver exactness", fusion_exactness},
        {"fusion dominance", fusion_dominance},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& ex) {
            o = {false, std::string("exception: ") + ex.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
                  << "): " << o.detail << std::endl;
    }
    std::cout << (failed ? "FAILED " : "ALL PASSED ") << criteria.size() - failed << "/" << criteria.size()
              << std::endl;
    return failed ? 1 : 0;
}
