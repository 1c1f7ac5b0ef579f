#include <cmath>
#include <numbers>
#include <random>

#include "tcagcn/cli.hpp"

namespace tcagcn::cli {

net::LabeledDataset generate_synthetic(const SyntheticSpec& spec, const graph::SkeletonGraph& g)
{
    spec.validate();
    const std::size_t T = spec.frames, N = g.num_joints(), K = spec.num_classes;
    constexpr std::size_t C = 3;

    // Archetypes come from their own stream so that noise draws never shift them.
    std::mt19937_64 shape_rng(spec.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    std::vector<double> rest(N * C);
    for (auto& v : rest) v = unit(shape_rng);
    std::vector<double> phase(K * N * C);
    for (auto& v : phase) v = angle(shape_rng);

    std::mt19937_64 noise_rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> jitter(0.0, 1.0);

    net::LabeledDataset data{g, K, {}, {}, {}};
    for (std::size_t k = 0; k < K; ++k) {
        const double freq = static_cast<double>(k + 1);
        for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
            std::vector<double> x(T * N * C);
            for (std::size_t t = 0; t < T; ++t) {
                const double theta = 2.0 * std::numbers::pi * freq * static_cast<double>(t) / static_cast<double>(T);
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t c = 0; c < C; ++c) {
                        const double clean = rest[n * C + c] + spec.amplitude * std::sin(theta + phase[(k * N + n) * C + c]);
                        x[(t * N + n) * C + c] = clean + spec.noise * jitter(noise_rng);
                    }
            }
            char id[32];
            std::snprintf(id, sizeof id, "c%02zu_s%03zu", k, i);
            data.ids.emplace_back(id);
            data.samples.emplace_back(Shape{T, N, C}, std::move(x));
            data.labels.push_back(static_cast<int>(k));
        }
    }
    return data;
}

void cmd_synth(const SyntheticSpec& spec, const std::filesystem::path& manifest)
{
    spec.validate();
    auto g = graph::load_graph(resolve_graph(spec.graph));
    if (manifest.has_parent_path()) std::filesystem::create_directories(manifest.parent_path());
    net::save_dataset(manifest, generate_synthetic(spec, g), synth_to_json(spec));
}

}  // namespace tcagcn::cli
