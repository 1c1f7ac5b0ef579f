#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcagcn/dataset.hpp"
#include "tcagcn/fusion.hpp"
#include "tcagcn/gradcheck.hpp"
#include "tcagcn/training.hpp"

namespace tcagcn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

/// Thread count for parallel stages, read from TCAGCN_THREADS (default 1).
std::size_t env_threads();

/// A bundled template name ("ntu25", "nwucla20", "toy9") or a graph JSON path.
std::filesystem::path resolve_graph(const std::string& name_or_path);

/// Per-class sinusoidal joint trajectories around a fixed rest pose.
///
/// Class k moves every coordinate as amp * sin(2 pi (k + 1) t / T + phase),
/// with phases drawn per (class, joint, axis) from `seed`; each sample adds
/// i.i.d. N(0, noise^2) jitter. Classes differ in frequency, so samples stay
/// separable while noise < kSeparableNoise.
struct SyntheticSpec {
    std::size_t num_classes = 2;
    std::size_t samples_per_class = 20;
    std::size_t frames = 16;
    std::string graph = "toy9";
    double amplitude = 0.5;
    double noise = 0.05;
    std::uint64_t seed = 1;

    static constexpr double kSeparableNoise = 0.25;

    void validate() const;
};

nlohmann::json synth_to_json(const SyntheticSpec& s);
SyntheticSpec synth_from_json(const nlohmann::json& j);

net::LabeledDataset generate_synthetic(const SyntheticSpec& spec, const graph::SkeletonGraph& g);

struct FuseSettings {
    std::vector<std::string> scores;  // four CSV paths, stream order a, b, c, d
    double step = 0.05;
    std::string mode = "exact";       // exact | greedy | static
    std::optional<fusion::Weights> preset;
};

/// Settings of one invocation. Paths are taken as given (relative to the
/// working directory).
struct RunConfig {
    std::string dataset;
    std::string eval_dataset;
    std::string out_dir = "out";
    std::string checkpoint;
    std::string sample_id;
    std::string stream = "joint";
    std::vector<std::string> streams{"joint", "bone", "joint_motion", "bone_motion"};
    double width_scale = 0.25;
    std::uint64_t seed = 1;
    net::Schedule schedule;
    SyntheticSpec synth;
    FuseSettings fuse;

    void validate() const;
};

nlohmann::json config_to_json(const RunConfig& c);
/// Missing keys keep their defaults; unknown keys are an error.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

/// Network of the ten-block plan scaled by `width_scale`.
net::NetworkConfig network_for(const net::LabeledDataset& data, double width_scale);

void cmd_synth(const SyntheticSpec& spec, const std::filesystem::path& manifest);

struct TrainOutcome {
    std::filesystem::path checkpoint;
    std::filesystem::path metrics;
    std::vector<net::EpochMetrics> history;
};

/// Trains on config.dataset (stream config.stream) and writes
/// out_dir/checkpoint.json and out_dir/metrics.csv.
TrainOutcome cmd_train(const RunConfig& config, std::ostream& log);

/// Eval-mode accuracy of a checkpoint on a dataset, after deriving `stream`.
double cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                const std::string& stream);

/// Trains one independent model per requested stream and writes
/// out_dir/scores_<stream>.csv for the evaluation set (training set if none).
std::vector<std::filesystem::path> cmd_scores(const RunConfig& config, std::ostream& log);

nlohmann::json cmd_fuse(const FuseSettings& settings, std::size_t threads);

struct GradcheckReport {
    std::vector<GroupError> groups;
    double max_rel_error = 0.0;
    bool passed = false;
};

inline constexpr double kGradTolerance = 1e-4;

/// Central-difference check of the small network (2 blocks, T=8, N=5,
/// widths 8, 3 classes) with every parameter perturbed away from its
/// initial value. `corrupt_backward` turns on the test hook that scales one
/// backward pass.
GradcheckReport cmd_gradcheck(std::uint64_t seed, bool corrupt_backward = false);
void print_gradcheck(std::ostream& out, const GradcheckReport& report);

/// Writes, for block 0 of a checkpoint on one sample:
/// topology_k{k}_c{c}.csv (N x N, S of subset k and channel c),
/// calibration.csv (T x C1, alpha_t of subset 1) and
/// joint_features.csv (T x N, channel L2 norm of the block output).
std::vector<std::filesystem::path> cmd_inspect(const std::filesystem::path& checkpoint,
                                               const std::filesystem::path& dataset, const std::string& sample_id,
                                               const std::string& stream, const std::filesystem::path& out_dir);

/// Plain numeric CSV without header, as emitted by cmd_inspect.
void write_matrix_csv(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      const std::vector<double>& values);
std::vector<std::vector<double>> read_matrix_csv(const std::filesystem::path& path);

}  // namespace tcagcn::cli
