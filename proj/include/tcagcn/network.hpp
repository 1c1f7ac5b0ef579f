#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "tcagcn/ops.hpp"
#include "tcagcn/skeleton_graph.hpp"
#include "tcagcn/tca.hpp"
#include "tcagcn/tf_temporal.hpp"

namespace tcagcn::net {

struct BlockSpec {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t stride = 1;

    void validate() const;
};

/// The ten-block plan 64x4, 128x3, 256x3 (stride 2 entering each wider
/// stage), every width multiplied by `width_scale`.
std::vector<BlockSpec> channel_plan(std::size_t in_channels, double width_scale = 1.0);

struct NetworkConfig {
    std::size_t in_channels = 3;
    std::size_t num_classes = 2;
    std::vector<BlockSpec> blocks;
    std::size_t corr_reduction = 8;
    std::size_t calib_reduction = 2;
    std::size_t aff_reduction = 4;
    Activation corr_activation = Activation::relu;
    Activation calib_activation = Activation::relu;

    void validate() const;
    /// Shortest sequence that survives every stride-2 stage.
    std::size_t min_frames() const;
};

nlohmann::json config_to_json(const NetworkConfig& c);
NetworkConfig config_from_json(const nlohmann::json& j);

/// Bias-free 1x1 convolution (optionally strided in time) plus batch norm,
/// used when a residual changes shape.
struct Projection {
    Tensor w;  // (1, C_in, C_out)
    BatchNorm bn;
    std::size_t stride = 1;

    Tensor apply(const Tensor& x, Mode mode);
};

struct BlockParams {
    BlockSpec spec;
    std::array<tca::TcaParams, graph::PartitionedAdjacency::kSubsets> tca;
    BatchNorm spatial_bn;
    std::optional<Projection> spatial_residual;
    tf::TfParams tf;
    std::optional<Projection> temporal_residual;
};

/// H = relu(bn(sum_k tca_k(X)) + res_s(X)); Y = relu(tf(H) + res_t(H)).
Tensor tcaf_block(const Tensor& x, BlockParams& block, const graph::PartitionedAdjacency& partitions, Mode mode);

/// Same as tcaf_block but also returns the spatial-stage output H.
std::pair<Tensor, Tensor> tcaf_block_with_spatial(const Tensor& x, BlockParams& block,
                                                  const graph::PartitionedAdjacency& partitions, Mode mode);

/// Input batch norm, the TCAF stack, global (T, N) mean pool, linear classifier.
class Model {
public:
    Model(NetworkConfig config, graph::SkeletonGraph graph, std::uint64_t seed);
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    /// (B, T, N, C_in) -> (B, num_classes) logits.
    Tensor forward(const Tensor& batch, Mode mode);

    NamedTensors parameters() const;
    NamedTensors buffers() const;
    std::size_t parameter_count() const;

    const NetworkConfig& config() const noexcept { return config_; }
    const graph::SkeletonGraph& graph() const noexcept { return graph_; }
    const graph::PartitionedAdjacency& partitions() const noexcept { return partitions_; }
    BatchNorm& input_bn() noexcept { return input_bn_; }
    std::vector<BlockParams>& blocks() noexcept { return blocks_; }
    const Tensor& classifier_w() const noexcept { return classifier_w_; }

private:
    NetworkConfig config_;
    graph::SkeletonGraph graph_;
    graph::PartitionedAdjacency partitions_;
    BatchNorm input_bn_;
    std::vector<BlockParams> blocks_;
    Tensor classifier_w_, classifier_b_;
};

/// Parameter group of a dotted parameter name, e.g. "block0.tca1" or "classifier".
std::string parameter_group(const std::string& name);

// Checkpoint: JSON manifest (config, graph, tensor table) + TCAT payload file
// next to it with the same stem and a .bin extension.
void save_checkpoint(const std::filesystem::path& manifest, const Model& model);
Model load_checkpoint(const std::filesystem::path& manifest);

}  // namespace tcagcn::net
