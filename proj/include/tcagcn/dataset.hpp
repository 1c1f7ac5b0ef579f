#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcagcn/skeleton_graph.hpp"
#include "tcagcn/tensor.hpp"

namespace tcagcn::net {

/// Skeleton sequences (T, N, 3) with class labels, all on one graph.
struct LabeledDataset {
    graph::SkeletonGraph graph;
    std::size_t num_classes = 0;
    std::vector<std::string> ids;
    std::vector<Tensor> samples;
    std::vector<int> labels;

    std::size_t size() const noexcept { return samples.size(); }
    std::size_t frames() const { return samples.at(0).dim(0); }
    /// Shapes agree with the graph and each other; labels in range; ids unique.
    void validate() const;
};

enum class Stream { joint, bone, joint_motion, bone_motion };

inline constexpr std::array<Stream, 4> kAllStreams{Stream::joint, Stream::bone, Stream::joint_motion,
                                                    Stream::bone_motion};

std::string stream_name(Stream s);
Stream stream_from_name(const std::string& name);

/// Translates a (T, N, C) sample so that `center` sits at the origin in frame 0.
Tensor center_normalize(const Tensor& sample, std::size_t center);

/// bone[t, n] = x[t, n] - x[t, parent(n)], zero for the center joint.
Tensor bone_vectors(const Tensor& sample, const graph::SkeletonGraph& g);

/// motion[t] = x[t + 1] - x[t], last frame zero.
Tensor motion_vectors(const Tensor& sample);

/// One input encoding of every sample; joints are center-normalized first.
LabeledDataset derive_stream(const LabeledDataset& data, Stream s);
std::array<LabeledDataset, 4> derive_streams(const LabeledDataset& data);

/// Stacks samples[indices] into (B, T, N, C).
Tensor stack_batch(const LabeledDataset& data, std::span<const std::size_t> indices);

// Dataset files: a JSON manifest {graph_ref, num_classes, payload, samples:
// [{id, label, shape, offset}], spec} plus a payload of TCAT records at the
// given byte offsets. graph_ref names a graph JSON relative to the manifest.
void save_dataset(const std::filesystem::path& manifest, const LabeledDataset& data,
                  const nlohmann::json& spec = nullptr);
LabeledDataset load_dataset(const std::filesystem::path& manifest);

}  // namespace tcagcn::net
