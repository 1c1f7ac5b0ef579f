#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tcagcn/tensor.hpp"

namespace tcagcn::graph {

using Edge = std::pair<std::size_t, std::size_t>;

/// Static human-body topology: an undirected tree over the joints, rooted at
/// the body-center joint.
class SkeletonGraph {
public:
    /// Validates that `edges` form a tree over `num_joints` joints and derives
    /// the parent map by BFS from `center`.
    static SkeletonGraph build(std::span<const Edge> edges, std::size_t num_joints, std::size_t center);

    std::size_t num_joints() const noexcept { return num_joints_; }
    std::size_t center() const noexcept { return center_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    const std::vector<std::optional<std::size_t>>& parent() const noexcept { return parent_; }
    /// Hop distance of every joint from the center.
    const std::vector<std::size_t>& depth() const noexcept { return depth_; }

    /// Symmetric 0/1 adjacency without self loops, shape (N, N).
    Tensor adjacency() const;

    /// Same body with joint j renamed to perm[j].
    SkeletonGraph relabeled(std::span<const std::size_t> perm) const;

private:
    std::size_t num_joints_ = 0;
    std::size_t center_ = 0;
    std::vector<Edge> edges_;
    std::vector<std::optional<std::size_t>> parent_;
    std::vector<std::size_t> depth_;
};

SkeletonGraph graph_from_json(const nlohmann::json& j);
nlohmann::json graph_to_json(const SkeletonGraph& g);
SkeletonGraph load_graph(const std::filesystem::path& path);

/// Root / centripetal / centrifugal neighborhoods of every joint.
///
/// Row = receiving joint, column = neighbor. masks[0] holds the self loops,
/// masks[1] neighbors at most as far from the center as the receiver (equal
/// distance counts as centripetal), masks[2] neighbors farther away.
struct PartitionedAdjacency {
    static constexpr std::size_t kSubsets = 3;
    std::array<Tensor, kSubsets> masks;
    std::array<Tensor, kSubsets> normalized;

    std::size_t num_joints() const { return masks[0].dim(0); }
};

/// Masks only; `normalized` is left undefined.
PartitionedAdjacency spatial_partition(const SkeletonGraph& g);

/// Lambda_row^{-1/2} * mask * Lambda_col^{-1/2}. Rows or columns with zero
/// degree stay zero; symmetric masks give the usual symmetric normalization.
Tensor normalize_adjacency(const Tensor& mask);

/// spatial_partition plus normalize_adjacency of every subset.
PartitionedAdjacency make_partitions(const SkeletonGraph& g);

}  // namespace tcagcn::graph
