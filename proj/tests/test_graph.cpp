#include <gtest/gtest.h>

#include "support.hpp"
#include "tcagcn/cli.hpp"

using namespace tcagcn;
using namespace tcagcn::graph;
using namespace tcagcn::testing;

namespace {

SkeletonGraph chain3()
{
    const std::vector<Edge> e{{0, 1}, {1, 2}};
    return SkeletonGraph::build(e, 3, 1);
}

// A + I from the edge list.
Vec adjacency_plus_identity(const SkeletonGraph& g)
{
    const std::size_t n = g.num_joints();
    Vec m(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m[i * n + i] = 1.0;
    for (auto [a, b] : g.edges()) m[a * n + b] = m[b * n + a] = 1.0;
    return m;
}

Vec mask_sum(const PartitionedAdjacency& p)
{
    Vec s(p.masks[0].numel(), 0.0);
    for (const auto& m : p.masks)
        for (std::size_t i = 0; i < s.size(); ++i) s[i] += m.data()[i];
    return s;
}

// Masks are 0/1 and pairwise disjoint.
bool masks_disjoint_binary(const PartitionedAdjacency& p)
{
    for (std::size_t i = 0; i < p.masks[0].numel(); ++i) {
        double total = 0.0;
        for (const auto& m : p.masks) {
            const double v = m.data()[i];
            if (v != 0.0 && v != 1.0) return false;
            total += v;
        }
        if (total > 1.0) return false;
    }
    return true;
}

}  // namespace

TEST(SkeletonGraph, ChainParents)
{
    auto g = chain3();
    ASSERT_EQ(g.parent().size(), 3u);
    EXPECT_EQ(g.parent()[0], std::optional<std::size_t>(1));
    EXPECT_FALSE(g.parent()[1].has_value());
    EXPECT_EQ(g.parent()[2], std::optional<std::size_t>(1));
    EXPECT_EQ(g.depth(), (std::vector<std::size_t>{1, 0, 1}));
}

TEST(SkeletonGraph, InvalidGraphsRejected)
{
    const std::vector<Edge> out_of_range{{0, 9}, {0, 1}, {1, 2}, {2, 3}};
    EXPECT_THROW(SkeletonGraph::build(out_of_range, 5, 0), ValidationError);
    const std::vector<Edge> cycle{{0, 1}, {1, 2}, {2, 0}};
    EXPECT_THROW(SkeletonGraph::build(cycle, 3, 0), ValidationError);
    const std::vector<Edge> disconnected{{0, 1}};
    EXPECT_THROW(SkeletonGraph::build(disconnected, 3, 0), ValidationError);
    const std::vector<Edge> self{{0, 0}, {0, 1}};
    EXPECT_THROW(SkeletonGraph::build(self, 2, 0), ValidationError);
    const std::vector<Edge> ok{{0, 1}};
    EXPECT_THROW(SkeletonGraph::build(ok, 2, 5), ValidationError);
}

TEST(SkeletonGraph, BundledTemplates)
{
    auto ntu = load_graph(cli::resolve_graph("ntu25"));
    EXPECT_EQ(ntu.num_joints(), 25u);
    EXPECT_EQ(ntu.edges().size(), 24u);
    auto ucla = load_graph(cli::resolve_graph("nwucla20"));
    EXPECT_EQ(ucla.num_joints(), 20u);
    EXPECT_EQ(ucla.edges().size(), 19u);
    auto toy = load_graph(cli::resolve_graph("toy9"));
    EXPECT_EQ(toy.num_joints(), 9u);
}

TEST(SkeletonGraph, JsonRoundTrip)
{
    auto g = load_graph(cli::resolve_graph("ntu25"));
    auto r = graph_from_json(graph_to_json(g));
    EXPECT_EQ(r.edges(), g.edges());
    EXPECT_EQ(r.center(), g.center());
    EXPECT_EQ(r.parent(), g.parent());
}

TEST(Partition, ChainMasks)
{
    auto p = spatial_partition(chain3());
    EXPECT_EQ(max_abs_diff(p.masks[0], Vec{1, 0, 0, 0, 1, 0, 0, 0, 1}), 0.0);
    // Receivers 0 and 2 take their closer neighbor 1 as centripetal.
    EXPECT_EQ(max_abs_diff(p.masks[1], Vec{0, 1, 0, 0, 0, 0, 0, 1, 0}), 0.0);
    // The center takes both farther neighbors as centrifugal.
    EXPECT_EQ(max_abs_diff(p.masks[2], Vec{0, 0, 0, 1, 0, 1, 0, 0, 0}), 0.0);
}

TEST(Partition, SingleEdge)
{
    const std::vector<Edge> e{{0, 1}};
    auto p = spatial_partition(SkeletonGraph::build(e, 2, 0));
    EXPECT_EQ(p.masks[1].at({1, 0}), 1.0);
    EXPECT_EQ(p.masks[2].at({0, 1}), 1.0);
    EXPECT_EQ(p.masks[1].at({0, 1}), 0.0);
}

TEST(Partition, CompletenessOnTemplatesAndRandomTrees)
{
    for (const char* name : {"ntu25", "nwucla20", "toy9"}) {
        auto g = load_graph(cli::resolve_graph(name));
        auto p = spatial_partition(g);
        EXPECT_EQ(mask_sum(p), adjacency_plus_identity(g)) << name;
        EXPECT_TRUE(masks_disjoint_binary(p)) << name;
    }
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        auto g = random_tree(2 + rng() % 29, rng);
        auto p = spatial_partition(g);
        EXPECT_EQ(mask_sum(p), adjacency_plus_identity(g)) << "trial " << trial;
        EXPECT_TRUE(masks_disjoint_binary(p));
    }
}

TEST(Partition, CentripetalAndCentrifugalAreTransposes)
{
    // On a tree, n is a centripetal neighbor of m exactly when m is a centrifugal neighbor of n.
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 20; ++trial) {
        auto g = random_tree(2 + rng() % 20, rng);
        auto p = spatial_partition(g);
        const std::size_t n = g.num_joints();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(p.masks[1].at({i, j}), p.masks[2].at({j, i}));
    }
}

TEST(Partition, RelabelingPermutesMasks)
{
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        auto g = random_tree(2 + rng() % 15, rng);
        auto perm = random_permutation(g.num_joints(), rng);
        auto p = make_partitions(g);
        auto q = make_partitions(g.relabeled(perm));
        const std::size_t n = g.num_joints();
        for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    EXPECT_EQ(q.masks[k].at({perm[i], perm[j]}), p.masks[k].at({i, j}));
                    EXPECT_EQ(q.normalized[k].at({perm[i], perm[j]}), p.normalized[k].at({i, j}));
                }
    }
}

TEST(Normalize, Examples)
{
    EXPECT_EQ(max_abs_diff(normalize_adjacency(Tensor({2, 2}, {1, 0, 0, 1})), Vec{1, 0, 0, 1}), 0.0);
    EXPECT_EQ(max_abs_diff(normalize_adjacency(Tensor({2, 2}, {0, 1, 1, 0})), Vec{0, 1, 1, 0}), 0.0);
    // Star with center 0 and three leaves: center row/column degree 3, leaves degree 1.
    Tensor star({4, 4}, {0, 1, 1, 1, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0});
    Tensor s = normalize_adjacency(star);
    for (std::size_t j = 1; j < 4; ++j) {
        EXPECT_NEAR(s.at({0, j}), 1.0 / std::sqrt(3.0), 1e-15);
        EXPECT_NEAR(s.at({j, 0}), 1.0 / std::sqrt(3.0), 1e-15);
    }
    // Isolated rows stay zero instead of dividing by zero.
    Tensor z = normalize_adjacency(Tensor({2, 2}, {0, 0, 0, 1}));
    EXPECT_EQ(max_abs_diff(z, Vec{0, 0, 0, 1}), 0.0);
}

TEST(Normalize, MatchesDegreeFormula)
{
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 20; ++trial) {
        auto g = random_tree(2 + rng() % 12, rng);
        auto p = make_partitions(g);
        const std::size_t n = g.num_joints();
        for (std::size_t k = 0; k < 3; ++k) {
            const Tensor& m = p.masks[k];
            Vec row(n, 0.0), col(n, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    row[i] += m.at({i, j});
                    col[j] += m.at({i, j});
                }
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double expected = m.at({i, j}) == 0.0 ? 0.0 : 1.0 / std::sqrt(row[i] * col[j]);
                    EXPECT_NEAR(p.normalized[k].at({i, j}), expected, 1e-15);
                }
        }
        // The self-loop subset normalizes to the identity.
        for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(p.normalized[0].at({i, i}), 1.0);
    }
}
