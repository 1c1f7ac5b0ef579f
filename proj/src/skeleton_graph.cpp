#include "tcagcn/skeleton_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <string>

namespace tcagcn::graph {

namespace {

std::size_t find_root(std::vector<std::size_t>& uf, std::size_t x)
{
    while (uf[x] != x) {
        uf[x] = uf[uf[x]];
        x = uf[x];
    }
    return x;
}

}  // namespace

SkeletonGraph SkeletonGraph::build(std::span<const Edge> edges, std::size_t num_joints, std::size_t center)
{
    if (num_joints < 2) throw ValidationError("skeleton graph needs at least 2 joints");
    if (center >= num_joints) {
        throw ValidationError("center joint " + std::to_string(center) + " out of range for " +
                              std::to_string(num_joints) + " joints");
    }
    std::vector<std::size_t> uf(num_joints);
    std::iota(uf.begin(), uf.end(), 0);
    std::vector<std::vector<std::size_t>> nbrs(num_joints);
    for (const auto& [a, b] : edges) {
        if (a >= num_joints || b >= num_joints) {
            throw ValidationError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                                  ") references a joint outside [0," + std::to_string(num_joints) + ")");
        }
        auto ra = find_root(uf, a), rb = find_root(uf, b);
        if (ra == rb) {
            throw ValidationError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                                  ") closes a cycle");
        }
        uf[ra] = rb;
        nbrs[a].push_back(b);
        nbrs[b].push_back(a);
    }
    if (edges.size() != num_joints - 1) {
        throw ValidationError("skeleton graph is disconnected (" + std::to_string(edges.size()) +
                              " edges for " + std::to_string(num_joints) + " joints)");
    }

    SkeletonGraph g;
    g.num_joints_ = num_joints;
    g.center_ = center;
    g.edges_.assign(edges.begin(), edges.end());
    g.parent_.assign(num_joints, std::nullopt);
    g.depth_.assign(num_joints, 0);
    std::vector<bool> seen(num_joints, false);
    std::queue<std::size_t> q;
    q.push(center);
    seen[center] = true;
    while (!q.empty()) {
        auto u = q.front();
        q.pop();
        for (auto v : nbrs[u]) {
            if (seen[v]) continue;
            seen[v] = true;
            g.parent_[v] = u;
            g.depth_[v] = g.depth_[u] + 1;
            q.push(v);
        }
    }
    return g;
}

Tensor SkeletonGraph::adjacency() const
{
    const auto n = num_joints_;
    std::vector<double> a(n * n, 0.0);
    for (const auto& [i, j] : edges_) {
        a[i * n + j] = 1.0;
        a[j * n + i] = 1.0;
    }
    return Tensor({n, n}, std::move(a));
}

SkeletonGraph SkeletonGraph::relabeled(std::span<const std::size_t> perm) const
{
    if (perm.size() != num_joints_) throw ValidationError("permutation size mismatch");
    std::vector<Edge> edges;
    edges.reserve(edges_.size());
    for (const auto& [a, b] : edges_) edges.emplace_back(perm[a], perm[b]);
    return build(edges, num_joints_, perm[center_]);
}

SkeletonGraph graph_from_json(const nlohmann::json& j)
{
    static const std::array<std::string, 3> kKeys{"num_joints", "center", "edges"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
            throw ValidationError("graph config: unknown key '" + key + "'");
        }
    }
    try {
        auto n = j.at("num_joints").get<std::size_t>();
        auto center = j.at("center").get<std::size_t>();
        std::vector<Edge> edges;
        for (const auto& e : j.at("edges")) {
            if (!e.is_array() || e.size() != 2) throw ValidationError("graph config: edges must be pairs");
            edges.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>());
        }
        return SkeletonGraph::build(edges, n, center);
    } catch (const nlohmann::json::exception& ex) {
        throw ValidationError(std::string("graph config: ") + ex.what());
    }
}

nlohmann::json graph_to_json(const SkeletonGraph& g)
{
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [a, b] : g.edges()) edges.push_back({a, b});
    return {{"num_joints", g.num_joints()}, {"center", g.center()}, {"edges", edges}};
}

SkeletonGraph load_graph(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open graph file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw ValidationError("graph file " + path.string() + ": " + ex.what());
    }
    return graph_from_json(j);
}

PartitionedAdjacency spatial_partition(const SkeletonGraph& g)
{
    const auto n = g.num_joints();
    const auto& depth = g.depth();
    std::array<std::vector<double>, PartitionedAdjacency::kSubsets> m;
    for (auto& v : m) v.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m[0][i * n + i] = 1.0;
    auto assign = [&](std::size_t receiver, std::size_t neighbor) {
        const std::size_t subset = depth[neighbor] <= depth[receiver] ? 1 : 2;
        m[subset][receiver * n + neighbor] = 1.0;
    };
    for (const auto& [a, b] : g.edges()) {
        assign(a, b);
        assign(b, a);
    }
    PartitionedAdjacency out;
    for (std::size_t k = 0; k < PartitionedAdjacency::kSubsets; ++k) {
        out.masks[k] = Tensor({n, n}, std::move(m[k]));
    }
    return out;
}

Tensor normalize_adjacency(const Tensor& mask)
{
    if (mask.rank() != 2 || mask.dim(0) != mask.dim(1)) {
        throw ShapeError("normalize_adjacency expects a square matrix, got " + shape_str(mask.shape()));
    }
    const auto n = mask.dim(0);
    auto a = mask.data();
    std::vector<double> row_deg(n, 0.0), col_deg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            row_deg[i] += a[i * n + j];
            col_deg[j] += a[i * n + j];
        }
    auto inv_sqrt = [](double d) { return d > 0.0 ? 1.0 / std::sqrt(d) : 0.0; };
    std::vector<double> out(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (a[i * n + j] != 0.0) out[i * n + j] = inv_sqrt(row_deg[i]) * a[i * n + j] * inv_sqrt(col_deg[j]);
        }
    return Tensor({n, n}, std::move(out));
}

PartitionedAdjacency make_partitions(const SkeletonGraph& g)
{
    auto p = spatial_partition(g);
    for (std::size_t k = 0; k < PartitionedAdjacency::kSubsets; ++k) {
        p.normalized[k] = normalize_adjacency(p.masks[k]);
    }
    return p;
}

}  // namespace tcagcn::graph
