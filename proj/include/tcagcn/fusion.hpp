#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcagcn/errors.hpp"

namespace tcagcn::fusion {

/// Per-sample, per-class scores of one stream plus the true labels.
struct ScoreMatrix {
    std::string stream_id;
    std::vector<std::string> sample_ids;
    std::size_t num_classes = 0;
    std::vector<double> scores;  // row-major (num_samples, num_classes)
    std::vector<int> labels;

    std::size_t num_samples() const noexcept { return labels.size(); }
    std::span<const double> row(std::size_t i) const { return {scores.data() + i * num_classes, num_classes}; }
    void validate() const;
};

/// Sample ids present in one stream but not aligned with the others.
class AlignmentError : public ValidationError {
public:
    AlignmentError(const std::string& what, std::vector<std::string> offending)
        : ValidationError(what), offending_ids(std::move(offending))
    {
    }
    std::vector<std::string> offending_ids;
};

/// Weights of the four streams; a multiplies stream 0, b stream 1, and so on.
struct Weights {
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
};

struct FusionOutcome {
    double accuracy = 0.0;
    std::size_t right = 0;
    std::size_t zong = 0;
};

struct FusionResult {
    Weights weights;
    double accuracy = 0.0;
    std::size_t right = 0;
    std::size_t zong = 0;
    std::size_t tuples_evaluated = 0;
};

using Streams = std::span<const ScoreMatrix, 4>;

/// Throws AlignmentError unless all four share samples, order, labels and classes.
void check_aligned(Streams streams);

/// argmax_k (a*r0 + b*r1 + c*r2 + d*r3)[k] per sample, lowest class on ties.
std::vector<int> fused_predictions(Streams streams, const Weights& w);

FusionOutcome fuse_accuracy(Streams streams, const Weights& w);

/// Fixed-weight baseline. Accepts positive weights ordered b >= a >= c >= d,
/// so uniform weights are allowed but an inverted ordering is rejected.
FusionOutcome static_fuse(Streams streams, const Weights& preset);

/// Grid levels step, 2*step, ..., <= 1.
std::size_t grid_levels(double step);
/// Number of strictly ordered tuples b > a > c > d on the grid.
std::size_t grid_cardinality(double step);

/// Exhaustive maximization of right/zong over the grid subject to
/// b > a > c > d. Ties on `right` go to the lexicographically largest
/// (b, a, c, d). The result does not depend on `threads`.
FusionResult solve(Streams streams, double step = 0.05, std::size_t threads = 1);

/// Accept-if-improved walk over neighbouring grid tuples, started from
/// `start` (snapped to the grid) or from (0.6, 1.0, 0.4, 0.2).
FusionResult solve_greedy(Streams streams, double step = 0.05, std::optional<Weights> start = std::nullopt);

nlohmann::json result_to_json(const FusionResult& r);

/// CSV: header `sample_id,label,s0,...,s{K-1}`, one row per sample.
void write_scores_csv(const std::filesystem::path& path, const ScoreMatrix& m);
ScoreMatrix read_scores_csv(const std::filesystem::path& path, const std::string& stream_id);

}  // namespace tcagcn::fusion
