#include "tcagcn/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

namespace tcagcn::fusion {

void ScoreMatrix::validate() const
{
    if (num_classes == 0) throw ValidationError("score matrix '" + stream_id + "' has no classes");
    if (scores.size() != labels.size() * num_classes || sample_ids.size() != labels.size()) {
        throw ValidationError("score matrix '" + stream_id + "' has inconsistent sizes");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw ValidationError("score matrix '" + stream_id + "': label out of range for sample " +
                                  sample_ids[i]);
        }
    }
    for (double v : scores) {
        if (!std::isfinite(v)) throw ValidationError("score matrix '" + stream_id + "' contains non-finite scores");
    }
}

void check_aligned(Streams streams)
{
    for (const auto& s : streams) s.validate();
    const ScoreMatrix& ref = streams[0];
    std::vector<std::string> offending;
    auto flag = [&](const std::string& id) {
        if (std::find(offending.begin(), offending.end(), id) == offending.end()) offending.push_back(id);
    };
    bool classes_ok = true;
    for (const auto& s : streams) {
        classes_ok = classes_ok && s.num_classes == ref.num_classes;
        const std::size_t n = std::min(s.num_samples(), ref.num_samples());
        for (std::size_t i = 0; i < n; ++i) {
            if (s.sample_ids[i] != ref.sample_ids[i] || s.labels[i] != ref.labels[i]) {
                flag(ref.sample_ids[i]);
                flag(s.sample_ids[i]);
            }
        }
        for (std::size_t i = n; i < s.num_samples(); ++i) flag(s.sample_ids[i]);
        for (std::size_t i = n; i < ref.num_samples(); ++i) flag(ref.sample_ids[i]);
    }
    if (!offending.empty()) {
        std::string msg = "score streams are misaligned; offending sample ids:";
        for (const auto& id : offending) msg += " " + id;
        throw AlignmentError(msg, offending);
    }
    if (!classes_ok) throw ValidationError("score streams disagree on the number of classes");
    if (ref.num_samples() == 0) throw ValidationError("score streams are empty");
}

namespace {

void require_positive(const Weights& w)
{
    if (!(w.a > 0.0 && w.b > 0.0 && w.c > 0.0 && w.d > 0.0)) {
        throw ValidationError("fusion weights must be positive");
    }
}

std::size_t argmax(const double* y, std::size_t k)
{
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
        if (y[j] > y[best]) best = j;
    }
    return best;
}

// Every candidate is scored through this one routine so that the solver and
// fuse_accuracy agree bit for bit.
struct Evaluator {
    Streams streams;
    std::size_t n, k;
    std::vector<double> partial;  // a*r0 + b*r1
    std::vector<double> y;

    explicit Evaluator(Streams s) : streams(s), n(s[0].num_samples()), k(s[0].num_classes), partial(n * k), y(k) {}

    void set_ab(double a, double b)
    {
        const auto& r0 = streams[0].scores;
        const auto& r1 = streams[1].scores;
        for (std::size_t i = 0; i < n * k; ++i) partial[i] = a * r0[i] + b * r1[i];
    }

    std::size_t right(double c, double d)
    {
        const auto& r2 = streams[2].scores;
        const auto& r3 = streams[3].scores;
        const auto& labels = streams[0].labels;
        std::size_t correct = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t off = i * k;
            for (std::size_t j = 0; j < k; ++j) y[j] = partial[off + j] + c * r2[off + j] + d * r3[off + j];
            correct += argmax(y.data(), k) == static_cast<std::size_t>(labels[i]);
        }
        return correct;
    }
};

struct Candidate {
    std::size_t right = 0;
    std::size_t ib = 0, ia = 0, ic = 0, id = 0;
    bool valid = false;

    bool beats(const Candidate& o) const
    {
        if (!o.valid) return valid;
        return std::tie(right, ib, ia, ic, id) > std::tie(o.right, o.ib, o.ia, o.ic, o.id);
    }
};

double level_value(std::size_t i, double step) { return static_cast<double>(i) * step; }

FusionResult make_result(const Candidate& c, double step, std::size_t zong, std::size_t evaluated)
{
    FusionResult r;
    r.weights = {level_value(c.ia, step), level_value(c.ib, step), level_value(c.ic, step), level_value(c.id, step)};
    r.right = c.right;
    r.zong = zong;
    r.accuracy = static_cast<double>(c.right) / static_cast<double>(zong);
    r.tuples_evaluated = evaluated;
    return r;
}

}  // namespace

std::vector<int> fused_predictions(Streams streams, const Weights& w)
{
    check_aligned(streams);
    require_positive(w);
    Evaluator ev(streams);
    ev.set_ab(w.a, w.b);
    const auto& r2 = streams[2].scores;
    const auto& r3 = streams[3].scores;
    std::vector<int> pred(ev.n);
    for (std::size_t i = 0; i < ev.n; ++i) {
        const std::size_t off = i * ev.k;
        for (std::size_t j = 0; j < ev.k; ++j) {
            ev.y[j] = ev.partial[off + j] + w.c * r2[off + j] + w.d * r3[off + j];
        }
        pred[i] = static_cast<int>(argmax(ev.y.data(), ev.k));
    }
    return pred;
}

FusionOutcome fuse_accuracy(Streams streams, const Weights& w)
{
    auto pred = fused_predictions(streams, w);
    FusionOutcome out;
    out.zong = pred.size();
    for (std::size_t i = 0; i < pred.size(); ++i) out.right += pred[i] == streams[0].labels[i];
    out.accuracy = static_cast<double>(out.right) / static_cast<double>(out.zong);
    return out;
}

FusionOutcome static_fuse(Streams streams, const Weights& preset)
{
    require_positive(preset);
    if (!(preset.b >= preset.a && preset.a >= preset.c && preset.c >= preset.d)) {
        throw ValidationError("static fusion weights must satisfy b >= a >= c >= d");
    }
    return fuse_accuracy(streams, preset);
}

std::size_t grid_levels(double step)
{
    if (!(step > 0.0) || step > 1.0) throw ValidationError("fusion grid step must lie in (0, 1]");
    return static_cast<std::size_t>(std::floor(1.0 / step + 1e-9));
}

std::size_t grid_cardinality(double step)
{
    const std::size_t L = grid_levels(step);
    if (L < 4) return 0;
    return L * (L - 1) * (L - 2) * (L - 3) / 24;
}

FusionResult solve(Streams streams, double step, std::size_t threads)
{
    check_aligned(streams);
    const std::size_t L = grid_levels(step);
    if (L < 4) throw ValidationError("fusion grid has no tuple with b > a > c > d at this step");
    threads = std::clamp<std::size_t>(threads, 1, L);

    std::vector<Candidate> best(threads);
    std::vector<std::size_t> counts(threads, 0);
    auto work = [&](std::size_t shard) {
        Evaluator ev(streams);
        for (std::size_t ib = 4 + shard; ib <= L; ib += threads) {
            for (std::size_t ia = 3; ia < ib; ++ia) {
                ev.set_ab(level_value(ia, step), level_value(ib, step));
                for (std::size_t ic = 2; ic < ia; ++ic)
                    for (std::size_t id = 1; id < ic; ++id) {
                        Candidate c{ev.right(level_value(ic, step), level_value(id, step)), ib, ia, ic, id, true};
                        ++counts[shard];
                        if (c.beats(best[shard])) best[shard] = c;
                    }
            }
        }
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t s = 0; s < threads; ++s) pool.emplace_back(work, s);
        for (auto& t : pool) t.join();
    }
    Candidate winner;
    std::size_t evaluated = 0;
    for (std::size_t s = 0; s < threads; ++s) {
        if (best[s].beats(winner)) winner = best[s];
        evaluated += counts[s];
    }
    return make_result(winner, step, streams[0].num_samples(), evaluated);
}

FusionResult solve_greedy(Streams streams, double step, std::optional<Weights> start)
{
    check_aligned(streams);
    const std::size_t L = grid_levels(step);
    if (L < 4) throw ValidationError("fusion grid has no tuple with b > a > c > d at this step");

    using Levels = std::array<long, 4>;  // a, b, c, d
    auto feasible = [&](const Levels& v) {
        for (long x : v)
            if (x < 1 || x > static_cast<long>(L)) return false;
        return v[1] > v[0] && v[0] > v[2] && v[2] > v[3];
    };
    auto snap = [&](const Weights& w) {
        auto s = [&](double x) { return static_cast<long>(std::lround(x / step)); };
        return Levels{s(w.a), s(w.b), s(w.c), s(w.d)};
    };
    Levels cur = snap(start.value_or(Weights{0.6, 1.0, 0.4, 0.2}));
    if (!feasible(cur)) cur = snap(Weights{0.6, 1.0, 0.4, 0.2});
    if (!feasible(cur)) cur = Levels{3, 4, 2, 1};

    Evaluator ev(streams);
    std::size_t evaluated = 0;
    auto score = [&](const Levels& v) {
        ++evaluated;
        ev.set_ab(level_value(v[0], step), level_value(v[1], step));
        return ev.right(level_value(v[2], step), level_value(v[3], step));
    };
    std::size_t cur_right = score(cur);
    bool improved = true;
    while (improved) {
        improved = false;
        for (std::size_t coord = 0; coord < 4 && !improved; ++coord) {
            for (long delta : {1L, -1L}) {
                Levels next = cur;
                next[coord] += delta;
                if (!feasible(next)) continue;
                std::size_t r = score(next);
                if (r > cur_right) {
                    cur = next;
                    cur_right = r;
                    improved = true;
                    break;
                }
            }
        }
    }
    Candidate c{cur_right, static_cast<std::size_t>(cur[1]), static_cast<std::size_t>(cur[0]),
                static_cast<std::size_t>(cur[2]), static_cast<std::size_t>(cur[3]), true};
    return make_result(c, step, streams[0].num_samples(), evaluated);
}

nlohmann::json result_to_json(const FusionResult& r)
{
    return {{"weights", {{"a", r.weights.a}, {"b", r.weights.b}, {"c", r.weights.c}, {"d", r.weights.d}}},
            {"accuracy", r.accuracy},
            {"right", r.right},
            {"zong", r.zong},
            {"tuples_evaluated", r.tuples_evaluated}};
}

void write_scores_csv(const std::filesystem::path& path, const ScoreMatrix& m)
{
    m.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "sample_id,label";
    for (std::size_t k = 0; k < m.num_classes; ++k) out << ",s" << k;
    out << '\n';
    char buf[64];
    for (std::size_t i = 0; i < m.num_samples(); ++i) {
        out << m.sample_ids[i] << ',' << m.labels[i];
        for (double v : m.row(i)) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) throw ValidationError("failed writing " + path.string());
}

namespace {

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

}  // namespace

ScoreMatrix read_scores_csv(const std::filesystem::path& path, const std::string& stream_id)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open score file " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path.string() + ": empty score file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_csv(line);
    if (header.size() < 3 || header[0] != "sample_id" || header[1] != "label") {
        throw ValidationError(path.string() + ": header must be sample_id,label,s0,...");
    }
    ScoreMatrix m;
    m.stream_id = stream_id;
    m.num_classes = header.size() - 2;
    for (std::size_t k = 0; k < m.num_classes; ++k) {
        if (header[k + 2] != "s" + std::to_string(k)) {
            throw ValidationError(path.string() + ": unexpected column '" + header[k + 2] + "'");
        }
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
        }
        try {
            m.sample_ids.push_back(cells[0]);
            std::size_t pos = 0;
            m.labels.push_back(std::stoi(cells[1], &pos));
            if (pos != cells[1].size()) throw std::invalid_argument("label");
            for (std::size_t k = 0; k < m.num_classes; ++k) {
                m.scores.push_back(std::stod(cells[k + 2], &pos));
                if (pos != cells[k + 2].size()) throw std::invalid_argument("score");
            }
        } catch (const std::logic_error&) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
        }
    }
    m.validate();
    return m;
}

}  // namespace tcagcn::fusion
