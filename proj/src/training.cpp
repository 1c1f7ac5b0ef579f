#include "tcagcn/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace tcagcn::net {

void Schedule::validate() const
{
    if (epochs == 0) throw ValidationError("epochs must be positive");
    if (batch_size == 0) throw ValidationError("batch size must be at least 1");
    if (!(base_lr >= 0.0)) throw ValidationError("learning rate must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ValidationError("weight decay must be non-negative");
    if (!(decay_factor > 0.0)) throw ValidationError("decay factor must be positive");
}

double learning_rate(const Schedule& s, std::size_t epoch)
{
    if (epoch == 0) throw ValidationError("epochs are 1-based");
    if (epoch <= s.warmup_epochs) {
        return s.base_lr * static_cast<double>(epoch) / static_cast<double>(s.warmup_epochs);
    }
    double lr = s.base_lr;
    for (auto d : s.decay_epochs) {
        if (epoch > d) lr *= s.decay_factor;
    }
    return lr;
}

SgdMomentum::SgdMomentum(NamedTensors params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay)
{
    for (const auto& [name, p] : params_) velocity_.emplace_back(p.numel(), 0.0);
}

void SgdMomentum::step(double lr)
{
    for (std::size_t k = 0; k < params_.size(); ++k) {
        const Tensor& p = params_[k].second;
        auto data = p.mutable_data();
        auto& v = velocity_[k];
        const bool has_grad = p.has_grad();
        const auto grad = has_grad ? p.grad() : std::span<const double>{};
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double g = (has_grad ? grad[i] : 0.0) + weight_decay_ * data[i];
            v[i] = momentum_ * v[i] + g;
            data[i] -= lr * v[i];
        }
    }
}

void SgdMomentum::zero_grad()
{
    for (const auto& [name, p] : params_) p.zero_grad();
}

namespace {

std::size_t count_correct(const Tensor& logits, std::span<const int> labels)
{
    const std::size_t K = logits.dim(1);
    auto z = logits.data();
    std::size_t correct = 0;
    for (std::size_t b = 0; b < labels.size(); ++b) {
        const double* row = z.data() + b * K;
        auto pred = static_cast<int>(std::max_element(row, row + K) - row);
        correct += pred == labels[b];
    }
    return correct;
}

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng)
{
    // Fisher-Yates with an explicit draw so the order is portable.
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

}  // namespace

std::vector<std::size_t> epoch_order(std::span<const int> labels, bool stratified, std::mt19937_64& rng)
{
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    if (!stratified) {
        shuffle(order, rng);
        return order;
    }
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    std::vector<std::size_t> class_rank(by_class.size());
    std::iota(class_rank.begin(), class_rank.end(), 0);
    shuffle(class_rank, rng);

    // Sample j of a class with n members sits at (j + 0.5) / n; sorting by
    // that position spreads every class evenly over the epoch.
    struct Slot {
        double pos;
        std::size_t rank;
        std::size_t index;
    };
    std::vector<Slot> slots;
    std::size_t c = 0;
    for (auto& [label, members] : by_class) {
        shuffle(members, rng);
        const double n = static_cast<double>(members.size());
        for (std::size_t j = 0; j < members.size(); ++j) {
            slots.push_back({(static_cast<double>(j) + 0.5) / n, class_rank[c], members[j]});
        }
        ++c;
    }
    std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
        return a.pos != b.pos ? a.pos < b.pos : a.rank < b.rank;
    });
    for (std::size_t i = 0; i < slots.size(); ++i) order[i] = slots[i].index;
    return order;
}

std::vector<EpochMetrics> train(Model& model, const LabeledDataset& train_set, const LabeledDataset* eval_set,
                                const Schedule& schedule, const EpochCallback& on_epoch)
{
    schedule.validate();
    train_set.validate();
    if (train_set.num_classes != model.config().num_classes) {
        throw ValidationError("dataset has " + std::to_string(train_set.num_classes) + " classes, model has " +
                              std::to_string(model.config().num_classes));
    }
    SgdMomentum opt(model.parameters(), schedule.momentum, schedule.weight_decay);
    std::mt19937_64 rng(schedule.seed);

    std::vector<EpochMetrics> history;
    for (std::size_t epoch = 1; epoch <= schedule.epochs; ++epoch) {
        const auto order = epoch_order(train_set.labels, schedule.stratified, rng);
        const double lr = learning_rate(schedule, epoch);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
            const std::size_t end = std::min(order.size(), start + schedule.batch_size);
            std::span<const std::size_t> idx(order.data() + start, end - start);
            std::vector<int> labels;
            for (auto i : idx) labels.push_back(train_set.labels[i]);
            Tensor batch = stack_batch(train_set, idx);

            opt.zero_grad();
            Tape tape;
            TapeScope scope(tape);
            Tensor logits = model.forward(batch, Mode::train);
            Tensor loss = cross_entropy(logits, labels);
            if (!std::isfinite(loss.item())) {
                throw NumericalError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                     ", batch starting at " + std::to_string(start));
            }
            tape.backward(loss);
            opt.step(lr);
            loss_sum += loss.item() * static_cast<double>(idx.size());
            correct += count_correct(logits, labels);
        }
        EpochMetrics m;
        m.epoch = epoch;
        m.lr = lr;
        m.loss = loss_sum / static_cast<double>(train_set.size());
        m.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
        m.eval_acc = evaluate_accuracy(model, eval_set ? *eval_set : train_set, schedule.batch_size);
        history.push_back(m);
        if (on_epoch) on_epoch(m);
        if (schedule.target_train_acc > 0.0 && m.train_acc >= schedule.target_train_acc) break;
    }
    return history;
}

fusion::ScoreMatrix predict_scores(Model& model, const LabeledDataset& data, const std::string& stream_id,
                                   std::size_t batch_size)
{
    data.validate();
    fusion::ScoreMatrix out;
    out.stream_id = stream_id;
    out.sample_ids = data.ids;
    out.labels = data.labels;
    out.num_classes = model.config().num_classes;
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t start = 0; start < idx.size(); start += batch_size) {
        const std::size_t end = std::min(idx.size(), start + batch_size);
        Tensor logits = model.forward(stack_batch(data, {idx.data() + start, end - start}), Mode::eval);
        out.scores.insert(out.scores.end(), logits.data().begin(), logits.data().end());
    }
    return out;
}

double evaluate_accuracy(Model& model, const LabeledDataset& data, std::size_t batch_size)
{
    auto scores = predict_scores(model, data, "eval", batch_size);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.num_samples(); ++i) {
        auto row = scores.row(i);
        auto pred = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        correct += pred == scores.labels[i];
    }
    return static_cast<double>(correct) / static_cast<double>(scores.num_samples());
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& metrics)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "epoch,lr,loss,train_acc,eval_acc\n";
    char buf[256];
    for (const auto& m : metrics) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", m.epoch, m.lr, m.loss, m.train_acc,
                      m.eval_acc);
        out << buf;
    }
}

std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "epoch,lr,loss,train_acc,eval_acc") throw ValidationError(path.string() + ": bad metrics header");
    std::vector<EpochMetrics> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        EpochMetrics m;
        if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf", &m.epoch, &m.lr, &m.loss, &m.train_acc,
                        &m.eval_acc) != 5) {
            throw ValidationError(path.string() + ": malformed metrics row");
        }
        out.push_back(m);
    }
    return out;
}

}  // namespace tcagcn::net
