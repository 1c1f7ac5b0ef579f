#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "tcagcn/dataset.hpp"
#include "tcagcn/fusion.hpp"
#include "tcagcn/network.hpp"

namespace tcagcn::net {

struct Schedule {
    std::size_t epochs = 65;
    std::size_t batch_size = 16;
    double base_lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 4e-4;
    std::size_t warmup_epochs = 5;
    std::vector<std::size_t> decay_epochs{35, 55};
    double decay_factor = 0.1;
    std::uint64_t seed = 1;
    // Stop once an epoch's train accuracy reaches this value; 0 disables.
    double target_train_acc = 0.0;
    // Interleave classes so every mini-batch keeps the dataset's class mix.
    // Train-mode batch norm otherwise sees batch statistics that swing with
    // the class composition, which destabilizes small near-duplicate datasets.
    bool stratified = true;

    void validate() const;
};

/// Learning rate of 1-based `epoch`: linear warmup base*e/warmup, then
/// base * factor^(number of decay epochs already passed).
double learning_rate(const Schedule& s, std::size_t epoch);

struct EpochMetrics {
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;       // sample-weighted mean cross-entropy of the epoch
    double train_acc = 0.0;  // train-mode predictions made during the epoch
    double eval_acc = 0.0;   // eval mode on the eval set (train set if none)
};

/// SGD with momentum: v = mu*v + g + wd*p; p -= lr*v.
class SgdMomentum {
public:
    SgdMomentum(NamedTensors params, double momentum, double weight_decay);
    void step(double lr);
    void zero_grad();

private:
    NamedTensors params_;
    std::vector<std::vector<double>> velocity_;
    double momentum_;
    double weight_decay_;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Sample order of one epoch: a plain shuffle, or with `stratified` a
/// shuffle within each class followed by a proportional interleave.
std::vector<std::size_t> epoch_order(std::span<const int> labels, bool stratified, std::mt19937_64& rng);

/// Mini-batch training with per-epoch reshuffling from `schedule.seed`.
/// Throws NumericalError when the loss becomes non-finite.
std::vector<EpochMetrics> train(Model& model, const LabeledDataset& train_set, const LabeledDataset* eval_set,
                                const Schedule& schedule, const EpochCallback& on_epoch = {});

/// Raw eval-mode logits, one row per sample.
fusion::ScoreMatrix predict_scores(Model& model, const LabeledDataset& data, const std::string& stream_id,
                                   std::size_t batch_size = 16);

double evaluate_accuracy(Model& model, const LabeledDataset& data, std::size_t batch_size = 16);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& metrics);
std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path);

}  // namespace tcagcn::net
