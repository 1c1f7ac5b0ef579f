#include "tcagcn/network.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include "tcagcn/tensor_io.hpp"

namespace tcagcn::net {

namespace {

const char* activation_name(Activation a)
{
    switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    }
    return "relu";
}

Activation activation_from(const std::string& s)
{
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "sigmoid") return Activation::sigmoid;
    throw ValidationError("unknown activation '" + s + "'");
}

Projection make_projection(std::size_t in, std::size_t out, std::size_t stride, std::mt19937_64& rng)
{
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Projection p;
    p.w = Tensor::uniform({1, in, out}, -bound, bound, rng, true);
    p.bn = BatchNorm::make(out);
    p.stride = stride;
    return p;
}

void collect_projection(const std::string& prefix, const Projection& p, NamedTensors& params, NamedTensors& buffers)
{
    params.emplace_back(prefix + ".w", p.w);
    p.bn.collect(prefix + ".bn", params, buffers);
}

}  // namespace

void BlockSpec::validate() const
{
    if (in_channels == 0) throw ValidationError("block in_channels must be positive");
    if (out_channels == 0 || out_channels % 4 != 0) {
        throw ValidationError("block out_channels must be a positive multiple of 4, got " +
                              std::to_string(out_channels));
    }
    if (stride != 1 && stride != 2) throw ValidationError("block stride must be 1 or 2");
}

std::vector<BlockSpec> channel_plan(std::size_t in_channels, double width_scale)
{
    if (!(width_scale > 0.0)) throw ValidationError("width scale must be positive");
    static constexpr std::array<std::size_t, 10> kWidths{64, 64, 64, 64, 128, 128, 128, 256, 256, 256};
    std::vector<BlockSpec> plan;
    std::size_t in = in_channels;
    for (std::size_t i = 0; i < kWidths.size(); ++i) {
        auto w = static_cast<std::size_t>(std::lround(static_cast<double>(kWidths[i]) * width_scale / 4.0)) * 4;
        w = std::max<std::size_t>(w, 4);
        plan.push_back({in, w, (i == 4 || i == 7) ? 2u : 1u});
        in = w;
    }
    return plan;
}

void NetworkConfig::validate() const
{
    if (in_channels == 0) throw ValidationError("in_channels must be positive");
    if (num_classes < 2) throw ValidationError("num_classes must be at least 2");
    if (blocks.empty()) throw ValidationError("network needs at least one block");
    std::size_t c = in_channels;
    for (const auto& b : blocks) {
        b.validate();
        if (b.in_channels != c) throw ValidationError("block channel plan is not contiguous");
        c = b.out_channels;
    }
    if (corr_reduction == 0 || calib_reduction == 0 || aff_reduction == 0) {
        throw ValidationError("reduction ratios must be positive");
    }
}

std::size_t NetworkConfig::min_frames() const
{
    std::size_t t = 1;
    for (const auto& b : blocks) t *= b.stride;
    return t;
}

nlohmann::json config_to_json(const NetworkConfig& c)
{
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : c.blocks) blocks.push_back({b.in_channels, b.out_channels, b.stride});
    return {{"in_channels", c.in_channels},
            {"num_classes", c.num_classes},
            {"blocks", blocks},
            {"corr_reduction", c.corr_reduction},
            {"calib_reduction", c.calib_reduction},
            {"aff_reduction", c.aff_reduction},
            {"corr_activation", activation_name(c.corr_activation)},
            {"calib_activation", activation_name(c.calib_activation)}};
}

NetworkConfig config_from_json(const nlohmann::json& j)
{
    try {
        NetworkConfig c;
        c.in_channels = j.at("in_channels").get<std::size_t>();
        c.num_classes = j.at("num_classes").get<std::size_t>();
        for (const auto& b : j.at("blocks")) {
            c.blocks.push_back({b.at(0).get<std::size_t>(), b.at(1).get<std::size_t>(), b.at(2).get<std::size_t>()});
        }
        c.corr_reduction = j.at("corr_reduction").get<std::size_t>();
        c.calib_reduction = j.at("calib_reduction").get<std::size_t>();
        c.aff_reduction = j.at("aff_reduction").get<std::size_t>();
        c.corr_activation = activation_from(j.at("corr_activation").get<std::string>());
        c.calib_activation = activation_from(j.at("calib_activation").get<std::string>());
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& ex) {
        throw ValidationError(std::string("network config: ") + ex.what());
    }
}

Tensor Projection::apply(const Tensor& x, Mode mode)
{
    return batch_norm(conv_temporal(x, w, {}, {stride, 1}), bn, mode);
}

std::pair<Tensor, Tensor> tcaf_block_with_spatial(const Tensor& x, BlockParams& block,
                                                  const graph::PartitionedAdjacency& partitions, Mode mode)
{
    if (x.rank() != 4 || x.dim(3) != block.spec.in_channels) {
        throw ShapeError("TCAF block expects (B, T, N, " + std::to_string(block.spec.in_channels) + "), got " +
                         shape_str(x.shape()));
    }
    Tensor spatial;
    for (std::size_t k = 0; k < graph::PartitionedAdjacency::kSubsets; ++k) {
        Tensor f = tca::tca_forward(x, partitions.normalized[k], block.tca[k]);
        spatial = k == 0 ? f : add(spatial, f);
    }
    Tensor res_s = block.spatial_residual ? block.spatial_residual->apply(x, mode) : x;
    Tensor h = relu(add(batch_norm(spatial, block.spatial_bn, mode), res_s));
    Tensor z = tf::tf_forward(h, block.tf, block.spec.stride, mode);
    Tensor res_t = block.temporal_residual ? block.temporal_residual->apply(h, mode) : h;
    return {relu(add(z, res_t)), h};
}

Tensor tcaf_block(const Tensor& x, BlockParams& block, const graph::PartitionedAdjacency& partitions, Mode mode)
{
    return tcaf_block_with_spatial(x, block, partitions, mode).first;
}

Model::Model(NetworkConfig config, graph::SkeletonGraph graph, std::uint64_t seed)
    : config_(std::move(config)), graph_(std::move(graph)), partitions_(graph::make_partitions(graph_))
{
    config_.validate();
    std::mt19937_64 rng(seed);
    input_bn_ = BatchNorm::make(config_.in_channels);
    for (const auto& spec : config_.blocks) {
        BlockParams bp;
        bp.spec = spec;
        tca::TcaConfig tc{spec.in_channels, spec.out_channels, config_.corr_reduction, config_.calib_reduction,
                          config_.corr_activation, config_.calib_activation};
        for (auto& t : bp.tca) t = tca::TcaParams::init(tc, rng);
        bp.spatial_bn = BatchNorm::make(spec.out_channels);
        std::fill(bp.spatial_bn.gamma.mutable_data().begin(), bp.spatial_bn.gamma.mutable_data().end(), 1e-6);
        if (spec.in_channels != spec.out_channels) {
            bp.spatial_residual = make_projection(spec.in_channels, spec.out_channels, 1, rng);
        }
        bp.tf = tf::TfParams::init({spec.out_channels, config_.aff_reduction}, rng);
        if (spec.stride != 1) {
            bp.temporal_residual = make_projection(spec.out_channels, spec.out_channels, spec.stride, rng);
        }
        blocks_.push_back(std::move(bp));
    }
    const std::size_t c_last = config_.blocks.back().out_channels;
    const double bound = 1.0 / std::sqrt(static_cast<double>(c_last));
    classifier_w_ = Tensor::uniform({config_.num_classes, c_last}, -bound, bound, rng, true);
    classifier_b_ = Tensor::uniform({config_.num_classes}, -bound, bound, rng, true);
}

Tensor Model::forward(const Tensor& batch, Mode mode)
{
    if (batch.rank() != 4 || batch.dim(2) != graph_.num_joints() || batch.dim(3) != config_.in_channels) {
        throw ShapeError("model input must be (B, T, " + std::to_string(graph_.num_joints()) + ", " +
                         std::to_string(config_.in_channels) + "), got " + shape_str(batch.shape()));
    }
    if (batch.dim(1) < config_.min_frames()) {
        throw ValidationError("sequence of " + std::to_string(batch.dim(1)) + " frames is shorter than " +
                              std::to_string(config_.min_frames()) + " required by the stride-2 stages");
    }
    Tensor x = batch_norm(batch, input_bn_, mode);
    for (auto& block : blocks_) x = tcaf_block(x, block, partitions_, mode);
    Tensor pooled = pool(x, {1, 2}, PoolMode::mean);  // (B, C)
    return linear(pooled, classifier_w_, classifier_b_);
}

NamedTensors Model::parameters() const
{
    NamedTensors params, buffers;
    input_bn_.collect("input_bn", params, buffers);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const auto& b = blocks_[i];
        const std::string p = "block" + std::to_string(i);
        for (std::size_t k = 0; k < b.tca.size(); ++k) b.tca[k].collect(p + ".tca" + std::to_string(k), params);
        b.spatial_bn.collect(p + ".spatial_bn", params, buffers);
        if (b.spatial_residual) collect_projection(p + ".spatial_res", *b.spatial_residual, params, buffers);
        b.tf.collect(p + ".tf", params, buffers);
        if (b.temporal_residual) collect_projection(p + ".temporal_res", *b.temporal_residual, params, buffers);
    }
    params.emplace_back("classifier.w", classifier_w_);
    params.emplace_back("classifier.b", classifier_b_);
    return params;
}

NamedTensors Model::buffers() const
{
    NamedTensors params, buffers;
    input_bn_.collect("input_bn", params, buffers);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const auto& b = blocks_[i];
        const std::string p = "block" + std::to_string(i);
        b.spatial_bn.collect(p + ".spatial_bn", params, buffers);
        if (b.spatial_residual) collect_projection(p + ".spatial_res", *b.spatial_residual, params, buffers);
        b.tf.collect(p + ".tf", params, buffers);
        if (b.temporal_residual) collect_projection(p + ".temporal_res", *b.temporal_residual, params, buffers);
    }
    return buffers;
}

std::size_t Model::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& [name, t] : parameters()) n += t.numel();
    return n;
}

std::string parameter_group(const std::string& name)
{
    auto dot = name.find('.');
    if (dot == std::string::npos) return name;
    if (name.rfind("block", 0) == 0) {
        auto second = name.find('.', dot + 1);
        return name.substr(0, second);
    }
    return name.substr(0, dot);
}

void save_checkpoint(const std::filesystem::path& manifest, const Model& model)
{
    auto payload = manifest;
    payload.replace_extension(".bin");
    std::ofstream bin(payload, std::ios::binary);
    if (!bin) throw ValidationError("cannot write " + payload.string());
    nlohmann::json table = nlohmann::json::array();
    std::size_t offset = 0;
    auto emit = [&](const NamedTensors& ts, const char* kind) {
        for (const auto& [name, t] : ts) {
            table.push_back({{"name", name}, {"kind", kind}, {"shape", t.shape()}, {"offset", offset}});
            write_tensor(bin, t);
            offset += serialized_size(t);
        }
    };
    emit(model.parameters(), "param");
    emit(model.buffers(), "buffer");
    bin.close();
    if (!bin) throw ValidationError("failed writing " + payload.string());
    nlohmann::json j = {{"format", "tcagcn-checkpoint/1"},
                        {"config", config_to_json(model.config())},
                        {"graph", graph::graph_to_json(model.graph())},
                        {"payload", payload.filename().string()},
                        {"tensors", table}};
    std::ofstream out(manifest, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + manifest.string());
    out << j.dump(2) << '\n';
}

Model load_checkpoint(const std::filesystem::path& manifest)
{
    std::ifstream in(manifest);
    if (!in) throw ValidationError("cannot open checkpoint " + manifest.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw ValidationError("checkpoint " + manifest.string() + ": " + ex.what());
    }
    if (j.value("format", "") != "tcagcn-checkpoint/1") throw ValidationError("not a tcagcn checkpoint");
    Model model(config_from_json(j.at("config")), graph::graph_from_json(j.at("graph")), 0);
    std::map<std::string, Tensor> slots;
    for (const auto& [name, t] : model.parameters()) slots.emplace(name, t);
    for (const auto& [name, t] : model.buffers()) slots.emplace(name, t);

    const auto payload = manifest.parent_path() / j.at("payload").get<std::string>();
    std::ifstream bin(payload, std::ios::binary);
    if (!bin) throw ValidationError("cannot open checkpoint payload " + payload.string());
    std::size_t restored = 0;
    for (const auto& entry : j.at("tensors")) {
        const auto name = entry.at("name").get<std::string>();
        auto it = slots.find(name);
        if (it == slots.end()) throw ValidationError("checkpoint has unknown tensor '" + name + "'");
        bin.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::size_t>()));
        Tensor stored = read_tensor(bin);
        if (stored.shape() != it->second.shape()) {
            throw ValidationError("checkpoint tensor '" + name + "' has shape " + shape_str(stored.shape()) +
                                  ", model expects " + shape_str(it->second.shape()));
        }
        auto dst = it->second.mutable_data();
        std::copy(stored.data().begin(), stored.data().end(), dst.begin());
        ++restored;
    }
    if (restored != slots.size()) throw ValidationError("checkpoint is missing tensors");
    return model;
}

}  // namespace tcagcn::net
