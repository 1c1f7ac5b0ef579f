#include "tcagcn/dataset.hpp"

#include <fstream>
#include <set>

#include "tcagcn/tensor_io.hpp"

namespace tcagcn::net {

void LabeledDataset::validate() const
{
    if (samples.empty()) throw ValidationError("dataset is empty");
    if (ids.size() != samples.size() || labels.size() != samples.size()) {
        throw ValidationError("dataset ids/samples/labels differ in length");
    }
    if (num_classes < 2) throw ValidationError("dataset needs at least 2 classes");
    const Shape& first = samples[0].shape();
    if (first.size() != 3 || first[1] != graph.num_joints()) {
        throw ShapeError("samples must be (T, " + std::to_string(graph.num_joints()) + ", C), got " +
                         shape_str(first));
    }
    std::set<std::string> seen;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].shape() != first) {
            throw ShapeError("sample " + ids[i] + " has shape " + shape_str(samples[i].shape()) + ", expected " +
                             shape_str(first));
        }
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw ValidationError("sample " + ids[i] + " has label out of range");
        }
        if (!seen.insert(ids[i]).second) throw ValidationError("duplicate sample id " + ids[i]);
    }
}

std::string stream_name(Stream s)
{
    switch (s) {
    case Stream::joint: return "joint";
    case Stream::bone: return "bone";
    case Stream::joint_motion: return "joint_motion";
    case Stream::bone_motion: return "bone_motion";
    }
    return "joint";
}

Stream stream_from_name(const std::string& name)
{
    for (auto s : kAllStreams) {
        if (stream_name(s) == name) return s;
    }
    throw ValidationError("unknown stream '" + name + "'");
}

Tensor center_normalize(const Tensor& sample, std::size_t center)
{
    const std::size_t T = sample.dim(0), N = sample.dim(1), C = sample.dim(2);
    if (center >= N) throw ValidationError("center joint out of range");
    auto x = sample.data();
    std::vector<double> out(x.begin(), x.end());
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) out[(t * N + n) * C + c] -= x[center * C + c];
    return Tensor(sample.shape(), std::move(out));
}

Tensor bone_vectors(const Tensor& sample, const graph::SkeletonGraph& g)
{
    const std::size_t T = sample.dim(0), N = sample.dim(1), C = sample.dim(2);
    if (N != g.num_joints() || g.parent().size() != N) {
        throw ValidationError("bone stream needs the parent map of a " + std::to_string(N) + "-joint graph");
    }
    auto x = sample.data();
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        const auto& parent = g.parent()[n];
        if (!parent) continue;
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t c = 0; c < C; ++c) {
                out[(t * N + n) * C + c] = x[(t * N + n) * C + c] - x[(t * N + *parent) * C + c];
            }
    }
    return Tensor(sample.shape(), std::move(out));
}

Tensor motion_vectors(const Tensor& sample)
{
    const std::size_t T = sample.dim(0);
    const std::size_t frame = sample.numel() / T;
    auto x = sample.data();
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t t = 0; t + 1 < T; ++t)
        for (std::size_t i = 0; i < frame; ++i) out[t * frame + i] = x[(t + 1) * frame + i] - x[t * frame + i];
    return Tensor(sample.shape(), std::move(out));
}

LabeledDataset derive_stream(const LabeledDataset& data, Stream s)
{
    data.validate();
    LabeledDataset out{data.graph, data.num_classes, data.ids, {}, data.labels};
    out.samples.reserve(data.size());
    for (const auto& x : data.samples) {
        Tensor joint = center_normalize(x, data.graph.center());
        switch (s) {
        case Stream::joint: out.samples.push_back(joint); break;
        case Stream::bone: out.samples.push_back(bone_vectors(joint, data.graph)); break;
        case Stream::joint_motion: out.samples.push_back(motion_vectors(joint)); break;
        case Stream::bone_motion: out.samples.push_back(motion_vectors(bone_vectors(joint, data.graph))); break;
        }
    }
    return out;
}

std::array<LabeledDataset, 4> derive_streams(const LabeledDataset& data)
{
    return {derive_stream(data, Stream::joint), derive_stream(data, Stream::bone),
            derive_stream(data, Stream::joint_motion), derive_stream(data, Stream::bone_motion)};
}

Tensor stack_batch(const LabeledDataset& data, std::span<const std::size_t> indices)
{
    if (indices.empty()) throw ValidationError("empty batch");
    const Shape& s = data.samples.at(indices[0]).shape();
    std::vector<double> out;
    out.reserve(indices.size() * shape_numel(s));
    for (auto i : indices) {
        const auto& x = data.samples.at(i);
        if (x.shape() != s) throw ShapeError("batch samples differ in shape");
        out.insert(out.end(), x.data().begin(), x.data().end());
    }
    return Tensor({indices.size(), s[0], s[1], s[2]}, std::move(out));
}

void save_dataset(const std::filesystem::path& manifest, const LabeledDataset& data, const nlohmann::json& spec)
{
    data.validate();
    auto payload = manifest;
    payload.replace_extension(".bin");
    auto graph_file = manifest;
    graph_file.replace_extension(".graph.json");

    std::ofstream bin(payload, std::ios::binary);
    if (!bin) throw ValidationError("cannot write " + payload.string());
    nlohmann::json samples = nlohmann::json::array();
    std::size_t offset = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        samples.push_back({{"id", data.ids[i]},
                           {"label", data.labels[i]},
                           {"shape", data.samples[i].shape()},
                           {"offset", offset}});
        write_tensor(bin, data.samples[i]);
        offset += serialized_size(data.samples[i]);
    }
    bin.close();
    if (!bin) throw ValidationError("failed writing " + payload.string());

    std::ofstream g(graph_file, std::ios::binary);
    g << graph::graph_to_json(data.graph).dump(2) << '\n';

    nlohmann::json j = {{"graph_ref", graph_file.filename().string()},
                        {"num_classes", data.num_classes},
                        {"payload", payload.filename().string()},
                        {"samples", samples},
                        {"spec", spec}};
    std::ofstream out(manifest, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + manifest.string());
    out << j.dump(2) << '\n';
}

LabeledDataset load_dataset(const std::filesystem::path& manifest)
{
    std::ifstream in(manifest);
    if (!in) throw ValidationError("cannot open dataset manifest " + manifest.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw ValidationError("dataset manifest " + manifest.string() + ": " + ex.what());
    }
    try {
        const auto dir = manifest.parent_path();
        LabeledDataset data{graph::load_graph(dir / j.at("graph_ref").get<std::string>()),
                            j.at("num_classes").get<std::size_t>(),
                            {},
                            {},
                            {}};
        const auto payload = dir / j.at("payload").get<std::string>();
        std::ifstream bin(payload, std::ios::binary);
        if (!bin) throw ValidationError("cannot open dataset payload " + payload.string());
        for (const auto& s : j.at("samples")) {
            bin.seekg(static_cast<std::streamoff>(s.at("offset").get<std::size_t>()));
            Tensor x = read_tensor(bin);
            if (x.shape() != s.at("shape").get<Shape>()) {
                throw ValidationError("sample " + s.at("id").get<std::string>() + ": payload shape mismatch");
            }
            data.ids.push_back(s.at("id").get<std::string>());
            data.labels.push_back(s.at("label").get<int>());
            data.samples.push_back(std::move(x));
        }
        data.validate();
        return data;
    } catch (const nlohmann::json::exception& ex) {
        throw ValidationError("dataset manifest " + manifest.string() + ": " + ex.what());
    }
}

}  // namespace tcagcn::net
