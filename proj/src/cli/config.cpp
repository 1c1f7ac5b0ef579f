#include <cstdlib>
#include <fstream>
#include <set>

#include "tcagcn/cli.hpp"

namespace tcagcn::cli {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw ValidationError("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out)
{
    if (j.contains(key)) out = j.at(key).get<T>();
}

json schedule_to_json(const net::Schedule& s)
{
    return {{"epochs", s.epochs},
            {"batch_size", s.batch_size},
            {"base_lr", s.base_lr},
            {"momentum", s.momentum},
            {"weight_decay", s.weight_decay},
            {"warmup_epochs", s.warmup_epochs},
            {"decay_epochs", s.decay_epochs},
            {"decay_factor", s.decay_factor},
            {"target_train_acc", s.target_train_acc}};
}

net::Schedule schedule_from_json(const json& j)
{
    reject_unknown(j,
                   {"epochs", "batch_size", "base_lr", "momentum", "weight_decay", "warmup_epochs", "decay_epochs",
                    "decay_factor", "target_train_acc"},
                   "schedule");
    net::Schedule s;
    read_opt(j, "epochs", s.epochs);
    read_opt(j, "batch_size", s.batch_size);
    read_opt(j, "base_lr", s.base_lr);
    read_opt(j, "momentum", s.momentum);
    read_opt(j, "weight_decay", s.weight_decay);
    read_opt(j, "warmup_epochs", s.warmup_epochs);
    read_opt(j, "decay_epochs", s.decay_epochs);
    read_opt(j, "decay_factor", s.decay_factor);
    read_opt(j, "target_train_acc", s.target_train_acc);
    return s;
}

json weights_to_json(const fusion::Weights& w) { return json::array({w.a, w.b, w.c, w.d}); }

fusion::Weights weights_from_json(const json& j)
{
    auto v = j.get<std::vector<double>>();
    if (v.size() != 4) throw ValidationError("fusion preset needs four weights [a, b, c, d]");
    return {v[0], v[1], v[2], v[3]};
}

json fuse_to_json(const FuseSettings& f)
{
    json j = {{"scores", f.scores}, {"step", f.step}, {"mode", f.mode}};
    j["preset"] = f.preset ? weights_to_json(*f.preset) : json(nullptr);
    return j;
}

FuseSettings fuse_from_json(const json& j)
{
    reject_unknown(j, {"scores", "step", "mode", "preset"}, "fuse");
    FuseSettings f;
    read_opt(j, "scores", f.scores);
    read_opt(j, "step", f.step);
    read_opt(j, "mode", f.mode);
    if (j.contains("preset") && !j.at("preset").is_null()) f.preset = weights_from_json(j.at("preset"));
    return f;
}

}  // namespace

std::size_t env_threads()
{
    const char* v = std::getenv("TCAGCN_THREADS");
    if (!v || !*v) return 1;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) throw ValidationError(std::string("TCAGCN_THREADS must be a positive integer, got '") + v + "'");
    return static_cast<std::size_t>(n);
}

std::filesystem::path resolve_graph(const std::string& name_or_path)
{
    if (name_or_path.empty()) throw ValidationError("no graph given");
    for (const char* name : {"ntu25", "nwucla20", "toy9"}) {
        if (name_or_path != name) continue;
        const char* env = std::getenv("TCAGCN_DATA_DIR");
        std::filesystem::path dir = env && *env ? env : TCAGCN_DATA_DIR;
        return dir / "graphs" / (name_or_path + ".json");
    }
    std::filesystem::path p(name_or_path);
    if (!std::filesystem::exists(p)) {
        throw ValidationError("graph '" + name_or_path + "' is neither a bundled template nor an existing file");
    }
    return p;
}

void SyntheticSpec::validate() const
{
    if (num_classes < 2) throw ValidationError("synthetic data needs at least 2 classes");
    if (samples_per_class == 0) throw ValidationError("samples_per_class must be positive");
    if (frames < 2) throw ValidationError("synthetic sequences need at least 2 frames");
    if (!(amplitude > 0.0)) throw ValidationError("amplitude must be positive");
    if (!(noise >= 0.0)) throw ValidationError("noise must be non-negative");
    if (graph.empty()) throw ValidationError("synthetic spec needs a graph template");
}

json synth_to_json(const SyntheticSpec& s)
{
    return {{"num_classes", s.num_classes}, {"samples_per_class", s.samples_per_class},
            {"frames", s.frames},           {"graph", s.graph},
            {"amplitude", s.amplitude},     {"noise", s.noise},
            {"seed", s.seed}};
}

SyntheticSpec synth_from_json(const json& j)
{
    reject_unknown(j, {"num_classes", "samples_per_class", "frames", "graph", "amplitude", "noise", "seed"}, "synth");
    SyntheticSpec s;
    try {
        read_opt(j, "num_classes", s.num_classes);
        read_opt(j, "samples_per_class", s.samples_per_class);
        read_opt(j, "frames", s.frames);
        read_opt(j, "graph", s.graph);
        read_opt(j, "amplitude", s.amplitude);
        read_opt(j, "noise", s.noise);
        read_opt(j, "seed", s.seed);
    } catch (const json::exception& ex) {
        throw ValidationError(std::string("synth: ") + ex.what());
    }
    return s;
}

void RunConfig::validate() const
{
    if (!(width_scale > 0.0)) throw ValidationError("width_scale must be positive");
    net::stream_from_name(stream);
    if (streams.empty()) throw ValidationError("streams must name at least one stream");
    for (const auto& s : streams) net::stream_from_name(s);
    schedule.validate();
    synth.validate();
    if (!(fuse.step > 0.0 && fuse.step <= 1.0)) throw ValidationError("fuse.step must lie in (0, 1]");
    if (fuse.mode != "exact" && fuse.mode != "greedy" && fuse.mode != "static") {
        throw ValidationError("fuse.mode must be exact, greedy or static, got '" + fuse.mode + "'");
    }
}

json config_to_json(const RunConfig& c)
{
    return {{"dataset", c.dataset},
            {"eval_dataset", c.eval_dataset},
            {"out_dir", c.out_dir},
            {"checkpoint", c.checkpoint},
            {"sample_id", c.sample_id},
            {"stream", c.stream},
            {"streams", c.streams},
            {"width_scale", c.width_scale},
            {"seed", c.seed},
            {"schedule", schedule_to_json(c.schedule)},
            {"synth", synth_to_json(c.synth)},
            {"fuse", fuse_to_json(c.fuse)}};
}

RunConfig config_from_json(const json& j)
{
    reject_unknown(j,
                   {"dataset", "eval_dataset", "out_dir", "checkpoint", "sample_id", "stream", "streams",
                    "width_scale", "seed", "schedule", "synth", "fuse"},
                   "config");
    RunConfig c;
    try {
        read_opt(j, "dataset", c.dataset);
        read_opt(j, "eval_dataset", c.eval_dataset);
        read_opt(j, "out_dir", c.out_dir);
        read_opt(j, "checkpoint", c.checkpoint);
        read_opt(j, "sample_id", c.sample_id);
        read_opt(j, "stream", c.stream);
        read_opt(j, "streams", c.streams);
        read_opt(j, "width_scale", c.width_scale);
        read_opt(j, "seed", c.seed);
        if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
        if (j.contains("synth")) c.synth = synth_from_json(j.at("synth"));
        if (j.contains("fuse")) c.fuse = fuse_from_json(j.at("fuse"));
    } catch (const json::exception& ex) {
        throw ValidationError(std::string("config: ") + ex.what());
    }
    c.schedule.seed = c.seed;
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& ex) {
        throw ValidationError("config " + path.string() + ": " + ex.what());
    }
    return config_from_json(j);
}

}  // namespace tcagcn::cli
