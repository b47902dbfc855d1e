#include "fmnav/checkpoint.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "fmnav/dataset_io.hpp"
#include "fmnav/errors.hpp"

namespace fmnav::checkpoint {

using nlohmann::json;

namespace {

const char* activation_name(netfn::Activation a) {
    switch (a) {
        case netfn::Activation::relu: return "relu";
        case netfn::Activation::gelu: return "gelu";
        case netfn::Activation::tanh: return "tanh";
    }
    return "relu";
}

netfn::Activation activation_from(const std::string& s) {
    if (s == "relu") return netfn::Activation::relu;
    if (s == "gelu") return netfn::Activation::gelu;
    if (s == "tanh") return netfn::Activation::tanh;
    throw DataError("checkpoint: unknown activation '" + s + "'");
}

json params_to_json(const netfn::Params& p) {
    json j;
    j["widths"] = p.spec.layer_widths;
    j["activation"] = activation_name(p.spec.activation);
    j["seed"] = p.spec.seed;
    json layout = json::array();
    for (const netfn::LayerSlice& s : p.layout) {
        layout.push_back({{"weight_begin", s.weight_begin},
                          {"bias_begin", s.bias_begin},
                          {"in", s.in},
                          {"out", s.out}});
    }
    j["layout"] = layout;
    j["values"] = p.values;
    return j;
}

netfn::Params params_from_json(const json& j) {
    netfn::MlpSpec spec;
    spec.layer_widths = j.at("widths").get<std::vector<int>>();
    spec.activation = activation_from(j.at("activation").get<std::string>());
    spec.seed = j.at("seed").get<std::uint64_t>();
    netfn::Params p = netfn::init_params(spec);  // rebuilds the layout
    const std::vector<double> values = j.at("values").get<std::vector<double>>();
    if (values.size() != p.values.size()) {
        throw DataError("checkpoint: parameter count mismatch");
    }
    p.values = values;
    for (double v : p.values) {
        if (!std::isfinite(v)) throw DataError("checkpoint: non-finite parameter");
    }
    // Cross-check the stored layout descriptors.
    const json& layout = j.at("layout");
    if (layout.size() != p.layout.size()) throw DataError("checkpoint: layout mismatch");
    for (std::size_t i = 0; i < p.layout.size(); ++i) {
        if (layout[i].at("weight_begin").get<int>() != p.layout[i].weight_begin ||
            layout[i].at("bias_begin").get<int>() != p.layout[i].bias_begin ||
            layout[i].at("in").get<int>() != p.layout[i].in ||
            layout[i].at("out").get<int>() != p.layout[i].out) {
            throw DataError("checkpoint: layout descriptor mismatch");
        }
    }
    return p;
}

json train_to_json(const policy::TrainSettings& t) {
    return {{"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"base_lr", t.base_lr},
            {"weight_decay", t.weight_decay},
            {"beta1", t.beta1},
            {"beta2", t.beta2},
            {"adam_eps", t.adam_eps},
            {"lr_schedule", static_cast<int>(t.lr_schedule)},
            {"warmup_frac", t.warmup_frac},
            {"seed", t.seed}};
}

policy::TrainSettings train_from_json(const json& j) {
    policy::TrainSettings t;
    t.epochs = j.at("epochs").get<int>();
    t.batch_size = j.at("batch_size").get<int>();
    t.base_lr = j.at("base_lr").get<double>();
    t.weight_decay = j.at("weight_decay").get<double>();
    t.beta1 = j.at("beta1").get<double>();
    t.beta2 = j.at("beta2").get<double>();
    t.adam_eps = j.at("adam_eps").get<double>();
    t.lr_schedule = static_cast<netfn::ScheduleKind>(j.at("lr_schedule").get<int>());
    t.warmup_frac = j.at("warmup_frac").get<double>();
    t.seed = j.at("seed").get<std::uint64_t>();
    return t;
}

}  // namespace

void write_checkpoint(const std::string& path, const policy::Policy& pol,
                      const policy::TrainSettings& train_echo) {
    json j;
    j["schema_version"] = kSchemaVersion;
    const policy::PolicyConfig& c = pol.config;
    j["policy_config"] = {{"head_kind", c.head_kind == policy::HeadKind::cfm ? "cfm" : "ddpm"},
                          {"use_depth", c.use_depth},
                          {"context_dim", c.context_dim},
                          {"goal_mask_prob", c.goal_mask_prob},
                          {"lambda_dist", c.lambda_dist},
                          {"ray_count", c.ray_count},
                          {"encoder_hidden", c.encoder_hidden},
                          {"head_hidden", c.head_hidden},
                          {"dist_hidden", c.dist_hidden},
                          {"activation", activation_name(c.activation)},
                          {"ddpm_train_steps", c.ddpm_train_steps},
                          {"ddpm_schedule",
                           c.ddpm_schedule == ddpm::ScheduleShape::linear ? "linear"
                                                                          : "square_cosine"}};
    j["norm_stats"] = {{"mean", pol.stats.mean}, {"scale", pol.stats.scale}};
    j["params"] = {{"encoder", params_to_json(pol.encoder)},
                   {"head", params_to_json(pol.head)},
                   {"dist_head", params_to_json(pol.dist_head)},
                   {"mask_token", pol.mask_token}};
    j["train_echo"] = train_to_json(train_echo);
    dataset_io::write_file_atomic(path, j.dump() + "\n");
}

LoadedCheckpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("checkpoint: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: parse failure: ") + e.what());
    }
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
        throw DataError("checkpoint: unsupported schema version");
    }
    LoadedCheckpoint out;
    policy::Policy& p = out.policy;
    const json& c = j.at("policy_config");
    p.config.head_kind = c.at("head_kind").get<std::string>() == "cfm" ? policy::HeadKind::cfm
                                                                       : policy::HeadKind::ddpm;
    p.config.use_depth = c.at("use_depth").get<bool>();
    p.config.context_dim = c.at("context_dim").get<int>();
    p.config.goal_mask_prob = c.at("goal_mask_prob").get<double>();
    p.config.lambda_dist = c.at("lambda_dist").get<double>();
    p.config.ray_count = c.at("ray_count").get<int>();
    p.config.encoder_hidden = c.at("encoder_hidden").get<std::vector<int>>();
    p.config.head_hidden = c.at("head_hidden").get<std::vector<int>>();
    p.config.dist_hidden = c.at("dist_hidden").get<std::vector<int>>();
    p.config.activation = activation_from(c.at("activation").get<std::string>());
    p.config.ddpm_train_steps = c.at("ddpm_train_steps").get<int>();
    p.config.ddpm_schedule = c.at("ddpm_schedule").get<std::string>() == "linear"
                                 ? ddpm::ScheduleShape::linear
                                 : ddpm::ScheduleShape::square_cosine;
    p.stats.mean = j.at("norm_stats").at("mean").get<std::array<double, 2>>();
    p.stats.scale = j.at("norm_stats").at("scale").get<std::array<double, 2>>();
    p.encoder = params_from_json(j.at("params").at("encoder"));
    p.head = params_from_json(j.at("params").at("head"));
    p.dist_head = params_from_json(j.at("params").at("dist_head"));
    p.mask_token = j.at("params").at("mask_token").get<std::vector<double>>();
    if (static_cast<int>(p.mask_token.size()) != p.config.goal_dim()) {
        throw DataError("checkpoint: mask token size mismatch");
    }
    if (p.config.head_kind == policy::HeadKind::ddpm) {
        p.schedule = ddpm::build_schedule(p.config.ddpm_train_steps, p.config.ddpm_schedule);
    }
    out.train_echo = train_from_json(j.at("train_echo"));
    return out;
}

}  // namespace fmnav::checkpoint
