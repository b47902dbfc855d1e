#include "fmnav/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fmnav/errors.hpp"

namespace fmnav::config {

using nlohmann::json;

namespace {

json to_json(const RunConfig& c) {
    json j;
    j["schema_version"] = c.schema_version;
    j["master_seed"] = c.master_seed;
    j["out_dir"] = c.out_dir;
    j["workers"] = c.workers;
    j["world"] = {{"n_envs", c.world.n_envs},
                  {"records_per_env", c.world.records_per_env},
                  {"with_depth", c.world.with_depth},
                  {"ray_count", c.world.ray_count},
                  {"goal_min_ahead", c.world.goal_min_ahead},
                  {"goal_max_ahead", c.world.goal_max_ahead},
                  {"mix_difficulties", c.world.mix_difficulties},
                  {"difficulty", c.world.difficulty}};
    j["net"] = {{"context_dim", c.net.context_dim},
                {"encoder_hidden", c.net.encoder_hidden},
                {"head_hidden", c.net.head_hidden},
                {"dist_hidden", c.net.dist_hidden},
                {"activation", c.net.activation}};
    j["policy"] = {{"head_kind", c.policy.head_kind},
                   {"use_depth", c.policy.use_depth},
                   {"goal_mask_prob", c.policy.goal_mask_prob},
                   {"lambda_dist", c.policy.lambda_dist}};
    j["train"] = {{"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"base_lr", c.train.base_lr},
                  {"weight_decay", c.train.weight_decay},
                  {"beta1", c.train.beta1},
                  {"beta2", c.train.beta2},
                  {"adam_eps", c.train.adam_eps},
                  {"lr_schedule", c.train.lr_schedule},
                  {"warmup_frac", c.train.warmup_frac}};
    j["cfm"] = {{"default_k", c.cfm.default_k}, {"method", c.cfm.method}};
    j["ddpm"] = {{"train_steps", c.ddpm.train_steps}, {"schedule", c.ddpm.schedule}};
    j["eval"] = {{"max_cycles", c.eval.max_cycles},
                 {"n_samples", c.eval.n_samples},
                 {"execute_horizon", c.eval.execute_horizon},
                 {"success_radius", c.eval.success_radius},
                 {"topo_node_stride", c.eval.topo_node_stride},
                 {"goal_lookahead", c.eval.goal_lookahead},
                 {"episodes", c.eval.episodes},
                 {"k_values", c.eval.k_values},
                 {"difficulty", c.eval.difficulty}};
    return j;
}

// Rejects keys that the schema (the default config shape) does not contain.
void check_unknown_keys(const json& value, const json& schema, const std::string& prefix) {
    if (!value.is_object()) return;
    for (auto it = value.begin(); it != value.end(); ++it) {
        if (!schema.contains(it.key())) {
            throw DataError("config: unknown key '" + prefix + it.key() + "'");
        }
        if (it.value().is_object()) {
            check_unknown_keys(it.value(), schema.at(it.key()), prefix + it.key() + ".");
        }
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception& e) {
            throw DataError("config: bad value for '" + std::string(key) + "': " + e.what());
        }
    }
}

void validate(const RunConfig& c) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw DataError(std::string("config: ") + what);
    };
    require(c.schema_version == 1, "unsupported schema_version");
    require(c.workers >= 1, "workers must be >= 1");
    require(c.world.n_envs >= 1, "world.n_envs must be >= 1");
    require(c.world.records_per_env >= 1, "world.records_per_env must be >= 1");
    require(c.world.ray_count >= 2, "world.ray_count must be >= 2");
    require(c.world.goal_min_ahead >= 1 && c.world.goal_max_ahead >= c.world.goal_min_ahead,
            "world goal window invalid");
    require(c.net.context_dim >= 1, "net.context_dim must be >= 1");
    require(c.policy.head_kind == "cfm" || c.policy.head_kind == "ddpm",
            "policy.head_kind must be cfm or ddpm");
    require(c.policy.goal_mask_prob >= 0.0 && c.policy.goal_mask_prob <= 1.0,
            "policy.goal_mask_prob must be in [0,1]");
    require(c.policy.lambda_dist > 0.0, "policy.lambda_dist must be > 0");
    require(c.train.epochs >= 1 && c.train.batch_size >= 1, "train sizes invalid");
    require(c.train.base_lr > 0.0, "train.base_lr must be > 0");
    require(c.train.warmup_frac >= 0.0 && c.train.warmup_frac < 1.0,
            "train.warmup_frac must be in [0,1)");
    require(c.train.lr_schedule == "half_cosine_warmup" || c.train.lr_schedule == "one_cycle" ||
                c.train.lr_schedule == "constant",
            "train.lr_schedule unknown");
    require(c.cfm.default_k >= 1, "cfm.default_k must be >= 1");
    require(c.cfm.method == "euler" || c.cfm.method == "rk4", "cfm.method unknown");
    require(c.ddpm.train_steps >= 1, "ddpm.train_steps must be >= 1");
    require(c.ddpm.schedule == "square_cosine" || c.ddpm.schedule == "linear",
            "ddpm.schedule unknown");
    require(c.eval.max_cycles >= 1 && c.eval.n_samples >= 1 && c.eval.execute_horizon >= 1,
            "eval sizes invalid");
    require(c.eval.execute_horizon <= core::kActionHorizon,
            "eval.execute_horizon exceeds action horizon");
    require(!c.eval.k_values.empty(), "eval.k_values empty");
    parse_difficulty(c.world.difficulty);
    parse_difficulty(c.eval.difficulty);
    if (c.net.activation != "relu" && c.net.activation != "gelu" && c.net.activation != "tanh") {
        throw DataError("config: net.activation unknown");
    }
}

}  // namespace

RunConfig default_config() { return RunConfig{}; }

std::string config_to_json_text(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

RunConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("config: parse failure: ") + e.what());
    }
    RunConfig c;
    check_unknown_keys(j, to_json(c), "");

    read(j, "schema_version", c.schema_version);
    read(j, "master_seed", c.master_seed);
    read(j, "out_dir", c.out_dir);
    read(j, "workers", c.workers);
    if (j.contains("world")) {
        const json& w = j["world"];
        read(w, "n_envs", c.world.n_envs);
        read(w, "records_per_env", c.world.records_per_env);
        read(w, "with_depth", c.world.with_depth);
        read(w, "ray_count", c.world.ray_count);
        read(w, "goal_min_ahead", c.world.goal_min_ahead);
        read(w, "goal_max_ahead", c.world.goal_max_ahead);
        read(w, "mix_difficulties", c.world.mix_difficulties);
        read(w, "difficulty", c.world.difficulty);
    }
    if (j.contains("net")) {
        const json& n = j["net"];
        read(n, "context_dim", c.net.context_dim);
        read(n, "encoder_hidden", c.net.encoder_hidden);
        read(n, "head_hidden", c.net.head_hidden);
        read(n, "dist_hidden", c.net.dist_hidden);
        read(n, "activation", c.net.activation);
    }
    if (j.contains("policy")) {
        const json& p = j["policy"];
        read(p, "head_kind", c.policy.head_kind);
        read(p, "use_depth", c.policy.use_depth);
        read(p, "goal_mask_prob", c.policy.goal_mask_prob);
        read(p, "lambda_dist", c.policy.lambda_dist);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        read(t, "epochs", c.train.epochs);
        read(t, "batch_size", c.train.batch_size);
        read(t, "base_lr", c.train.base_lr);
        read(t, "weight_decay", c.train.weight_decay);
        read(t, "beta1", c.train.beta1);
        read(t, "beta2", c.train.beta2);
        read(t, "adam_eps", c.train.adam_eps);
        read(t, "lr_schedule", c.train.lr_schedule);
        read(t, "warmup_frac", c.train.warmup_frac);
    }
    if (j.contains("cfm")) {
        read(j["cfm"], "default_k", c.cfm.default_k);
        read(j["cfm"], "method", c.cfm.method);
    }
    if (j.contains("ddpm")) {
        read(j["ddpm"], "train_steps", c.ddpm.train_steps);
        read(j["ddpm"], "schedule", c.ddpm.schedule);
    }
    if (j.contains("eval")) {
        const json& e = j["eval"];
        read(e, "max_cycles", c.eval.max_cycles);
        read(e, "n_samples", c.eval.n_samples);
        read(e, "execute_horizon", c.eval.execute_horizon);
        read(e, "success_radius", c.eval.success_radius);
        read(e, "topo_node_stride", c.eval.topo_node_stride);
        read(e, "goal_lookahead", c.eval.goal_lookahead);
        read(e, "episodes", c.eval.episodes);
        read(e, "k_values", c.eval.k_values);
        read(e, "difficulty", c.eval.difficulty);
    }
    validate(c);
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json_text(ss.str());
}

world::Difficulty parse_difficulty(const std::string& name) {
    if (name == "easy") return world::Difficulty::easy;
    if (name == "hard") return world::Difficulty::hard;
    throw DataError("config: difficulty must be easy or hard, got '" + name + "'");
}

world::DatasetConfig dataset_config(const RunConfig& cfg) {
    world::DatasetConfig d;
    d.n_envs = cfg.world.n_envs;
    d.records_per_env = cfg.world.records_per_env;
    d.with_depth = cfg.world.with_depth;
    d.ray_count = cfg.world.ray_count;
    d.goal_min_ahead = cfg.world.goal_min_ahead;
    d.goal_max_ahead = cfg.world.goal_max_ahead;
    d.mix_difficulties = cfg.world.mix_difficulties;
    d.difficulty_mix = parse_difficulty(cfg.world.difficulty);
    return d;
}

namespace {

netfn::Activation parse_activation(const std::string& name) {
    if (name == "relu") return netfn::Activation::relu;
    if (name == "gelu") return netfn::Activation::gelu;
    return netfn::Activation::tanh;
}

}  // namespace

policy::PolicyConfig policy_config(const RunConfig& cfg) {
    policy::PolicyConfig p;
    p.head_kind =
        cfg.policy.head_kind == "cfm" ? policy::HeadKind::cfm : policy::HeadKind::ddpm;
    p.use_depth = cfg.policy.use_depth;
    p.context_dim = cfg.net.context_dim;
    p.goal_mask_prob = cfg.policy.goal_mask_prob;
    p.lambda_dist = cfg.policy.lambda_dist;
    p.ray_count = cfg.world.ray_count;
    p.encoder_hidden = cfg.net.encoder_hidden;
    p.head_hidden = cfg.net.head_hidden;
    p.dist_hidden = cfg.net.dist_hidden;
    p.activation = parse_activation(cfg.net.activation);
    p.ddpm_train_steps = cfg.ddpm.train_steps;
    p.ddpm_schedule = cfg.ddpm.schedule == "linear" ? ddpm::ScheduleShape::linear
                                                    : ddpm::ScheduleShape::square_cosine;
    return p;
}

policy::TrainSettings train_settings(const RunConfig& cfg) {
    policy::TrainSettings t;
    t.epochs = cfg.train.epochs;
    t.batch_size = cfg.train.batch_size;
    t.base_lr = cfg.train.base_lr;
    t.weight_decay = cfg.train.weight_decay;
    t.beta1 = cfg.train.beta1;
    t.beta2 = cfg.train.beta2;
    t.adam_eps = cfg.train.adam_eps;
    if (cfg.train.lr_schedule == "one_cycle") {
        t.lr_schedule = netfn::ScheduleKind::one_cycle;
    } else if (cfg.train.lr_schedule == "constant") {
        t.lr_schedule = netfn::ScheduleKind::constant;
    } else {
        t.lr_schedule = netfn::ScheduleKind::half_cosine_warmup;
    }
    t.warmup_frac = cfg.train.warmup_frac;
    t.seed = cfg.master_seed;
    return t;
}

eval::EpisodeSettings episode_settings(const RunConfig& cfg) {
    eval::EpisodeSettings s;
    s.k_steps = cfg.cfm.default_k;
    s.max_cycles = cfg.eval.max_cycles;
    s.n_samples = cfg.eval.n_samples;
    s.execute_horizon = cfg.eval.execute_horizon;
    s.success_radius = cfg.eval.success_radius;
    s.topo_node_stride = cfg.eval.topo_node_stride;
    s.goal_lookahead = cfg.eval.goal_lookahead;
    s.ray_count = cfg.world.ray_count;
    return s;
}

}  // namespace fmnav::config
