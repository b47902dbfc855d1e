#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fmnav/eval.hpp"
#include "fmnav/policy.hpp"
#include "fmnav/world.hpp"

namespace fmnav::config {

struct WorldSection {
    int n_envs = 24;
    int records_per_env = 300;
    bool with_depth = true;
    int ray_count = world::kDefaultRayCount;
    int goal_min_ahead = 8;
    int goal_max_ahead = 32;
    bool mix_difficulties = true;
    std::string difficulty = "hard";
};

struct NetSection {
    int context_dim = 128;
    std::vector<int> encoder_hidden = {256};
    std::vector<int> head_hidden = {256, 256};
    std::vector<int> dist_hidden = {64};
    std::string activation = "relu";
};

struct PolicySection {
    std::string head_kind = "cfm";
    bool use_depth = true;
    double goal_mask_prob = 0.5;
    double lambda_dist = 1e-2;
};

struct TrainSection {
    int epochs = 30;
    int batch_size = 64;
    double base_lr = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::string lr_schedule = "half_cosine_warmup";
    double warmup_frac = 0.05;
};

struct CfmSection {
    int default_k = 10;
    std::string method = "euler";
};

struct DdpmSection {
    int train_steps = 50;
    std::string schedule = "square_cosine";
};

struct EvalSection {
    int max_cycles = 200;
    int n_samples = 8;
    int execute_horizon = 4;
    double success_radius = 0.5;
    int topo_node_stride = 4;
    int goal_lookahead = 2;
    int episodes = 100;
    std::vector<int> k_values = {2, 5, 10};
    std::string difficulty = "hard";
};

// Full run configuration; one file drives every command.
struct RunConfig {
    int schema_version = 1;
    std::uint64_t master_seed = 20240101;
    std::string out_dir = "runs/default";
    int workers = 1;
    WorldSection world;
    NetSection net;
    PolicySection policy;
    TrainSection train;
    CfmSection cfm;
    DdpmSection ddpm;
    EvalSection eval;
};

RunConfig default_config();

// Parses and validates against the schema; unknown keys and malformed
// values raise DataError.
RunConfig load_config(const std::string& path);

std::string config_to_json_text(const RunConfig& cfg);
RunConfig config_from_json_text(const std::string& text);

// Section adapters into the module-level config structs.
world::DatasetConfig dataset_config(const RunConfig& cfg);
policy::PolicyConfig policy_config(const RunConfig& cfg);
policy::TrainSettings train_settings(const RunConfig& cfg);
eval::EpisodeSettings episode_settings(const RunConfig& cfg);
world::Difficulty parse_difficulty(const std::string& name);

}  // namespace fmnav::config
