#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fmnav/cfm.hpp"
#include "fmnav/core.hpp"
#include "fmnav/ddpm.hpp"
#include "fmnav/netfn.hpp"
#include "fmnav/rng.hpp"
#include "fmnav/world.hpp"

namespace fmnav::policy {

enum class HeadKind { cfm, ddpm };

struct PolicyConfig {
    HeadKind head_kind = HeadKind::cfm;
    bool use_depth = true;
    int context_dim = 128;
    double goal_mask_prob = 0.5;
    double lambda_dist = 1e-2;
    int ray_count = world::kDefaultRayCount;
    std::vector<int> encoder_hidden = {256};
    std::vector<int> head_hidden = {256, 256};
    std::vector<int> dist_hidden = {64};
    netfn::Activation activation = netfn::Activation::relu;
    int ddpm_train_steps = 50;
    ddpm::ScheduleShape ddpm_schedule = ddpm::ScheduleShape::square_cosine;

    int obs_dim() const { return world::observation_dim(ray_count); }
    int goal_dim() const { return obs_dim(); }
    int encoder_input_dim() const {
        return core::kContextSteps * obs_dim() + goal_dim() +
               (use_depth ? core::kDepthDim : 0);
    }
    int head_input_dim() const { return cfm::kTimeFeatures + core::kActionDim + context_dim; }
};

// Trained navigation policy: context encoder, generative action head
// (velocity or noise predictor), temporal-distance head, the learned goal
// mask token, and the action normalization stats baked in at train time.
struct Policy {
    PolicyConfig config;
    core::NormStats stats;
    netfn::Params encoder;
    netfn::Params head;
    netfn::Params dist_head;
    std::vector<double> mask_token;
    ddpm::NoiseSchedule schedule;  // used by the ddpm head
};

// Precollected route memory: observation features per node, plus the
// recorded pose. The pose is withheld from the policy; only the evaluator
// uses it for ground-truth bookkeeping.
struct TopoNode {
    std::vector<double> features;
    world::Pose pose;
};

struct TopoMap {
    std::vector<TopoNode> nodes;
};

// Deterministic context embedding. The goal slot takes either the
// context's goal features or the learned mask token when mask_goal is set.
// Throws ContractError when required inputs are missing for the config.
std::vector<double> encode_context(const Policy& policy, const core::ObservationContext& ctx,
                                   bool mask_goal);

struct TrainSettings {
    int epochs = 30;
    int batch_size = 64;
    double base_lr = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    netfn::ScheduleKind lr_schedule = netfn::ScheduleKind::half_cosine_warmup;
    double warmup_frac = 0.05;
    std::uint64_t seed = 0;
};

struct TrainResult {
    Policy policy;
    std::vector<double> step_losses;  // combined loss per optimizer step
};

// End-to-end supervised training of encoder, generative head, distance
// head, and mask token. Per-sample goal masking with goal_mask_prob;
// masked samples contribute no distance-loss term. Deterministic given
// settings.seed. Throws NumericalError with the step index on divergence.
TrainResult train_policy(const std::vector<world::TrainingRecord>& dataset,
                         const PolicyConfig& config, const TrainSettings& settings,
                         const core::NormStats& stats);

// Draws n_samples Gaussian initializations, integrates them through the
// configured head with K steps, and unnormalizes. With mask_goal set the
// result is independent of ctx.goal_features.
std::vector<core::ActionSequence> predict_actions(const Policy& policy,
                                                  const core::ObservationContext& ctx,
                                                  bool mask_goal, int k_steps, int n_samples,
                                                  Rng& rng);

struct PredictTimed {
    std::vector<core::ActionSequence> samples;
    double generation_ms = 0.0;  // integration only, excludes encoding
};

PredictTimed predict_actions_timed(const Policy& policy, const core::ObservationContext& ctx,
                                   bool mask_goal, int k_steps, int n_samples, Rng& rng);

// Distance-head output for an unmasked goal, clamped at zero; units are
// expert timesteps.
double temporal_distance(const Policy& policy, const core::ObservationContext& ctx,
                         const std::vector<double>& goal_features);

// Index of the node with the least predicted temporal distance, ties
// broken toward the lowest index.
int select_goal_node(const Policy& policy, const core::ObservationContext& ctx,
                     const TopoMap& map);

}  // namespace fmnav::policy
