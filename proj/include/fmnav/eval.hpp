#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fmnav/core.hpp"
#include "fmnav/policy.hpp"
#include "fmnav/rng.hpp"
#include "fmnav/world.hpp"

namespace fmnav::eval {

enum class Mode { navigation, exploration };

struct EpisodeResult {
    bool success = false;
    int collisions = 0;
    int control_cycles = 0;
    double mean_inference_ms = 0.0;
    Mode mode = Mode::navigation;
};

struct EpisodeSettings {
    int k_steps = 10;
    int max_cycles = 200;
    int n_samples = 8;
    int execute_horizon = 4;  // waypoints executed before re-planning
    double success_radius = 0.5;
    int topo_node_stride = 4;
    int goal_lookahead = 2;  // nodes ahead of the nearest topo node
    bool with_depth = false; // compute depth features for the planner
    int ray_count = world::kDefaultRayCount;
};

// Everything needed to redraw an episode: per-cycle candidate trajectories
// and the executed path, in world coordinates.
struct EpisodeTrace {
    std::vector<std::vector<std::vector<world::Pose>>> sampled;  // [cycle][candidate][pose]
    std::vector<world::Pose> executed;
};

struct PlannerOutput {
    std::vector<core::ActionSequence> candidates;  // unnormalized, robot-local
    double generation_ms = 0.0;
};

// Candidate generator driving an episode; the policy planner and the test
// stubs both fit this shape.
using Planner = std::function<PlannerOutput(const core::ObservationContext&, const world::Pose&,
                                            Rng&)>;

// Core rollout loop: builds observation contexts from the pose history,
// asks the planner for candidates, executes a random candidate's prefix
// with contact-stopping collision accounting, and tracks success per mode.
EpisodeResult run_episode_with(const world::Environment& env, const Planner& planner, Mode mode,
                               const EpisodeSettings& settings, Rng& rng,
                               EpisodeTrace* trace = nullptr);

// Full policy rollout. Navigation builds a topological map from the expert
// path (every topo_node_stride-th pose) and selects goals through the
// policy's distance head; exploration masks the goal.
EpisodeResult run_episode(const world::Environment& env, const policy::Policy& pol, Mode mode,
                          const EpisodeSettings& settings, Rng& rng,
                          EpisodeTrace* trace = nullptr);

policy::TopoMap build_topo_map(const world::Environment& env, const std::vector<world::Pose>& path,
                               int stride, int ray_count);

struct SweepCell {
    std::string method;
    int k_steps = 0;
    bool use_depth = false;
    int episodes = 0;
    double success_rate = 0.0;
    double wilson_lo = 0.0;
    double wilson_hi = 0.0;
    double collisions_per_run = 0.0;
    double mean_inference_ms = 0.0;
    std::uint64_t seed_hash = 0;  // audit: identical across methods per K
};

struct SweepReport {
    std::vector<SweepCell> cells;
};

struct NamedPolicy {
    std::string name;
    const policy::Policy* pol = nullptr;
};

// Runs episodes_per_cell navigation episodes per (policy, K) cell with
// shared environment and episode seeds across cells.
SweepReport sweep_k(const std::vector<NamedPolicy>& policies, const std::vector<int>& k_values,
                    int episodes_per_cell, std::uint64_t master_seed,
                    world::Difficulty difficulty, const EpisodeSettings& settings, int workers);

struct TimingStats {
    std::vector<double> samples_ms;  // post-warmup
    double median_ms = 0.0;
    double iqr_ms = 0.0;
};

inline constexpr int kTimingWarmup = 10;

// Median and IQR of per-generation wall time; the first kTimingWarmup runs
// are excluded. Pinned to a single thread.
TimingStats measure_inference(const policy::Policy& pol, int k_steps, int repetitions,
                              std::uint64_t seed);

struct AblationRow {
    Mode mode = Mode::exploration;
    int episodes = 0;
    double with_success = 0.0;
    double without_success = 0.0;
    double with_collisions_per_run = 0.0;
    double without_collisions_per_run = 0.0;
    double sign_test_p = 1.0;  // paired two-sided sign test on collisions
};

struct AblationReport {
    std::vector<AblationRow> rows;  // navigation and exploration
};

// Paired comparison of depth vs no-depth policies on identical seeds.
AblationReport ablation_depth(const policy::Policy& with_depth,
                              const policy::Policy& without_depth, int episodes_per_mode,
                              std::uint64_t master_seed, const EpisodeSettings& settings,
                              int workers);

// Single-linkage clustering of 2D points: labels in [0, n_clusters).
std::vector<int> single_linkage_clusters(const std::vector<std::array<double, 2>>& points,
                                         double threshold);

struct ProbeResult {
    bool multimodal = false;        // >= 2 clusters with >= 20% mass (goal masked)
    bool goal_concentrated = false; // >= 90% mass on the goal branch (goal given)
    int big_clusters = 0;
    double goal_branch_mass = 0.0;
};

// Samples trajectories at a junction approach pose, goal-masked and
// goal-given, and clusters the endpoints.
ProbeResult probe_junction(const world::Environment& env, const world::Junction& junction,
                           const policy::Policy& pol, int k_steps, int n_samples,
                           std::uint64_t seed);

struct JunctionProbeReport {
    int probes = 0;
    int multimodal_probes = 0;
    int goal_concentrated_probes = 0;
};

JunctionProbeReport probe_junctions(const policy::Policy& pol, int n_envs, int k_steps,
                                    int n_samples, std::uint64_t master_seed, int workers);

// Two-sided paired sign test p-value: n_pos improvements vs n_neg
// regressions, ties excluded.
double sign_test_p_value(int n_pos, int n_neg);

// 95% Wilson score interval for a binomial proportion.
void wilson_interval(int successes, int n, double& lo, double& hi);

}  // namespace fmnav::eval
