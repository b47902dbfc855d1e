#include "fmnav/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "fmnav/errors.hpp"
#include "fmnav/parallel.hpp"

namespace fmnav::eval {

using world::Environment;
using world::Pose;

namespace {

constexpr double kStallDistance = 0.05;
constexpr int kStallWindow = 10;
constexpr double kLapCaptureRadius = 0.6;
constexpr double kLapCloseSlack = 0.3;

double dist2d(const Pose& a, const Pose& b) { return std::hypot(a.x - b.x, a.y - b.y); }

// History seeding: synthesize a short straight approach behind the start
// pose so the first contexts look like the in-motion contexts the dataset
// contains. Falls back to repeating the pose where the map is occupied.
std::vector<Pose> seed_history(const Environment& env, const Pose& start) {
    std::vector<Pose> hist;
    for (int k = core::kObsHorizon; k >= 1; --k) {
        Pose p = start;
        p.x -= k * world::kWaypointSpacing * std::cos(start.heading);
        p.y -= k * world::kWaypointSpacing * std::sin(start.heading);
        const world::GridCell c = env.cell_of(p.x, p.y);
        if (env.occupied(c.row, c.col)) p = start;
        hist.push_back(p);
    }
    hist.push_back(start);
    return hist;
}

core::ObservationContext build_context(const Environment& env, const std::vector<Pose>& history,
                                       const EpisodeSettings& settings) {
    core::ObservationContext ctx;
    const std::size_t n = history.size();
    for (int s = 0; s < core::kContextSteps; ++s) {
        const Pose& p = history[n - core::kContextSteps + s];
        ctx.step_features[s] = world::observe(env, p, settings.ray_count);
    }
    if (settings.with_depth) {
        ctx.depth_features = world::depth_features(env, history.back()).pooled;
    }
    return ctx;
}

// Arc lengths along a polyline.
std::vector<double> cumulative_lengths(const std::vector<Pose>& path) {
    std::vector<double> s(path.size(), 0.0);
    for (std::size_t i = 1; i < path.size(); ++i) {
        s[i] = s[i - 1] + dist2d(path[i - 1], path[i]);
    }
    return s;
}

}  // namespace

policy::TopoMap build_topo_map(const Environment& env, const std::vector<Pose>& path, int stride,
                               int ray_count) {
    if (stride < 1) throw ContractError("build_topo_map: stride must be >= 1");
    policy::TopoMap map;
    for (std::size_t i = 0; i < path.size(); i += static_cast<std::size_t>(stride)) {
        map.nodes.push_back({world::observe(env, path[i], ray_count), path[i]});
    }
    if ((path.size() - 1) % static_cast<std::size_t>(stride) != 0) {
        map.nodes.push_back({world::observe(env, path.back(), ray_count), path.back()});
    }
    return map;
}

EpisodeResult run_episode_with(const Environment& env, const Planner& planner, Mode mode,
                               const EpisodeSettings& settings, Rng& rng, EpisodeTrace* trace) {
    EpisodeResult result;
    result.mode = mode;

    std::vector<Pose> lap;
    std::vector<double> lap_s;
    double lap_length = 0.0;
    std::size_t lap_idx = 0;
    if (mode == Mode::exploration) {
        lap = world::expert_path(env);
        lap_s = cumulative_lengths(lap);
        lap_length = lap_s.back();
    }

    Pose pose = env.start_pose;
    std::vector<Pose> history = seed_history(env, pose);
    std::vector<Pose> cycle_end_positions;
    double gen_ms_total = 0.0;

    if (trace) trace->executed.push_back(pose);

    for (int cycle = 0; cycle < settings.max_cycles; ++cycle) {
        const core::ObservationContext ctx = build_context(env, history, settings);
        PlannerOutput out = planner(ctx, pose, rng);
        if (out.candidates.empty()) {
            throw ContractError("run_episode: planner returned no candidates");
        }
        gen_ms_total += out.generation_ms;
        const std::size_t pick = rng.uniform_index(out.candidates.size());

        if (trace) {
            std::vector<std::vector<Pose>> cycle_samples;
            cycle_samples.reserve(out.candidates.size());
            for (const core::ActionSequence& cand : out.candidates) {
                std::vector<Pose> poly{pose};
                const std::vector<Pose> w = world::actions_to_world(pose, cand);
                poly.insert(poly.end(), w.begin(), w.end());
                cycle_samples.push_back(std::move(poly));
            }
            trace->sampled.push_back(std::move(cycle_samples));
        }

        // Execute the first execute_horizon waypoints, stopping at the first
        // wall contact; the contact counts as one collision entry.
        const std::vector<Pose> waypoints =
            world::actions_to_world(pose, out.candidates[pick]);
        bool contact = false;
        for (int h = 0; h < settings.execute_horizon && !contact; ++h) {
            const Pose target = waypoints[h];
            const double dx = target.x - pose.x;
            const double dy = target.y - pose.y;
            const double len = std::hypot(dx, dy);
            const double heading = len > 1e-9 ? std::atan2(dy, dx) : pose.heading;
            const int n = std::max(1, static_cast<int>(std::ceil(len / world::kCollisionMarchStep)));
            Pose last_free = pose;
            for (int i = 1; i <= n; ++i) {
                const double u = static_cast<double>(i) / n;
                const Pose p{pose.x + u * dx, pose.y + u * dy, heading};
                if (world::disc_collides(env, p.x, p.y, world::kRobotRadius)) {
                    ++result.collisions;
                    contact = true;
                    break;
                }
                last_free = p;
            }
            pose = contact ? last_free : Pose{target.x, target.y, heading};
            history.push_back(pose);
            if (trace) trace->executed.push_back(pose);
        }
        if (history.size() > 16) {
            history.erase(history.begin(), history.end() - 8);
        }
        ++result.control_cycles;
        cycle_end_positions.push_back(pose);

        if (mode == Mode::navigation) {
            if (dist2d(pose, env.goal_pose) < settings.success_radius) {
                result.success = true;
                break;
            }
        } else {
            // Advance the lap projection inside a forward window.
            const double window = 2.0;
            std::size_t best = lap_idx;
            double best_d = kLapCaptureRadius;
            for (std::size_t i = lap_idx; i < lap.size(); ++i) {
                if (lap_s[i] - lap_s[lap_idx] > window) break;
                const double d = dist2d(pose, lap[i]);
                if (d < best_d) {
                    best_d = d;
                    best = i;
                }
            }
            lap_idx = std::max(lap_idx, best);
            if (lap_s[lap_idx] >= lap_length - kLapCloseSlack) {
                result.success = true;
                break;
            }
        }

        const int c = result.control_cycles;
        if (c >= kStallWindow &&
            dist2d(cycle_end_positions[c - 1], cycle_end_positions[c - kStallWindow]) <
                kStallDistance) {
            break;  // terminal stall: episode fails
        }
    }

    result.mean_inference_ms =
        result.control_cycles > 0 ? gen_ms_total / result.control_cycles : 0.0;
    return result;
}

EpisodeResult run_episode(const Environment& env, const policy::Policy& pol, Mode mode,
                          const EpisodeSettings& settings, Rng& rng, EpisodeTrace* trace) {
    EpisodeSettings s = settings;
    s.with_depth = pol.config.use_depth;
    s.ray_count = pol.config.ray_count;

    policy::TopoMap topo;
    if (mode == Mode::navigation) {
        topo = build_topo_map(env, world::expert_path(env), s.topo_node_stride, s.ray_count);
    }

    Planner planner = [&pol, &topo, &s, mode](const core::ObservationContext& ctx, const Pose&,
                                              Rng& r) {
        PlannerOutput out;
        if (mode == Mode::navigation) {
            const int nearest = policy::select_goal_node(pol, ctx, topo);
            const int goal_idx =
                std::min(nearest + s.goal_lookahead, static_cast<int>(topo.nodes.size()) - 1);
            core::ObservationContext with_goal = ctx;
            with_goal.goal_features = topo.nodes[goal_idx].features;
            policy::PredictTimed pt =
                policy::predict_actions_timed(pol, with_goal, false, s.k_steps, s.n_samples, r);
            out.candidates = std::move(pt.samples);
            out.generation_ms = pt.generation_ms;
        } else {
            policy::PredictTimed pt =
                policy::predict_actions_timed(pol, ctx, true, s.k_steps, s.n_samples, r);
            out.candidates = std::move(pt.samples);
            out.generation_ms = pt.generation_ms;
        }
        return out;
    };
    return run_episode_with(env, planner, mode, s, rng, trace);
}

SweepReport sweep_k(const std::vector<NamedPolicy>& policies, const std::vector<int>& k_values,
                    int episodes_per_cell, std::uint64_t master_seed,
                    world::Difficulty difficulty, const EpisodeSettings& settings, int workers) {
    SweepReport report;
    // Shared seeds across every cell.
    std::vector<std::uint64_t> env_seeds(episodes_per_cell);
    std::vector<std::uint64_t> ep_seeds(episodes_per_cell);
    std::uint64_t seed_hash = 0;
    for (int e = 0; e < episodes_per_cell; ++e) {
        env_seeds[e] = derive_seed(master_seed, "sweep_env", static_cast<std::uint64_t>(e));
        ep_seeds[e] = derive_seed(master_seed, "sweep_episode", static_cast<std::uint64_t>(e));
        seed_hash = mix_u64(seed_hash ^ env_seeds[e] ^ ep_seeds[e]);
    }

    for (const NamedPolicy& np : policies) {
        for (int k : k_values) {
            std::vector<EpisodeResult> results(episodes_per_cell);
            EpisodeSettings s = settings;
            s.k_steps = k;
            parallel_for(episodes_per_cell, workers, [&](int e) {
                const Environment env =
                    world::generate_environment(env_seeds[e], difficulty, world::MapLayout::corridor);
                Rng rng(ep_seeds[e]);
                results[e] = run_episode(env, *np.pol, Mode::navigation, s, rng);
            });
            SweepCell cell;
            cell.method = np.name;
            cell.k_steps = k;
            cell.use_depth = np.pol->config.use_depth;
            cell.episodes = episodes_per_cell;
            cell.seed_hash = seed_hash;
            int successes = 0;
            double coll = 0.0, ms = 0.0;
            for (const EpisodeResult& r : results) {
                successes += r.success ? 1 : 0;
                coll += r.collisions;
                ms += r.mean_inference_ms;
            }
            cell.success_rate = static_cast<double>(successes) / episodes_per_cell;
            cell.collisions_per_run = coll / episodes_per_cell;
            cell.mean_inference_ms = ms / episodes_per_cell;
            wilson_interval(successes, episodes_per_cell, cell.wilson_lo, cell.wilson_hi);
            report.cells.push_back(std::move(cell));
        }
    }
    return report;
}

TimingStats measure_inference(const policy::Policy& pol, int k_steps, int repetitions,
                              std::uint64_t seed) {
    const Environment env = world::generate_environment(derive_seed(seed, "timing_env"),
                                                        world::Difficulty::easy);
    EpisodeSettings s;
    s.with_depth = pol.config.use_depth;
    s.ray_count = pol.config.ray_count;
    const std::vector<Pose> history = seed_history(env, env.start_pose);
    const core::ObservationContext ctx = build_context(env, history, s);

    Rng rng(derive_seed(seed, "timing_rng"));
    TimingStats stats;
    stats.samples_ms.reserve(repetitions);
    for (int i = 0; i < repetitions + kTimingWarmup; ++i) {
        policy::PredictTimed pt = policy::predict_actions_timed(pol, ctx, true, k_steps, 1, rng);
        if (i >= kTimingWarmup) stats.samples_ms.push_back(pt.generation_ms);
    }
    std::vector<double> sorted = stats.samples_ms;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    auto quantile = [&](double q) {
        const double idx = q * (n - 1);
        const std::size_t lo = static_cast<std::size_t>(idx);
        const std::size_t hi = std::min(n - 1, lo + 1);
        const double frac = idx - lo;
        return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
    };
    stats.median_ms = quantile(0.5);
    stats.iqr_ms = quantile(0.75) - quantile(0.25);
    return stats;
}

double sign_test_p_value(int n_pos, int n_neg) {
    const int n = n_pos + n_neg;
    if (n == 0) return 1.0;
    const int k = std::max(n_pos, n_neg);
    // Two-sided binomial tail at p = 1/2, computed in log space.
    auto log_choose = [](int nn, int kk) {
        return std::lgamma(nn + 1.0) - std::lgamma(kk + 1.0) - std::lgamma(nn - kk + 1.0);
    };
    double tail = 0.0;
    for (int i = k; i <= n; ++i) {
        tail += std::exp(log_choose(n, i) - n * std::log(2.0));
    }
    return std::min(1.0, 2.0 * tail);
}

void wilson_interval(int successes, int n, double& lo, double& hi) {
    if (n == 0) {
        lo = 0.0;
        hi = 1.0;
        return;
    }
    const double z = 1.959963984540054;
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    lo = std::max(0.0, center - half);
    hi = std::min(1.0, center + half);
}

AblationReport ablation_depth(const policy::Policy& with_depth,
                              const policy::Policy& without_depth, int episodes_per_mode,
                              std::uint64_t master_seed, const EpisodeSettings& settings,
                              int workers) {
    AblationReport report;
    for (Mode mode : {Mode::navigation, Mode::exploration}) {
        const world::MapLayout layout =
            mode == Mode::navigation ? world::MapLayout::corridor : world::MapLayout::loop;
        const char* tag = mode == Mode::navigation ? "abl_nav" : "abl_exp";

        std::vector<EpisodeResult> rw(episodes_per_mode), ro(episodes_per_mode);
        parallel_for(episodes_per_mode, workers, [&](int e) {
            const std::uint64_t env_seed =
                derive_seed(master_seed, tag, static_cast<std::uint64_t>(e));
            const std::uint64_t ep_seed =
                derive_seed(master_seed, std::string(tag) + "_rng", static_cast<std::uint64_t>(e));
            const Environment env =
                world::generate_environment(env_seed, world::Difficulty::hard, layout);
            {
                Rng rng(ep_seed);
                rw[e] = run_episode(env, with_depth, mode, settings, rng);
            }
            {
                Rng rng(ep_seed);
                ro[e] = run_episode(env, without_depth, mode, settings, rng);
            }
        });

        AblationRow row;
        row.mode = mode;
        row.episodes = episodes_per_mode;
        int n_pos = 0, n_neg = 0;
        for (int e = 0; e < episodes_per_mode; ++e) {
            row.with_success += rw[e].success ? 1.0 : 0.0;
            row.without_success += ro[e].success ? 1.0 : 0.0;
            row.with_collisions_per_run += rw[e].collisions;
            row.without_collisions_per_run += ro[e].collisions;
            if (rw[e].collisions < ro[e].collisions) ++n_pos;
            if (rw[e].collisions > ro[e].collisions) ++n_neg;
        }
        row.with_success /= episodes_per_mode;
        row.without_success /= episodes_per_mode;
        row.with_collisions_per_run /= episodes_per_mode;
        row.without_collisions_per_run /= episodes_per_mode;
        row.sign_test_p = sign_test_p_value(n_pos, n_neg);
        report.rows.push_back(row);
    }
    return report;
}

std::vector<int> single_linkage_clusters(const std::vector<std::array<double, 2>>& points,
                                         double threshold) {
    const int n = static_cast<int>(points.size());
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    };
    const double t2 = threshold * threshold;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double dx = points[i][0] - points[j][0];
            const double dy = points[i][1] - points[j][1];
            if (dx * dx + dy * dy < t2) {
                parent[find(i)] = find(j);
            }
        }
    }
    std::vector<int> labels(n, -1);
    int next = 0;
    for (int i = 0; i < n; ++i) {
        const int root = find(i);
        if (labels[root] == -1) labels[root] = next++;
        labels[i] = labels[root];
    }
    return labels;
}

ProbeResult probe_junction(const Environment& env, const world::Junction& junction,
                           const policy::Policy& pol, int k_steps, int n_samples,
                           std::uint64_t seed) {
    EpisodeSettings s;
    s.with_depth = pol.config.use_depth;
    s.ray_count = pol.config.ray_count;
    const std::vector<Pose> history = seed_history(env, junction.approach);
    const core::ObservationContext ctx = build_context(env, history, s);

    auto endpoints_of = [&](const std::vector<core::ActionSequence>& samples) {
        std::vector<std::array<double, 2>> pts;
        pts.reserve(samples.size());
        for (const core::ActionSequence& a : samples) {
            const std::vector<Pose> w = world::actions_to_world(junction.approach, a);
            pts.push_back({w.back().x, w.back().y});
        }
        return pts;
    };

    ProbeResult result;
    {
        Rng rng(derive_seed(seed, "probe_masked"));
        const std::vector<core::ActionSequence> samples =
            policy::predict_actions(pol, ctx, true, k_steps, n_samples, rng);
        const std::vector<std::array<double, 2>> pts = endpoints_of(samples);
        const std::vector<int> labels = single_linkage_clusters(pts, 0.5);
        const int n_clusters = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
        std::vector<int> mass(n_clusters, 0);
        for (int l : labels) ++mass[l];
        for (int m : mass) {
            if (m * 5 >= n_samples) ++result.big_clusters;  // >= 20% mass
        }
        result.multimodal = result.big_clusters >= 2;
    }
    {
        // Goal on one branch; alternate the branch with the seed.
        const int branch = static_cast<int>(seed % 2);
        const Pose goal_pose = junction.continuations[branch];
        const Pose other_pose = junction.continuations[1 - branch];
        core::ObservationContext with_goal = ctx;
        with_goal.goal_features = world::observe(env, goal_pose, s.ray_count);
        Rng rng(derive_seed(seed, "probe_goal"));
        const std::vector<core::ActionSequence> samples =
            policy::predict_actions(pol, with_goal, false, k_steps, n_samples, rng);
        const std::vector<std::array<double, 2>> pts = endpoints_of(samples);
        int on_goal = 0;
        for (const std::array<double, 2>& p : pts) {
            const double dg = std::hypot(p[0] - goal_pose.x, p[1] - goal_pose.y);
            const double doth = std::hypot(p[0] - other_pose.x, p[1] - other_pose.y);
            if (dg < doth) ++on_goal;
        }
        result.goal_branch_mass = static_cast<double>(on_goal) / n_samples;
        result.goal_concentrated = result.goal_branch_mass >= 0.9;
    }
    return result;
}

JunctionProbeReport probe_junctions(const policy::Policy& pol, int n_envs, int k_steps,
                                    int n_samples, std::uint64_t master_seed, int workers) {
    JunctionProbeReport report;
    std::vector<ProbeResult> results(n_envs);
    parallel_for(n_envs, workers, [&](int e) {
        const std::uint64_t env_seed =
            derive_seed(master_seed, "probe_env", static_cast<std::uint64_t>(e));
        const Environment env =
            world::generate_environment(env_seed, world::Difficulty::hard);
        results[e] = probe_junction(env, env.junctions.front(), pol, k_steps, n_samples,
                                    derive_seed(master_seed, "probe", static_cast<std::uint64_t>(e)));
    });
    for (const ProbeResult& r : results) {
        ++report.probes;
        if (r.multimodal) ++report.multimodal_probes;
        if (r.goal_concentrated) ++report.goal_concentrated_probes;
    }
    return report;
}

}  // namespace fmnav::eval
