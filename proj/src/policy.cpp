#include "fmnav/policy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "fmnav/errors.hpp"

namespace fmnav::policy {

using core::ActionSequence;
using core::ActionVec;
using core::kActionDim;

namespace {

// Offset of the goal slot inside the encoder input vector.
int goal_slot_offset(const PolicyConfig& config) {
    return core::kContextSteps * config.obs_dim();
}

std::vector<double> build_encoder_input(const PolicyConfig& config,
                                        const core::ObservationContext& ctx, bool mask_goal,
                                        const std::vector<double>& mask_token) {
    std::vector<double> input;
    input.reserve(config.encoder_input_dim());
    for (int s = 0; s < core::kContextSteps; ++s) {
        const std::vector<double>& f = ctx.step_features[s];
        if (static_cast<int>(f.size()) != config.obs_dim()) {
            throw ContractError("encode_context: step feature dim " + std::to_string(f.size()) +
                                " != " + std::to_string(config.obs_dim()));
        }
        input.insert(input.end(), f.begin(), f.end());
    }
    if (mask_goal) {
        input.insert(input.end(), mask_token.begin(), mask_token.end());
    } else {
        if (!ctx.goal_features) {
            throw ContractError("encode_context: goal features required when not masked");
        }
        if (static_cast<int>(ctx.goal_features->size()) != config.goal_dim()) {
            throw ContractError("encode_context: goal feature dim mismatch");
        }
        input.insert(input.end(), ctx.goal_features->begin(), ctx.goal_features->end());
    }
    if (config.use_depth) {
        if (!ctx.depth_features) {
            throw ContractError("encode_context: depth features required by config");
        }
        input.insert(input.end(), ctx.depth_features->begin(), ctx.depth_features->end());
    }
    return input;
}

netfn::MlpSpec encoder_spec(const PolicyConfig& config, std::uint64_t seed) {
    std::vector<int> widths{config.encoder_input_dim()};
    widths.insert(widths.end(), config.encoder_hidden.begin(), config.encoder_hidden.end());
    widths.push_back(config.context_dim);
    return {widths, config.activation, seed};
}

netfn::MlpSpec head_spec(const PolicyConfig& config, std::uint64_t seed) {
    std::vector<int> widths{config.head_input_dim()};
    widths.insert(widths.end(), config.head_hidden.begin(), config.head_hidden.end());
    widths.push_back(kActionDim);
    return {widths, config.activation, seed};
}

netfn::MlpSpec dist_spec(const PolicyConfig& config, std::uint64_t seed) {
    std::vector<int> widths{config.context_dim};
    widths.insert(widths.end(), config.dist_hidden.begin(), config.dist_hidden.end());
    widths.push_back(1);
    return {widths, config.activation, seed};
}

void accumulate(std::vector<double>& acc, const std::vector<double>& g) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

}  // namespace

std::vector<double> encode_context(const Policy& policy, const core::ObservationContext& ctx,
                                   bool mask_goal) {
    const std::vector<double> input =
        build_encoder_input(policy.config, ctx, mask_goal, policy.mask_token);
    return netfn::forward(policy.encoder, input);
}

TrainResult train_policy(const std::vector<world::TrainingRecord>& dataset,
                         const PolicyConfig& config, const TrainSettings& settings,
                         const core::NormStats& stats) {
    if (dataset.empty()) throw ContractError("train_policy: empty dataset");
    if (config.use_depth && !dataset.front().context.depth_features) {
        throw ContractError("train_policy: config requires depth but dataset has none");
    }

    TrainResult result;
    Policy& p = result.policy;
    p.config = config;
    p.stats = stats;
    p.encoder = netfn::init_params(encoder_spec(config, derive_seed(settings.seed, "encoder")));
    p.head = netfn::init_params(head_spec(config, derive_seed(settings.seed, "head")));
    p.dist_head = netfn::init_params(dist_spec(config, derive_seed(settings.seed, "dist")));
    {
        Rng mrng(derive_seed(settings.seed, "mask_token"));
        p.mask_token.resize(config.goal_dim());
        for (double& v : p.mask_token) v = mrng.uniform(-0.1, 0.1);
    }
    if (config.head_kind == HeadKind::ddpm) {
        p.schedule = ddpm::build_schedule(config.ddpm_train_steps, config.ddpm_schedule);
    }

    const int n = static_cast<int>(dataset.size());
    const int batch = std::max(1, settings.batch_size);
    const long steps_per_epoch = (n + batch - 1) / batch;
    const long total_steps = std::max<long>(1, settings.epochs * steps_per_epoch);
    const long warmup =
        std::min<long>(total_steps - 1,
                       std::max<long>(0, std::lround(settings.warmup_frac * total_steps)));

    netfn::OptState enc_opt =
        netfn::OptState::for_params(p.encoder, settings.base_lr, settings.weight_decay);
    netfn::OptState head_opt =
        netfn::OptState::for_params(p.head, settings.base_lr, settings.weight_decay);
    netfn::OptState dist_opt =
        netfn::OptState::for_params(p.dist_head, settings.base_lr, settings.weight_decay);
    netfn::OptState mask_opt =
        netfn::OptState::for_size(p.mask_token.size(), settings.base_lr, 0.0);
    for (netfn::OptState* o : {&enc_opt, &head_opt, &dist_opt, &mask_opt}) {
        o->beta1 = settings.beta1;
        o->beta2 = settings.beta2;
        o->eps = settings.adam_eps;
    }

    Rng rng(derive_seed(settings.seed, "train_loop"));
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    const int goal_off = goal_slot_offset(config);
    const int goal_dim = config.goal_dim();
    const std::size_t head_ctx_off = cfm::kTimeFeatures + kActionDim;
    long step = 0;
    result.step_losses.reserve(total_steps);

    for (int epoch = 0; epoch < settings.epochs; ++epoch) {
        // Fisher-Yates with the deterministic stream.
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(i + 1)));
            std::swap(order[i], order[j]);
        }
        for (long b = 0; b < steps_per_epoch; ++b) {
            const int lo = static_cast<int>(b) * batch;
            const int hi = std::min(n, lo + batch);
            const int m = hi - lo;
            if (m <= 0) continue;

            const double lr =
                netfn::lr_schedule(step, total_steps, warmup, settings.base_lr,
                                   settings.lr_schedule);
            enc_opt.lr = head_opt.lr = dist_opt.lr = mask_opt.lr = lr;

            // Masks are drawn up front so the distance term can be averaged
            // over the unmasked count in a single pass.
            std::vector<char> masked(m);
            int n_unmasked = 0;
            for (int i = 0; i < m; ++i) {
                masked[i] = rng.uniform01() < config.goal_mask_prob ? 1 : 0;
                if (!masked[i]) ++n_unmasked;
            }

            std::vector<double> enc_g(p.encoder.size(), 0.0);
            std::vector<double> head_g(p.head.size(), 0.0);
            std::vector<double> dist_g(p.dist_head.size(), 0.0);
            std::vector<double> mask_g(p.mask_token.size(), 0.0);
            double gen_loss = 0.0;
            double dist_sq = 0.0;

            for (int i = 0; i < m; ++i) {
                const world::TrainingRecord& rec = dataset[order[lo + i]];
                const bool mask = masked[i] != 0;
                const std::vector<double> enc_in =
                    build_encoder_input(config, rec.context, mask, p.mask_token);
                const std::vector<double> c = netfn::forward(p.encoder, enc_in);

                const ActionVec x1 = rec.expert_actions.flat();
                std::vector<double> head_in;
                std::vector<double> out_grad(kActionDim, 0.0);
                if (config.head_kind == HeadKind::cfm) {
                    ActionVec x0{};
                    for (double& v : x0) v = rng.normal();
                    const double t = rng.uniform01();
                    ActionVec xt{};
                    for (int d = 0; d < kActionDim; ++d) xt[d] = t * x1[d] + (1.0 - t) * x0[d];
                    head_in = cfm::head_input(t, xt, c);
                    const std::vector<double> pred = netfn::forward(p.head, head_in);
                    for (int d = 0; d < kActionDim; ++d) {
                        const double r = pred[d] - (x1[d] - x0[d]);
                        gen_loss += r * r / m;
                        out_grad[d] = 2.0 * r / m;
                    }
                } else {
                    const int k =
                        1 + static_cast<int>(rng.uniform_index(
                                static_cast<std::uint64_t>(p.schedule.total_steps)));
                    ActionVec eps{};
                    for (double& v : eps) v = rng.normal();
                    const ActionVec ak = ddpm::add_noise(x1, k, eps, p.schedule);
                    head_in = ddpm::head_input(k, p.schedule.total_steps, ak, c);
                    const std::vector<double> pred = netfn::forward(p.head, head_in);
                    for (int d = 0; d < kActionDim; ++d) {
                        const double r = pred[d] - eps[d];
                        gen_loss += r * r / (static_cast<double>(m) * kActionDim);
                        out_grad[d] = 2.0 * r / (static_cast<double>(m) * kActionDim);
                    }
                }

                std::vector<double> ctx_grad(config.context_dim, 0.0);
                {
                    netfn::BackwardResult bw = netfn::backward(p.head, head_in, out_grad);
                    accumulate(head_g, bw.param_grad);
                    for (int d = 0; d < config.context_dim; ++d) {
                        ctx_grad[d] += bw.input_grad[head_ctx_off + d];
                    }
                }
                if (!mask) {
                    const std::vector<double> dpred = netfn::forward(p.dist_head, c);
                    const double r = dpred[0] - rec.temporal_distance_label;
                    dist_sq += r * r;
                    const double dg = 2.0 * config.lambda_dist * r / n_unmasked;
                    netfn::BackwardResult bw =
                        netfn::backward(p.dist_head, c, std::vector<double>{dg});
                    accumulate(dist_g, bw.param_grad);
                    for (int d = 0; d < config.context_dim; ++d) {
                        ctx_grad[d] += bw.input_grad[d];
                    }
                }
                {
                    netfn::BackwardResult bw = netfn::backward(p.encoder, enc_in, ctx_grad);
                    accumulate(enc_g, bw.param_grad);
                    if (mask) {
                        for (int d = 0; d < goal_dim; ++d) {
                            mask_g[d] += bw.input_grad[goal_off + d];
                        }
                    }
                }
            }

            const double dist_loss =
                n_unmasked > 0 ? config.lambda_dist * dist_sq / n_unmasked : 0.0;
            const double loss = gen_loss + dist_loss;
            if (!std::isfinite(loss)) {
                throw NumericalError("train_policy: loss diverged", step);
            }
            netfn::adamw_step(p.encoder, enc_g, enc_opt);
            netfn::adamw_step(p.head, head_g, head_opt);
            netfn::adamw_step(p.dist_head, dist_g, dist_opt);
            netfn::adamw_update(p.mask_token, mask_g, mask_opt);
            result.step_losses.push_back(loss);
            ++step;
        }
    }
    return result;
}

namespace {

std::vector<ActionSequence> predict_impl(const Policy& policy, const core::ObservationContext& ctx,
                                         bool mask_goal, int k_steps, int n_samples, Rng& rng,
                                         double* gen_ms) {
    if (k_steps < 1) throw ContractError("predict_actions: K must be >= 1");
    if (n_samples < 1) throw ContractError("predict_actions: n_samples must be >= 1");
    const std::vector<double> c = encode_context(policy, ctx, mask_goal);
    std::vector<ActionSequence> out;
    out.reserve(n_samples);
    double ms = 0.0;
    for (int s = 0; s < n_samples; ++s) {
        ActionVec x1{};
        if (policy.config.head_kind == HeadKind::cfm) {
            ActionVec x0{};
            for (double& v : x0) v = rng.normal();
            const auto t0 = std::chrono::steady_clock::now();
            x1 = cfm::euler_integrate(policy.head, x0, c, k_steps);
            const auto t1 = std::chrono::steady_clock::now();
            ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
        } else {
            const auto t0 = std::chrono::steady_clock::now();
            x1 = ddpm::ddpm_sample(policy.head, c, policy.schedule, k_steps, rng);
            const auto t1 = std::chrono::steady_clock::now();
            ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
        }
        const ActionSequence norm = ActionSequence::from_flat(x1, true);
        out.push_back(core::unnormalize_actions(norm, policy.stats));
    }
    if (gen_ms) *gen_ms = ms;
    return out;
}

}  // namespace

std::vector<ActionSequence> predict_actions(const Policy& policy,
                                            const core::ObservationContext& ctx, bool mask_goal,
                                            int k_steps, int n_samples, Rng& rng) {
    return predict_impl(policy, ctx, mask_goal, k_steps, n_samples, rng, nullptr);
}

PredictTimed predict_actions_timed(const Policy& policy, const core::ObservationContext& ctx,
                                   bool mask_goal, int k_steps, int n_samples, Rng& rng) {
    PredictTimed result;
    result.samples =
        predict_impl(policy, ctx, mask_goal, k_steps, n_samples, rng, &result.generation_ms);
    return result;
}

double temporal_distance(const Policy& policy, const core::ObservationContext& ctx,
                         const std::vector<double>& goal_features) {
    core::ObservationContext with_goal = ctx;
    with_goal.goal_features = goal_features;
    const std::vector<double> c = encode_context(policy, with_goal, false);
    const std::vector<double> d = netfn::forward(policy.dist_head, c);
    return std::max(0.0, d[0]);
}

int select_goal_node(const Policy& policy, const core::ObservationContext& ctx,
                     const TopoMap& map) {
    if (map.nodes.empty()) throw ContractError("select_goal_node: empty map");
    int best = 0;
    double best_dist = temporal_distance(policy, ctx, map.nodes[0].features);
    for (int i = 1; i < static_cast<int>(map.nodes.size()); ++i) {
        const double d = temporal_distance(policy, ctx, map.nodes[i].features);
        if (d < best_dist) {
            best = i;
            best_dist = d;
        }
    }
    return best;
}

}  // namespace fmnav::policy
