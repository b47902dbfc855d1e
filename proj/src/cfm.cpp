#include "fmnav/cfm.hpp"

#include <cmath>
#include <string>

#include "fmnav/errors.hpp"

namespace fmnav::cfm {

using core::ActionSequence;
using core::ActionVec;
using core::kActionDim;

FlowSample sample_coupling(Rng& rng, const ActionSequence& dataset_item) {
    if (!dataset_item.normalized) {
        throw ContractError("sample_coupling: dataset item must be normalized");
    }
    FlowSample s;
    ActionVec x0{};
    for (double& v : x0) v = rng.normal();
    s.x0 = ActionSequence::from_flat(x0, true);
    s.x1 = dataset_item;
    s.t = core::FlowTime{rng.uniform01()};
    s.xt = interpolate(s.x0, s.x1, s.t);
    s.target_velocity = conditional_velocity(s.x0, s.x1);
    return s;
}

ActionSequence interpolate(const ActionSequence& x0, const ActionSequence& x1, core::FlowTime t) {
    if (x0.normalized != x1.normalized) {
        throw ContractError("interpolate: normalization flags differ");
    }
    if (t.t < 0.0 || t.t > 1.0) {
        throw ContractError("interpolate: t outside [0,1]");
    }
    ActionSequence xt;
    for (int i = 0; i < core::kActionHorizon; ++i) {
        xt.waypoints[i].x = t.t * x1.waypoints[i].x + (1.0 - t.t) * x0.waypoints[i].x;
        xt.waypoints[i].y = t.t * x1.waypoints[i].y + (1.0 - t.t) * x0.waypoints[i].y;
    }
    xt.normalized = x0.normalized;
    return xt;
}

ActionVec conditional_velocity(const ActionSequence& x0, const ActionSequence& x1) {
    if (x0.normalized != x1.normalized) {
        throw ContractError("conditional_velocity: normalization flags differ");
    }
    ActionVec v{};
    const ActionVec a0 = x0.flat();
    const ActionVec a1 = x1.flat();
    for (int i = 0; i < kActionDim; ++i) v[i] = a1[i] - a0[i];
    return v;
}

std::vector<double> head_input(double t, const ActionVec& xt, std::span<const double> context) {
    std::vector<double> input;
    input.reserve(kTimeFeatures + kActionDim + context.size());
    input.push_back(t);
    input.push_back(1.0 - t);
    input.insert(input.end(), xt.begin(), xt.end());
    input.insert(input.end(), context.begin(), context.end());
    return input;
}

LossGrad cfm_loss_and_grad(const netfn::Params& head, std::span<const CfmBatchItem> batch) {
    if (batch.empty()) {
        throw ContractError("cfm_loss_and_grad: empty batch");
    }
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    LossGrad out;
    out.param_grad.assign(head.size(), 0.0);
    out.context_grad.reserve(batch.size());

    for (const CfmBatchItem& item : batch) {
        const std::vector<double> input = head_input(item.t, item.xt, item.context);
        const std::vector<double> pred = netfn::forward(head, input);
        std::vector<double> out_grad(kActionDim, 0.0);
        for (int i = 0; i < kActionDim; ++i) {
            const double r = pred[i] - item.target_velocity[i];
            if (!std::isfinite(r)) {
                throw NumericalError("cfm_loss_and_grad: non-finite residual at output " +
                                     std::to_string(i));
            }
            out.loss += r * r * inv_n;
            out_grad[i] = 2.0 * r * inv_n;
        }
        netfn::BackwardResult bw = netfn::backward(head, input, out_grad);
        for (std::size_t i = 0; i < bw.param_grad.size(); ++i) {
            out.param_grad[i] += bw.param_grad[i];
        }
        const std::size_t ctx_offset = kTimeFeatures + kActionDim;
        out.context_grad.emplace_back(bw.input_grad.begin() + ctx_offset, bw.input_grad.end());
    }
    return out;
}

namespace {

void check_finite_state(const std::vector<double>& state, int step, const char* who) {
    for (double v : state) {
        if (!std::isfinite(v)) {
            throw NumericalError(std::string(who) + ": non-finite state", step);
        }
    }
}

}  // namespace

std::vector<double> euler_integrate_flat(const VelocityFn& field, std::vector<double> x0,
                                         int steps) {
    if (steps < 1) throw ContractError("euler_integrate: steps must be >= 1");
    const double dt = 1.0 / static_cast<double>(steps);
    for (int k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        const std::vector<double> v = field(t, x0);
        for (std::size_t i = 0; i < x0.size(); ++i) x0[i] += dt * v[i];
        check_finite_state(x0, k, "euler_integrate");
    }
    return x0;
}

std::vector<double> rk4_integrate_flat(const VelocityFn& field, std::vector<double> x0,
                                       int steps) {
    if (steps < 1) throw ContractError("rk4_integrate: steps must be >= 1");
    const double dt = 1.0 / static_cast<double>(steps);
    const std::size_t n = x0.size();
    std::vector<double> tmp(n);
    for (int k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        const std::vector<double> k1 = field(t, x0);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = x0[i] + 0.5 * dt * k1[i];
        const std::vector<double> k2 = field(t + 0.5 * dt, tmp);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = x0[i] + 0.5 * dt * k2[i];
        const std::vector<double> k3 = field(t + 0.5 * dt, tmp);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = x0[i] + dt * k3[i];
        const std::vector<double> k4 = field(t + dt, tmp);
        for (std::size_t i = 0; i < n; ++i) {
            x0[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        check_finite_state(x0, k, "rk4_integrate");
    }
    return x0;
}

namespace {

VelocityFn head_field(const netfn::Params& head, std::span<const double> context) {
    std::vector<double> ctx(context.begin(), context.end());
    return [&head, ctx = std::move(ctx)](double t, const std::vector<double>& state) {
        ActionVec xt{};
        for (int i = 0; i < kActionDim; ++i) xt[i] = state[i];
        return netfn::forward(head, head_input(t, xt, ctx));
    };
}

ActionVec to_action_vec(const std::vector<double>& v) {
    ActionVec out{};
    for (int i = 0; i < kActionDim; ++i) out[i] = v[i];
    return out;
}

}  // namespace

ActionVec euler_integrate(const netfn::Params& head, const ActionVec& x0,
                          std::span<const double> context, int steps) {
    std::vector<double> state(x0.begin(), x0.end());
    return to_action_vec(euler_integrate_flat(head_field(head, context), std::move(state), steps));
}

ActionVec rk4_integrate(const netfn::Params& head, const ActionVec& x0,
                        std::span<const double> context, int steps) {
    std::vector<double> state(x0.begin(), x0.end());
    return to_action_vec(rk4_integrate_flat(head_field(head, context), std::move(state), steps));
}

ActionVec integrate(const netfn::Params& head, const ActionVec& x0,
                    std::span<const double> context, const IntegratorConfig& config) {
    return config.method == IntegrationMethod::euler
               ? euler_integrate(head, x0, context, config.steps)
               : rk4_integrate(head, x0, context, config.steps);
}

}  // namespace fmnav::cfm
