#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fmnav/core.hpp"
#include "fmnav/netfn.hpp"
#include "fmnav/rng.hpp"

namespace fmnav::cfm {

// One training draw under independent coupling: x0 from a standard normal,
// x1 from the data, t uniform. xt and target_velocity satisfy
//   xt = t*x1 + (1-t)*x0,  target_velocity = x1 - x0.
struct FlowSample {
    core::ActionSequence x0;
    core::ActionSequence x1;
    core::FlowTime t;
    core::ActionSequence xt;
    core::ActionVec target_velocity{};
};

enum class IntegrationMethod { euler, rk4 };

struct IntegratorConfig {
    int steps = 10;  // K
    IntegrationMethod method = IntegrationMethod::euler;
};

// Probability-path noise is fixed to zero: interpolants are the straight
// line between the coupled endpoints.
inline constexpr double kPathSigma = 0.0;

FlowSample sample_coupling(Rng& rng, const core::ActionSequence& dataset_item);

core::ActionSequence interpolate(const core::ActionSequence& x0, const core::ActionSequence& x1,
                                 core::FlowTime t);

core::ActionVec conditional_velocity(const core::ActionSequence& x0,
                                     const core::ActionSequence& x1);

// Velocity head input layout: [t, 1-t, xt (kActionDim), context (context_dim)].
inline constexpr int kTimeFeatures = 2;

std::vector<double> head_input(double t, const core::ActionVec& xt,
                               std::span<const double> context);

struct CfmBatchItem {
    core::ActionVec xt{};
    double t = 0.0;
    std::vector<double> context;
    core::ActionVec target_velocity{};
};

struct LossGrad {
    double loss = 0.0;
    std::vector<double> param_grad;
    // d loss / d context per batch item, for end-to-end encoder training.
    std::vector<std::vector<double>> context_grad;
};

// Loss is the squared L2 norm over all kActionDim components, averaged over
// the batch. Gradients via netfn::backward.
LossGrad cfm_loss_and_grad(const netfn::Params& head, std::span<const CfmBatchItem> batch);

// Generic fixed-step integrators over flat states; the field callable
// receives (t, state) and returns the velocity. Used directly by tests with
// closed-form fields and by the ActionVec wrappers below.
using VelocityFn = std::function<std::vector<double>(double, const std::vector<double>&)>;

std::vector<double> euler_integrate_flat(const VelocityFn& field, std::vector<double> x0, int steps);
std::vector<double> rk4_integrate_flat(const VelocityFn& field, std::vector<double> x0, int steps);

// Integrates the learned velocity head from the normalized-space sample x0
// at fixed context. Left-endpoint time grid t = 0, 1/K, ..., (K-1)/K.
core::ActionVec euler_integrate(const netfn::Params& head, const core::ActionVec& x0,
                                std::span<const double> context, int steps);
core::ActionVec rk4_integrate(const netfn::Params& head, const core::ActionVec& x0,
                              std::span<const double> context, int steps);

core::ActionVec integrate(const netfn::Params& head, const core::ActionVec& x0,
                          std::span<const double> context, const IntegratorConfig& config);

}  // namespace fmnav::cfm
