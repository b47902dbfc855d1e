#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fmnav/cfm.hpp"
#include "fmnav/core.hpp"
#include "fmnav/netfn.hpp"
#include "fmnav/rng.hpp"

namespace fmnav::ddpm {

enum class ScheduleShape { square_cosine, linear };

// Forward-noising schedule. alpha = 1 - beta, alpha_bar is the running
// product; alpha_bar is strictly decreasing in (0, 1].
struct NoiseSchedule {
    int total_steps = 0;  // N
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    // Recomputes alpha and alpha_bar from raw betas (clipped to the valid
    // open interval). Entry k-1 corresponds to diffusion step k in [1, N].
    static NoiseSchedule from_betas(std::vector<double> betas);

    double alpha_bar_at(int k) const;  // k in [1, N]
};

NoiseSchedule build_schedule(int total_steps, ScheduleShape shape);

// One training draw: Ak = sqrt(alpha_bar_k) * A0 + sqrt(1 - alpha_bar_k) * eps.
struct DiffusionSample {
    core::ActionSequence a0;
    int k = 1;
    core::ActionVec eps{};
    core::ActionSequence ak;
};

core::ActionVec add_noise(const core::ActionVec& a0, int k, const core::ActionVec& eps,
                          const NoiseSchedule& schedule);

// Noise head input layout: [k/N, 1-k/N, Ak (kActionDim), context], matching
// the velocity head's layout so the two heads cost the same per step.
std::vector<double> head_input(int k, int total_steps, const core::ActionVec& ak,
                               std::span<const double> context);

struct DdpmBatchItem {
    core::ActionVec ak{};
    int k = 1;
    std::vector<double> context;
    core::ActionVec eps{};
};

// Mean squared error over all elements and the batch (per-element mean,
// unlike the CFM loss which sums over components).
cfm::LossGrad ddpm_loss_and_grad(const netfn::Params& head, std::span<const DdpmBatchItem> batch,
                                 const NoiseSchedule& schedule);

// Noise predictor over a flat state; k is the (full-schedule) step index.
using EpsFn = std::function<std::vector<double>(const std::vector<double>&, int)>;

// Ancestral sampling from a standard normal draw. If eval_steps < N an
// evenly strided sub-schedule is used with re-derived per-stride
// coefficients; eval_steps == N reproduces the full chain exactly. No noise
// is added at the final step.
std::vector<double> ddpm_sample_flat(const EpsFn& eps_fn, int dim, const NoiseSchedule& schedule,
                                     int eval_steps, Rng& rng);

core::ActionVec ddpm_sample(const netfn::Params& head, std::span<const double> context,
                            const NoiseSchedule& schedule, int eval_steps, Rng& rng);

// The strided step indices used by ddpm_sample for a given eval_steps,
// descending from N. Exposed for tests and seed audits.
std::vector<int> strided_steps(int total_steps, int eval_steps);

}  // namespace fmnav::ddpm
