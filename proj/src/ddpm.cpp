#include "fmnav/ddpm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fmnav/errors.hpp"

namespace fmnav::ddpm {

using core::ActionVec;
using core::kActionDim;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kBetaMin = 1e-8;
constexpr double kBetaMax = 0.999;

}  // namespace

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
    if (betas.empty()) throw ContractError("NoiseSchedule: empty beta list");
    NoiseSchedule s;
    s.total_steps = static_cast<int>(betas.size());
    s.beta = std::move(betas);
    s.alpha.resize(s.beta.size());
    s.alpha_bar.resize(s.beta.size());
    double prod = 1.0;
    for (std::size_t i = 0; i < s.beta.size(); ++i) {
        s.beta[i] = std::clamp(s.beta[i], kBetaMin, kBetaMax);
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

double NoiseSchedule::alpha_bar_at(int k) const {
    if (k < 1 || k > total_steps) {
        throw ContractError("NoiseSchedule: step " + std::to_string(k) + " outside [1, " +
                            std::to_string(total_steps) + "]");
    }
    return alpha_bar[k - 1];
}

NoiseSchedule build_schedule(int total_steps, ScheduleShape shape) {
    if (total_steps < 1) throw ContractError("build_schedule: N must be >= 1");
    std::vector<double> betas(total_steps);
    if (shape == ScheduleShape::square_cosine) {
        const double s = 0.008;
        auto f = [&](double k) {
            const double u = (k / total_steps + s) / (1.0 + s) * kPi / 2.0;
            const double c = std::cos(u);
            return c * c;
        };
        const double f0 = f(0.0);
        double ab_prev = 1.0;
        for (int k = 1; k <= total_steps; ++k) {
            const double ab = f(static_cast<double>(k)) / f0;
            betas[k - 1] = 1.0 - ab / ab_prev;
            ab_prev = ab;
        }
    } else {
        // Classic linear endpoints, rescaled so short desk-scale schedules
        // still reach a near-standard-normal marginal at k = N.
        const double scale = 1000.0 / static_cast<double>(total_steps);
        const double hi = std::min(kBetaMax, 0.02 * scale);
        const double lo = std::min(1e-4 * scale, 0.5 * hi);
        for (int k = 0; k < total_steps; ++k) {
            const double u = total_steps > 1 ? static_cast<double>(k) / (total_steps - 1) : 0.0;
            betas[k] = lo + (hi - lo) * u;
        }
    }
    return NoiseSchedule::from_betas(std::move(betas));
}

ActionVec add_noise(const ActionVec& a0, int k, const ActionVec& eps,
                    const NoiseSchedule& schedule) {
    const double ab = schedule.alpha_bar_at(k);
    ActionVec ak{};
    const double c0 = std::sqrt(ab);
    const double c1 = std::sqrt(1.0 - ab);
    for (int i = 0; i < kActionDim; ++i) ak[i] = c0 * a0[i] + c1 * eps[i];
    return ak;
}

std::vector<double> head_input(int k, int total_steps, const ActionVec& ak,
                               std::span<const double> context) {
    const double kn = static_cast<double>(k) / static_cast<double>(total_steps);
    std::vector<double> input;
    input.reserve(2 + kActionDim + context.size());
    input.push_back(kn);
    input.push_back(1.0 - kn);
    input.insert(input.end(), ak.begin(), ak.end());
    input.insert(input.end(), context.begin(), context.end());
    return input;
}

cfm::LossGrad ddpm_loss_and_grad(const netfn::Params& head, std::span<const DdpmBatchItem> batch,
                                 const NoiseSchedule& schedule) {
    if (batch.empty()) throw ContractError("ddpm_loss_and_grad: empty batch");
    const double inv = 1.0 / (static_cast<double>(batch.size()) * kActionDim);
    cfm::LossGrad out;
    out.param_grad.assign(head.size(), 0.0);
    out.context_grad.reserve(batch.size());

    for (const DdpmBatchItem& item : batch) {
        if (item.k < 1 || item.k > schedule.total_steps) {
            throw ContractError("ddpm_loss_and_grad: step index out of range");
        }
        const std::vector<double> input =
            head_input(item.k, schedule.total_steps, item.ak, item.context);
        const std::vector<double> pred = netfn::forward(head, input);
        std::vector<double> out_grad(kActionDim, 0.0);
        for (int i = 0; i < kActionDim; ++i) {
            const double r = pred[i] - item.eps[i];
            if (!std::isfinite(r)) {
                throw NumericalError("ddpm_loss_and_grad: non-finite residual at output " +
                                     std::to_string(i));
            }
            out.loss += r * r * inv;
            out_grad[i] = 2.0 * r * inv;
        }
        netfn::BackwardResult bw = netfn::backward(head, input, out_grad);
        for (std::size_t i = 0; i < bw.param_grad.size(); ++i) {
            out.param_grad[i] += bw.param_grad[i];
        }
        const std::size_t ctx_offset = 2 + kActionDim;
        out.context_grad.emplace_back(bw.input_grad.begin() + ctx_offset, bw.input_grad.end());
    }
    return out;
}

std::vector<int> strided_steps(int total_steps, int eval_steps) {
    if (eval_steps < 1 || eval_steps > total_steps) {
        throw ContractError("strided_steps: eval_steps outside [1, N]");
    }
    std::vector<int> ks;
    ks.reserve(eval_steps);
    if (eval_steps == 1) {
        ks.push_back(total_steps);
        return ks;
    }
    for (int i = 0; i < eval_steps; ++i) {
        const double u = static_cast<double>(i) * (total_steps - 1) / (eval_steps - 1);
        const int k = total_steps - static_cast<int>(std::lround(u));
        if (ks.empty() || ks.back() != k) ks.push_back(k);
    }
    return ks;
}

std::vector<double> ddpm_sample_flat(const EpsFn& eps_fn, int dim, const NoiseSchedule& schedule,
                                     int eval_steps, Rng& rng) {
    std::vector<double> x(dim);
    for (double& v : x) v = rng.normal();

    const std::vector<int> ks = strided_steps(schedule.total_steps, eval_steps);
    for (std::size_t idx = 0; idx < ks.size(); ++idx) {
        const int k = ks[idx];
        const int k_prev = idx + 1 < ks.size() ? ks[idx + 1] : 0;
        const double ab_k = schedule.alpha_bar_at(k);
        const double ab_prev = k_prev >= 1 ? schedule.alpha_bar_at(k_prev) : 1.0;
        // Per-stride coefficients; with stride 1 these are alpha_k, beta_k.
        const double alpha_eff = ab_k / ab_prev;
        const double beta_eff = 1.0 - alpha_eff;
        const double gamma = beta_eff / std::sqrt(1.0 - ab_k);
        const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha_eff);

        const std::vector<double> eps = eps_fn(x, k);
        const bool last = idx + 1 == ks.size();
        const double sigma = last ? 0.0 : std::sqrt(beta_eff);
        for (int i = 0; i < dim; ++i) {
            x[i] = inv_sqrt_alpha * (x[i] - gamma * eps[i]);
            if (!last) x[i] += sigma * rng.normal();
            if (!std::isfinite(x[i])) {
                throw NumericalError("ddpm_sample: non-finite state at element " +
                                     std::to_string(i),
                                     k);
            }
        }
    }
    return x;
}

ActionVec ddpm_sample(const netfn::Params& head, std::span<const double> context,
                      const NoiseSchedule& schedule, int eval_steps, Rng& rng) {
    std::vector<double> ctx(context.begin(), context.end());
    EpsFn eps_fn = [&head, &schedule, ctx = std::move(ctx)](const std::vector<double>& state,
                                                            int k) {
        ActionVec ak{};
        for (int i = 0; i < kActionDim; ++i) ak[i] = state[i];
        return netfn::forward(head, head_input(k, schedule.total_steps, ak, ctx));
    };
    const std::vector<double> x =
        ddpm_sample_flat(eps_fn, kActionDim, schedule, eval_steps, rng);
    ActionVec out{};
    for (int i = 0; i < kActionDim; ++i) out[i] = x[i];
    return out;
}

}  // namespace fmnav::ddpm
