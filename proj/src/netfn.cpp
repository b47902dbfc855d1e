#include "fmnav/netfn.hpp"

#include <cmath>
#include <string>

#include "fmnav/errors.hpp"
#include "fmnav/rng.hpp"

namespace fmnav::netfn {

namespace {

constexpr double kPi = 3.14159265358979323846;

double apply_activation(Activation act, double x) {
    switch (act) {
        case Activation::relu:
            return x > 0.0 ? x : 0.0;
        case Activation::gelu:
            // tanh approximation
            return 0.5 * x * (1.0 + std::tanh(0.7978845608028654 * (x + 0.044715 * x * x * x)));
        case Activation::tanh:
            return std::tanh(x);
    }
    return x;
}

// Derivative as a function of the pre-activation z.
double activation_grad(Activation act, double z) {
    switch (act) {
        case Activation::relu:
            return z > 0.0 ? 1.0 : 0.0;
        case Activation::gelu: {
            const double c = 0.7978845608028654;
            const double u = c * (z + 0.044715 * z * z * z);
            const double t = std::tanh(u);
            const double du = c * (1.0 + 3.0 * 0.044715 * z * z);
            return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * du;
        }
        case Activation::tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

void check_spec(const MlpSpec& spec) {
    if (spec.layer_widths.size() < 2) {
        throw ContractError("MlpSpec: need at least input and output widths");
    }
    for (int w : spec.layer_widths) {
        if (w < 1) throw ContractError("MlpSpec: widths must be >= 1");
    }
}

}  // namespace

Params init_params(const MlpSpec& spec) {
    check_spec(spec);
    Params p;
    p.spec = spec;
    int offset = 0;
    for (std::size_t l = 0; l + 1 < spec.layer_widths.size(); ++l) {
        LayerSlice slice;
        slice.in = spec.layer_widths[l];
        slice.out = spec.layer_widths[l + 1];
        slice.weight_begin = offset;
        slice.bias_begin = offset + slice.in * slice.out;
        offset = slice.bias_begin + slice.out;
        p.layout.push_back(slice);
    }
    p.values.assign(offset, 0.0);

    Rng rng(spec.seed);
    const double gain = spec.activation == Activation::relu ? 2.0 : 1.0;
    for (const LayerSlice& slice : p.layout) {
        // uniform [-a, a] with a = sqrt(3 * gain / fan_in), so std = sqrt(gain / fan_in)
        const double a = std::sqrt(3.0 * gain / slice.in);
        for (int i = 0; i < slice.in * slice.out; ++i) {
            p.values[slice.weight_begin + i] = rng.uniform(-a, a);
        }
        // biases stay zero
    }
    return p;
}

std::vector<double> forward(const Params& params, std::span<const double> input) {
    if (static_cast<int>(input.size()) != params.spec.input_dim()) {
        throw ContractError("forward: input size " + std::to_string(input.size()) +
                            " != expected " + std::to_string(params.spec.input_dim()));
    }
    std::vector<double> cur(input.begin(), input.end());
    std::vector<double> next;
    const std::size_t last = params.layout.size() - 1;
    for (std::size_t l = 0; l < params.layout.size(); ++l) {
        const LayerSlice& s = params.layout[l];
        next.assign(s.out, 0.0);
        const double* w = params.values.data() + s.weight_begin;
        const double* b = params.values.data() + s.bias_begin;
        for (int o = 0; o < s.out; ++o) {
            double acc = b[o];
            const double* row = w + static_cast<std::size_t>(o) * s.in;
            for (int i = 0; i < s.in; ++i) acc += row[i] * cur[i];
            next[o] = acc;
        }
        if (l != last) {
            for (double& z : next) z = apply_activation(params.spec.activation, z);
        }
        cur.swap(next);
    }
    return cur;
}

BackwardResult backward(const Params& params, std::span<const double> input,
                        std::span<const double> output_grad) {
    if (static_cast<int>(input.size()) != params.spec.input_dim()) {
        throw ContractError("backward: input size mismatch");
    }
    if (static_cast<int>(output_grad.size()) != params.spec.output_dim()) {
        throw ContractError("backward: output_grad size mismatch");
    }

    const std::size_t n_layers = params.layout.size();
    // Forward pass keeping pre-activations (z) and activations (x) per layer.
    std::vector<std::vector<double>> acts(n_layers + 1);
    std::vector<std::vector<double>> pre(n_layers);
    acts[0].assign(input.begin(), input.end());
    for (std::size_t l = 0; l < n_layers; ++l) {
        const LayerSlice& s = params.layout[l];
        pre[l].assign(s.out, 0.0);
        const double* w = params.values.data() + s.weight_begin;
        const double* b = params.values.data() + s.bias_begin;
        for (int o = 0; o < s.out; ++o) {
            double acc = b[o];
            const double* row = w + static_cast<std::size_t>(o) * s.in;
            for (int i = 0; i < s.in; ++i) acc += row[i] * acts[l][i];
            pre[l][o] = acc;
        }
        if (l + 1 < n_layers) {
            acts[l + 1].assign(s.out, 0.0);
            for (int o = 0; o < s.out; ++o) {
                acts[l + 1][o] = apply_activation(params.spec.activation, pre[l][o]);
            }
        } else {
            acts[l + 1] = pre[l];  // final layer is linear
        }
    }

    BackwardResult result;
    result.param_grad.assign(params.values.size(), 0.0);
    std::vector<double> delta(output_grad.begin(), output_grad.end());
    std::vector<double> delta_prev;
    for (std::size_t li = n_layers; li-- > 0;) {
        const LayerSlice& s = params.layout[li];
        if (li + 1 < n_layers) {
            // delta currently holds dL/dx for this layer's activation output;
            // fold in the activation derivative to get dL/dz.
            for (int o = 0; o < s.out; ++o) {
                delta[o] *= activation_grad(params.spec.activation, pre[li][o]);
            }
        }
        double* wg = result.param_grad.data() + s.weight_begin;
        double* bg = result.param_grad.data() + s.bias_begin;
        const double* x = acts[li].data();
        for (int o = 0; o < s.out; ++o) {
            const double d = delta[o];
            double* row = wg + static_cast<std::size_t>(o) * s.in;
            for (int i = 0; i < s.in; ++i) row[i] = d * x[i];
            bg[o] = d;
        }
        delta_prev.assign(s.in, 0.0);
        const double* w = params.values.data() + s.weight_begin;
        for (int o = 0; o < s.out; ++o) {
            const double d = delta[o];
            const double* row = w + static_cast<std::size_t>(o) * s.in;
            for (int i = 0; i < s.in; ++i) delta_prev[i] += d * row[i];
        }
        delta.swap(delta_prev);
    }
    result.input_grad = std::move(delta);
    return result;
}

OptState OptState::for_params(const Params& p, double lr, double weight_decay) {
    return for_size(p.size(), lr, weight_decay);
}

OptState OptState::for_size(std::size_t n, double lr, double weight_decay) {
    OptState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    s.lr = lr;
    s.weight_decay = weight_decay;
    return s;
}

void adamw_update(std::span<double> values, std::span<const double> grads, OptState& opt) {
    if (grads.size() != values.size() || opt.m.size() != values.size()) {
        throw ContractError("adamw_step: length mismatch");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw NumericalError("adamw_step: non-finite gradient at index " + std::to_string(i),
                                 opt.step);
        }
    }
    opt.step += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (std::size_t i = 0; i < grads.size(); ++i) {
        const double g = grads[i];
        opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g;
        opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * g * g;
        const double m_hat = opt.m[i] / bc1;
        const double v_hat = opt.v[i] / bc2;
        double p = values[i];
        p -= opt.lr * opt.weight_decay * p;  // decoupled decay
        p -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps);
        values[i] = p;
    }
}

void adamw_step(Params& params, std::span<const double> grads, OptState& opt) {
    adamw_update(params.values, grads, opt);
}

double lr_schedule(long step, long total_steps, long warmup_steps, double base_lr,
                   ScheduleKind kind) {
    if (step < 0 || total_steps <= 0 || warmup_steps < 0 || warmup_steps >= total_steps) {
        throw ContractError("lr_schedule: invalid step/total/warmup");
    }
    if (kind == ScheduleKind::constant) return base_lr;
    if (step <= warmup_steps) {
        if (warmup_steps == 0) return base_lr;
        const double u = static_cast<double>(step) / static_cast<double>(warmup_steps);
        if (kind == ScheduleKind::one_cycle) {
            return base_lr * 0.5 * (1.0 - std::cos(kPi * u));
        }
        return base_lr * u;
    }
    const double u = static_cast<double>(step - warmup_steps) /
                     static_cast<double>(total_steps - warmup_steps);
    const double c = std::cos(0.5 * kPi * u);
    return base_lr * c * c;
}

}  // namespace fmnav::netfn
