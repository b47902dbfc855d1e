#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace fmnav::netfn {

enum class Activation { relu, gelu, tanh };

// Shape of a fully connected network: layer_widths[0] is the input size,
// layer_widths.back() the output size. Hidden layers use `activation`, the
// final layer is linear.
struct MlpSpec {
    std::vector<int> layer_widths;
    Activation activation = Activation::relu;
    std::uint64_t seed = 0;

    int input_dim() const { return layer_widths.front(); }
    int output_dim() const { return layer_widths.back(); }
};

// Offsets of one layer inside the flat parameter vector. Weights are
// row-major [out][in], biases follow immediately after.
struct LayerSlice {
    int weight_begin = 0;
    int bias_begin = 0;
    int in = 0;
    int out = 0;
};

// Flat parameter vector plus the layout mapping layers to slices.
struct Params {
    MlpSpec spec;
    std::vector<LayerSlice> layout;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
};

// He-style uniform init scaled by fan-in (gain 2 for relu, 1 otherwise),
// zero biases. Deterministic given spec.seed.
Params init_params(const MlpSpec& spec);

std::vector<double> forward(const Params& params, std::span<const double> input);

struct BackwardResult {
    std::vector<double> param_grad;
    std::vector<double> input_grad;
};

// Exact reverse-mode gradients of forward: param_grad = d(output_grad . y)/d params,
// input_grad = d(output_grad . y)/d input.
BackwardResult backward(const Params& params, std::span<const double> input,
                        std::span<const double> output_grad);

struct OptState {
    std::vector<double> m;  // first moment
    std::vector<double> v;  // second moment
    long step = 0;
    double lr = 1e-4;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static OptState for_params(const Params& p, double lr, double weight_decay = 0.0);
    static OptState for_size(std::size_t n, double lr, double weight_decay = 0.0);
};

// One AdamW update in place: decoupled weight decay, bias-corrected moments.
// Throws NumericalError naming the offending index on a non-finite gradient.
void adamw_step(Params& params, std::span<const double> grads, OptState& opt);

// Same update over a raw value vector (non-MLP parameter groups).
void adamw_update(std::span<double> values, std::span<const double> grads, OptState& opt);

enum class ScheduleKind { half_cosine_warmup, one_cycle, constant };

// Learning rate at `step`. half_cosine_warmup ramps linearly 0 -> base_lr
// over warmup_steps then decays base_lr -> 0 along cos^2(pi/2 * u);
// one_cycle uses a cosine ramp with the same decay; constant returns base_lr.
double lr_schedule(long step, long total_steps, long warmup_steps, double base_lr,
                   ScheduleKind kind);

}  // namespace fmnav::netfn
