#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

namespace fmnav::core {

// Prediction horizon: waypoints per action sequence.
inline constexpr int kActionHorizon = 8;
// Past observation horizon; a context stacks kObsHorizon + 1 steps.
inline constexpr int kObsHorizon = 3;
inline constexpr int kContextSteps = kObsHorizon + 1;
// Flat action dimension (x, y per waypoint).
inline constexpr int kActionDim = 2 * kActionHorizon;
// Normalized coordinates are clamped to [-kNormClamp, kNormClamp].
inline constexpr double kNormClamp = 4.0;
// Lower bound on normalization scale, guards degenerate datasets.
inline constexpr double kScaleFloor = 1e-6;
inline constexpr int kDepthDim = 64;

struct Waypoint {
    double x = 0.0;
    double y = 0.0;
};

// Flat view of an action sequence, the representation the generative heads
// and integrators work in.
using ActionVec = std::array<double, kActionDim>;

// Ordered waypoint sequence in the robot-local frame. `normalized` tracks
// whether coordinates are in normalized units or meters.
struct ActionSequence {
    std::array<Waypoint, kActionHorizon> waypoints{};
    bool normalized = false;

    ActionVec flat() const {
        ActionVec v{};
        for (int i = 0; i < kActionHorizon; ++i) {
            v[2 * i] = waypoints[i].x;
            v[2 * i + 1] = waypoints[i].y;
        }
        return v;
    }

    static ActionSequence from_flat(const ActionVec& v, bool normalized) {
        ActionSequence seq;
        for (int i = 0; i < kActionHorizon; ++i) {
            seq.waypoints[i] = {v[2 * i], v[2 * i + 1]};
        }
        seq.normalized = normalized;
        return seq;
    }
};

// Stacked per-step observation features over the context horizon, plus the
// optional goal features and optional pooled depth features.
struct ObservationContext {
    std::array<std::vector<double>, kContextSteps> step_features;
    std::optional<std::vector<double>> goal_features;
    std::optional<std::array<double, kDepthDim>> depth_features;
};

// Per-axis z-score statistics. scale components are strictly positive.
struct NormStats {
    std::array<double, 2> mean{0.0, 0.0};
    std::array<double, 2> scale{1.0, 1.0};
};

// Scalar flow time in [0, 1].
struct FlowTime {
    double t = 0.0;
};

// (raw - mean) / scale per axis, clamped to the +/-4 support bound.
// Throws DataError on non-finite input, ContractError if already normalized.
ActionSequence normalize_actions(const ActionSequence& raw, const NormStats& stats);

// Inverse of normalize_actions (exact for coordinates inside the clamp).
// Throws ContractError if the input is not flagged normalized.
ActionSequence unnormalize_actions(const ActionSequence& norm, const NormStats& stats);

// Per-axis mean and standard deviation over all waypoints of the dataset,
// scale floored at kScaleFloor. Throws DataError on an empty dataset.
NormStats compute_norm_stats(const std::vector<ActionSequence>& dataset);

}  // namespace fmnav::core
