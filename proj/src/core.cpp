#include "fmnav/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fmnav/errors.hpp"

namespace fmnav::core {

ActionSequence normalize_actions(const ActionSequence& raw, const NormStats& stats) {
    if (raw.normalized) {
        throw ContractError("normalize_actions: input is already normalized");
    }
    if (!(stats.scale[0] > 0.0) || !(stats.scale[1] > 0.0)) {
        throw ContractError("normalize_actions: non-positive scale");
    }
    ActionSequence out;
    for (int i = 0; i < kActionHorizon; ++i) {
        const Waypoint& w = raw.waypoints[i];
        if (!std::isfinite(w.x) || !std::isfinite(w.y)) {
            throw DataError("normalize_actions: non-finite coordinate at waypoint " +
                            std::to_string(i));
        }
        const double nx = (w.x - stats.mean[0]) / stats.scale[0];
        const double ny = (w.y - stats.mean[1]) / stats.scale[1];
        out.waypoints[i].x = std::clamp(nx, -kNormClamp, kNormClamp);
        out.waypoints[i].y = std::clamp(ny, -kNormClamp, kNormClamp);
    }
    out.normalized = true;
    return out;
}

ActionSequence unnormalize_actions(const ActionSequence& norm, const NormStats& stats) {
    if (!norm.normalized) {
        throw ContractError("unnormalize_actions: input is not normalized");
    }
    ActionSequence out;
    for (int i = 0; i < kActionHorizon; ++i) {
        out.waypoints[i].x = norm.waypoints[i].x * stats.scale[0] + stats.mean[0];
        out.waypoints[i].y = norm.waypoints[i].y * stats.scale[1] + stats.mean[1];
    }
    out.normalized = false;
    return out;
}

NormStats compute_norm_stats(const std::vector<ActionSequence>& dataset) {
    if (dataset.empty()) {
        throw DataError("compute_norm_stats: empty dataset");
    }
    const double n = static_cast<double>(dataset.size()) * kActionHorizon;
    double sum[2] = {0.0, 0.0};
    for (const ActionSequence& seq : dataset) {
        for (const Waypoint& w : seq.waypoints) {
            sum[0] += w.x;
            sum[1] += w.y;
        }
    }
    NormStats stats;
    stats.mean = {sum[0] / n, sum[1] / n};

    double sq[2] = {0.0, 0.0};
    for (const ActionSequence& seq : dataset) {
        for (const Waypoint& w : seq.waypoints) {
            const double dx = w.x - stats.mean[0];
            const double dy = w.y - stats.mean[1];
            sq[0] += dx * dx;
            sq[1] += dy * dy;
        }
    }
    stats.scale = {std::max(std::sqrt(sq[0] / n), kScaleFloor),
                   std::max(std::sqrt(sq[1] / n), kScaleFloor)};
    return stats;
}

}  // namespace fmnav::core
