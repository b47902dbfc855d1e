#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fmnav/world.hpp"

namespace fmnav::svg {

// Scene description decoupled from the live Environment so traces can be
// replotted from files.
struct Scene {
    int rows = 0;
    int cols = 0;
    double cell_size = world::kCellSize;
    std::vector<std::string> grid;  // '#' occupied, '.' free; one string per row
    std::vector<std::vector<std::array<double, 2>>> sampled;   // blue
    std::vector<std::array<double, 2>> executed;               // yellow
    std::optional<std::array<double, 2>> goal;
};

Scene scene_from_environment(const world::Environment& env);

// Deterministic SVG bytes: grid and obstacles, sampled trajectories as
// polylines tagged class="sampled", the executed path tagged
// class="executed", and a goal marker.
std::string render_svg(const Scene& scene);

}  // namespace fmnav::svg
