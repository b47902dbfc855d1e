#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fmnav/core.hpp"
#include "fmnav/rng.hpp"

namespace fmnav::world {

inline constexpr double kCellSize = 0.1;       // meters per grid cell
inline constexpr double kRobotRadius = 0.15;   // collision disc radius
inline constexpr double kMaxRayRange = 3.0;    // sensor clip distance
inline constexpr double kWaypointSpacing = 0.25;
inline constexpr int kDefaultRayCount = 32;
inline constexpr int kDepthRayCount = 128;
inline constexpr double kCollisionMarchStep = 0.02;

enum class Difficulty { easy, hard };
enum class MapLayout { corridor, loop };

struct GridCell {
    int row = 0;
    int col = 0;
};

struct Pose {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;  // radians in (-pi, pi]
};

// Annotated branching cell: where a junction sits, a probe pose on the
// inbound corridor, and one representative pose down each continuation.
struct Junction {
    GridCell cell;
    Pose approach;
    std::array<Pose, 2> continuations;
};

// Occupancy-grid environment. Cell (r, c) covers
// [c*cell, (c+1)*cell] x [r*cell, (r+1)*cell]; out-of-bounds is occupied.
struct Environment {
    int rows = 0;
    int cols = 0;
    double cell_size = kCellSize;
    std::vector<std::uint8_t> occ;
    Pose start_pose;
    Pose goal_pose;
    std::vector<Junction> junctions;
    std::vector<Pose> branch_goals;        // secondary endpoints (hard maps)
    std::vector<GridCell> loop_anchors;    // lap waypoints in cycle order (loops)
    Difficulty difficulty = Difficulty::easy;
    MapLayout layout = MapLayout::corridor;
    std::uint64_t seed = 0;

    bool in_bounds(int r, int c) const { return r >= 0 && r < rows && c >= 0 && c < cols; }
    bool occupied(int r, int c) const {
        return !in_bounds(r, c) || occ[static_cast<std::size_t>(r) * cols + c] != 0;
    }
    double width_m() const { return cols * cell_size; }
    double height_m() const { return rows * cell_size; }
    GridCell cell_of(double x, double y) const {
        return {static_cast<int>(std::floor(y / cell_size)),
                static_cast<int>(std::floor(x / cell_size))};
    }
};

// Deterministic procedural map. Corridor layouts snake from start to goal
// with 90-degree turns; hard maps add one T-junction branch and at least
// two box obstacles. Loop layouts are ring corridors (hard: plus a chord
// junction and boxes). Throws DataError after 100 failed attempts.
Environment generate_environment(std::uint64_t seed, Difficulty difficulty,
                                 MapLayout layout = MapLayout::corridor);

// Shortest 8-connected grid path start -> goal on the clearance-inflated
// grid, shortcut-smoothed and resampled at kWaypointSpacing, headings along
// the path. For loop layouts, returns one full lap from the start pose.
std::vector<Pose> expert_path(const Environment& env);

// Same machinery toward an arbitrary free target.
std::vector<Pose> expert_path_to(const Environment& env, const Pose& target);

// True if a disc of the given radius centered at (x, y) overlaps any
// occupied cell.
bool disc_collides(const Environment& env, double x, double y, double radius);

// Range to the first occupied cell along the ray, clipped at max_range.
double cast_ray(const Environment& env, double x, double y, double angle, double max_range);

// Ray features over a 180-degree frontal fan (ray_count rays inclusive of
// both endpoints), ranges divided by kMaxRayRange, plus heading sin/cos.
// Throws ContractError if the pose cell is occupied.
std::vector<double> observe(const Environment& env, const Pose& pose,
                            int ray_count = kDefaultRayCount);

inline constexpr int observation_dim(int ray_count) { return ray_count + 2; }

struct DepthPrior {
    std::array<double, core::kDepthDim> pooled{};
};

// Inverse ray depths 1/(1+range) over kDepthRayCount rays, average-pooled
// down to core::kDepthDim values.
DepthPrior depth_features(const Environment& env, const Pose& pose);

struct Provenance {
    std::uint64_t env_seed = 0;
    int path_id = 0;    // 0 = main expert path, >0 = branch paths
    int index = 0;      // pose index along the path
    int goal_index = 0;
    Pose pose;
};

struct TrainingRecord {
    core::ObservationContext context;
    bool goal_present = true;
    core::ActionSequence expert_actions;  // normalized
    double temporal_distance_label = 0.0;
    Provenance provenance;
};

struct DatasetConfig {
    int n_envs = 24;
    int records_per_env = 300;
    bool with_depth = true;
    int ray_count = kDefaultRayCount;
    int goal_min_ahead = 8;
    int goal_max_ahead = 32;
    // easy/hard alternate per env index; hard maps contribute records from
    // the branch path as well as the main path.
    Difficulty difficulty_mix = Difficulty::hard;
    bool mix_difficulties = true;
};

struct DatasetBuild {
    std::vector<TrainingRecord> records;
    core::NormStats stats;
    int skipped = 0;
};

// Assembles records by sampling segments of expert paths across
// deterministically seeded environments. Actions are robot-local relative
// waypoints, normalized with dataset-level stats.
DatasetBuild build_dataset(const DatasetConfig& config, std::uint64_t master_seed);

// Transforms robot-local waypoints into the world frame at `pose`.
std::vector<Pose> actions_to_world(const Pose& pose, const core::ActionSequence& actions);

// Marches the waypoint chain at kCollisionMarchStep resolution and counts
// collision entry events for a disc of kRobotRadius. Actions must be
// unnormalized (robot-local meters).
int check_collision(const Environment& env, const Pose& pose,
                    const core::ActionSequence& actions);

// Shared helper: entry-event count at an arbitrary march resolution.
int count_collision_entries(const Environment& env, const std::vector<Pose>& chain,
                            double resolution, double radius);

}  // namespace fmnav::world
