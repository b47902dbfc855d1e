#include "fmnav/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <tuple>

#include "fmnav/errors.hpp"

namespace fmnav::world {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kGenRetryLimit = 100;
// Clearance used when inflating the grid for A* planning.
constexpr double kPlanClearance = 0.17;
// Clearance required along shortcut segments; covers the corner cut
// introduced when the smoothed polyline is resampled at 0.25 m.
constexpr double kLosClearance = 0.26;

double normalize_angle(double a) {
    while (a > kPi) a -= 2.0 * kPi;
    while (a <= -kPi) a += 2.0 * kPi;
    return a;
}

Pose cell_center(const Environment& env, int r, int c, double heading = 0.0) {
    return {(c + 0.5) * env.cell_size, (r + 0.5) * env.cell_size, heading};
}

void carve_band(Environment& env, int r0, int c0, int r1, int c1, int halfwidth) {
    const int rlo = std::max(1, std::min(r0, r1) - halfwidth);
    const int rhi = std::min(env.rows - 2, std::max(r0, r1) + halfwidth);
    const int clo = std::max(1, std::min(c0, c1) - halfwidth);
    const int chi = std::min(env.cols - 2, std::max(c0, c1) + halfwidth);
    for (int r = rlo; r <= rhi; ++r) {
        for (int c = clo; c <= chi; ++c) {
            env.occ[static_cast<std::size_t>(r) * env.cols + c] = 0;
        }
    }
}

void block_rect(Environment& env, int r0, int c0, int r1, int c1, std::uint8_t value) {
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            if (env.in_bounds(r, c)) {
                env.occ[static_cast<std::size_t>(r) * env.cols + c] = value;
            }
        }
    }
}

// Passability mask: cell centers with at least `clearance` distance to
// every occupied cell rectangle.
std::vector<std::uint8_t> inflate_grid(const Environment& env, double clearance) {
    std::vector<std::uint8_t> passable(static_cast<std::size_t>(env.rows) * env.cols, 0);
    const int reach = static_cast<int>(std::ceil(clearance / env.cell_size)) + 1;
    for (int r = 0; r < env.rows; ++r) {
        for (int c = 0; c < env.cols; ++c) {
            if (env.occupied(r, c)) continue;
            const double x = (c + 0.5) * env.cell_size;
            const double y = (r + 0.5) * env.cell_size;
            bool ok = true;
            for (int dr = -reach; dr <= reach && ok; ++dr) {
                for (int dc = -reach; dc <= reach && ok; ++dc) {
                    const int rr = r + dr;
                    const int cc = c + dc;
                    if (!env.occupied(rr, cc)) continue;
                    const double x0 = cc * env.cell_size;
                    const double y0 = rr * env.cell_size;
                    const double dx = std::max({x0 - x, 0.0, x - (x0 + env.cell_size)});
                    const double dy = std::max({y0 - y, 0.0, y - (y0 + env.cell_size)});
                    if (dx * dx + dy * dy < clearance * clearance) ok = false;
                }
            }
            passable[static_cast<std::size_t>(r) * env.cols + c] = ok ? 1 : 0;
        }
    }
    return passable;
}

bool bfs_reachable(const Environment& env, const std::vector<std::uint8_t>& passable,
                   GridCell from, const std::vector<GridCell>& targets) {
    if (!env.in_bounds(from.row, from.col) ||
        !passable[static_cast<std::size_t>(from.row) * env.cols + from.col]) {
        return false;
    }
    std::vector<std::uint8_t> seen(passable.size(), 0);
    std::queue<GridCell> q;
    q.push(from);
    seen[static_cast<std::size_t>(from.row) * env.cols + from.col] = 1;
    while (!q.empty()) {
        const GridCell cur = q.front();
        q.pop();
        static constexpr int dr[4] = {1, -1, 0, 0};
        static constexpr int dc[4] = {0, 0, 1, -1};
        for (int d = 0; d < 4; ++d) {
            const int r = cur.row + dr[d];
            const int c = cur.col + dc[d];
            if (!env.in_bounds(r, c)) continue;
            const std::size_t idx = static_cast<std::size_t>(r) * env.cols + c;
            if (seen[idx] || !passable[idx]) continue;
            seen[idx] = 1;
            q.push({r, c});
        }
    }
    for (const GridCell& t : targets) {
        if (!env.in_bounds(t.row, t.col) ||
            !seen[static_cast<std::size_t>(t.row) * env.cols + t.col]) {
            return false;
        }
    }
    return true;
}

// 8-connected A* with no corner cutting; deterministic tie-breaking.
std::vector<GridCell> astar(const Environment& env, const std::vector<std::uint8_t>& passable,
                            GridCell start, GridCell goal) {
    const std::size_t n = static_cast<std::size_t>(env.rows) * env.cols;
    auto idx_of = [&](const GridCell& c) {
        return static_cast<std::size_t>(c.row) * env.cols + c.col;
    };
    if (!passable[idx_of(start)] || !passable[idx_of(goal)]) return {};

    const double kDiag = std::sqrt(2.0);
    std::vector<double> g(n, std::numeric_limits<double>::infinity());
    std::vector<int> parent(n, -1);
    auto heuristic = [&](int r, int c) {
        const double dr = std::abs(r - goal.row);
        const double dc = std::abs(c - goal.col);
        return std::max(dr, dc) + (kDiag - 1.0) * std::min(dr, dc);
    };
    using Entry = std::tuple<double, double, std::size_t>;  // f, g, cell index
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> open;
    g[idx_of(start)] = 0.0;
    open.emplace(heuristic(start.row, start.col), 0.0, idx_of(start));

    static constexpr int dr8[8] = {1, -1, 0, 0, 1, 1, -1, -1};
    static constexpr int dc8[8] = {0, 0, 1, -1, 1, -1, 1, -1};
    while (!open.empty()) {
        const auto [f, gc, idx] = open.top();
        open.pop();
        if (gc > g[idx]) continue;
        const int r = static_cast<int>(idx) / env.cols;
        const int c = static_cast<int>(idx) % env.cols;
        if (r == goal.row && c == goal.col) break;
        for (int d = 0; d < 8; ++d) {
            const int rr = r + dr8[d];
            const int cc = c + dc8[d];
            if (!env.in_bounds(rr, cc)) continue;
            const std::size_t nidx = static_cast<std::size_t>(rr) * env.cols + cc;
            if (!passable[nidx]) continue;
            if (d >= 4) {  // diagonal: both orthogonal neighbours must be passable
                const std::size_t a = static_cast<std::size_t>(r) * env.cols + cc;
                const std::size_t b = static_cast<std::size_t>(rr) * env.cols + c;
                if (!passable[a] || !passable[b]) continue;
            }
            const double cost = d >= 4 ? kDiag : 1.0;
            const double ng = g[idx] + cost;
            if (ng < g[nidx] - 1e-12) {
                g[nidx] = ng;
                parent[nidx] = static_cast<int>(idx);
                open.emplace(ng + heuristic(rr, cc), ng, nidx);
            }
        }
    }
    const std::size_t goal_idx = idx_of(goal);
    if (!std::isfinite(g[goal_idx])) return {};
    std::vector<GridCell> path;
    for (int cur = static_cast<int>(goal_idx); cur != -1; cur = parent[cur]) {
        path.push_back({cur / env.cols, cur % env.cols});
        if (path.size() > n) return {};
    }
    std::reverse(path.begin(), path.end());
    return path;
}

bool segment_clear(const Environment& env, double x0, double y0, double x1, double y1,
                   double clearance) {
    const double dx = x1 - x0;
    const double dy = y1 - y0;
    const double len = std::hypot(dx, dy);
    const int n = std::max(1, static_cast<int>(std::ceil(len / 0.02)));
    for (int i = 0; i <= n; ++i) {
        const double u = static_cast<double>(i) / n;
        if (disc_collides(env, x0 + u * dx, y0 + u * dy, clearance)) return false;
    }
    return true;
}

struct Point2 {
    double x, y;
};

// Greedy line-of-sight shortcutting at kLosClearance.
std::vector<Point2> shortcut_smooth(const Environment& env, const std::vector<Point2>& pts) {
    if (pts.size() <= 2) return pts;
    std::vector<Point2> out;
    out.push_back(pts.front());
    std::size_t i = 0;
    while (i + 1 < pts.size()) {
        std::size_t best = i + 1;
        for (std::size_t j = pts.size() - 1; j > i + 1; --j) {
            if (segment_clear(env, pts[i].x, pts[i].y, pts[j].x, pts[j].y, kLosClearance)) {
                best = j;
                break;
            }
        }
        out.push_back(pts[best]);
        i = best;
    }
    return out;
}

std::vector<Pose> resample_polyline(const std::vector<Point2>& pts, double spacing) {
    std::vector<Pose> out;
    if (pts.empty()) return out;
    std::vector<Point2> dense;
    dense.push_back(pts.front());
    double carry = 0.0;
    for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
        const double dx = pts[s + 1].x - pts[s].x;
        const double dy = pts[s + 1].y - pts[s].y;
        const double len = std::hypot(dx, dy);
        if (len < 1e-12) continue;
        double d = spacing - carry;
        while (d <= len + 1e-12) {
            dense.push_back({pts[s].x + dx * d / len, pts[s].y + dy * d / len});
            d += spacing;
        }
        carry = len - (d - spacing);
    }
    const Point2& last = pts.back();
    if (std::hypot(dense.back().x - last.x, dense.back().y - last.y) > 0.02) {
        dense.push_back(last);
    }
    out.reserve(dense.size());
    for (std::size_t k = 0; k < dense.size(); ++k) {
        double heading;
        if (k + 1 < dense.size()) {
            heading = std::atan2(dense[k + 1].y - dense[k].y, dense[k + 1].x - dense[k].x);
        } else if (k > 0) {
            heading = out[k - 1].heading;
        } else {
            heading = 0.0;
        }
        out.push_back({dense[k].x, dense[k].y, normalize_angle(heading)});
    }
    return out;
}

std::vector<Pose> plan_path(const Environment& env, GridCell from, GridCell to) {
    const std::vector<std::uint8_t> passable = inflate_grid(env, kPlanClearance);
    const std::vector<GridCell> cells = astar(env, passable, from, to);
    if (cells.empty()) {
        throw DataError("expert_path: no path between cells (" + std::to_string(from.row) + "," +
                        std::to_string(from.col) + ") and (" + std::to_string(to.row) + "," +
                        std::to_string(to.col) + ")");
    }
    std::vector<Point2> pts;
    pts.reserve(cells.size());
    for (const GridCell& c : cells) {
        pts.push_back({(c.col + 0.5) * env.cell_size, (c.row + 0.5) * env.cell_size});
    }
    return resample_polyline(shortcut_smooth(env, pts), kWaypointSpacing);
}

bool path_executable(const Environment& env, const std::vector<Pose>& path) {
    if (path.size() < 2) return false;
    return count_collision_entries(env, path, kCollisionMarchStep, kRobotRadius + 0.005) == 0 &&
           !disc_collides(env, path.front().x, path.front().y, kRobotRadius + 0.005);
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct BoxSpot {
    bool horizontal;     // orientation of the host corridor segment
    int center_line;     // centerline row (horizontal) or col (vertical)
    int along_lo, along_hi;  // allowed positions along the segment
};

bool place_boxes(Environment& env, Rng& rng, const std::vector<BoxSpot>& spots, int want,
                 GridCell conn_from, const std::vector<GridCell>& conn_targets) {
    int placed = 0;
    std::vector<std::pair<int, int>> used;  // (spot index, along position)
    int attempts = 0;
    while (placed < want && attempts < 60) {
        ++attempts;
        if (spots.empty()) break;
        const int si = static_cast<int>(rng.uniform_index(spots.size()));
        const BoxSpot& spot = spots[si];
        if (spot.along_hi - spot.along_lo < 4) continue;
        const int along =
            spot.along_lo + static_cast<int>(rng.uniform_index(spot.along_hi - spot.along_lo - 3));
        const int len = 2 + static_cast<int>(rng.uniform_index(3));   // 2..4 along corridor
        const int width = 3 + static_cast<int>(rng.uniform_index(2)); // 3..4 across
        const bool near_side = rng.uniform_index(2) == 0;
        bool clash = false;
        for (const auto& [usi, ua] : used) {
            if (usi == si && std::abs(ua - along) < len + 10) clash = true;
        }
        if (clash) continue;
        // Across the 11-cell band [k-5, k+5]: leave a 1-cell gap at one wall
        // so the box is free-standing, passage stays on the other side.
        const int k = spot.center_line;
        const int across_lo = near_side ? k - 4 : k + 5 - width;
        const int across_hi = across_lo + width - 1;
        int r0, c0, r1, c1;
        if (spot.horizontal) {
            r0 = across_lo; r1 = across_hi; c0 = along; c1 = along + len - 1;
        } else {
            r0 = along; r1 = along + len - 1; c0 = across_lo; c1 = across_hi;
        }
        block_rect(env, r0, c0, r1, c1, 1);
        const std::vector<std::uint8_t> passable = inflate_grid(env, kPlanClearance);
        if (!bfs_reachable(env, passable, conn_from, conn_targets)) {
            block_rect(env, r0, c0, r1, c1, 0);  // undo
            continue;
        }
        used.emplace_back(si, along);
        ++placed;
    }
    return placed >= want;
}

bool generate_corridor(Environment& env, Rng& rng) {
    const int size = 84;
    env.rows = env.cols = size;
    env.occ.assign(static_cast<std::size_t>(size) * size, 1);
    env.junctions.clear();
    env.branch_goals.clear();
    env.loop_anchors.clear();

    const int lo = 8, hi = size - 9;
    const int vdir = rng.uniform_index(2) == 0 ? 1 : -1;
    const int r0 = vdir > 0 ? lo + static_cast<int>(rng.uniform_index(18))
                            : hi - static_cast<int>(rng.uniform_index(18));
    const int n_segments = 3 + static_cast<int>(rng.uniform_index(3));  // 3..5

    struct Vertex {
        int r, c;
    };
    std::vector<Vertex> verts;
    verts.push_back({r0, lo});
    int r = r0, c = lo;
    for (int s = 0; s < n_segments; ++s) {
        if (s % 2 == 0) {
            const int len = 16 + static_cast<int>(rng.uniform_index(13));  // 16..28
            const int nc = std::min(c + len, hi);
            if (nc - c < 12) break;
            c = nc;
        } else {
            const int len = 12 + static_cast<int>(rng.uniform_index(9));  // 12..20
            const int nr = std::clamp(r + vdir * len, lo, hi);
            if (std::abs(nr - r) < 10) break;
            r = nr;
        }
        verts.push_back({r, c});
    }
    if (verts.size() < 2) return false;

    const int halfwidth = 5;
    std::vector<BoxSpot> spots;
    for (std::size_t s = 0; s + 1 < verts.size(); ++s) {
        carve_band(env, verts[s].r, verts[s].c, verts[s + 1].r, verts[s + 1].c, halfwidth);
        const bool horizontal = verts[s].r == verts[s + 1].r;
        BoxSpot spot;
        spot.horizontal = horizontal;
        spot.center_line = horizontal ? verts[s].r : verts[s].c;
        const int a0 = horizontal ? std::min(verts[s].c, verts[s + 1].c)
                                  : std::min(verts[s].r, verts[s + 1].r);
        const int a1 = horizontal ? std::max(verts[s].c, verts[s + 1].c)
                                  : std::max(verts[s].r, verts[s + 1].r);
        spot.along_lo = a0 + 9;
        spot.along_hi = a1 - 9;
        if (spot.along_hi > spot.along_lo) spots.push_back(spot);
    }

    env.start_pose = cell_center(env, verts[0].r, verts[0].c, 0.0);
    const Vertex& ve = verts.back();
    const Vertex& vp = verts[verts.size() - 2];
    const double goal_heading =
        ve.r == vp.r ? 0.0 : (ve.r > vp.r ? kPi / 2.0 : -kPi / 2.0);
    env.goal_pose = cell_center(env, ve.r, ve.c, goal_heading);

    GridCell start_cell{verts[0].r, verts[0].c};
    GridCell goal_cell{ve.r, ve.c};
    std::vector<GridCell> must_reach{goal_cell};

    if (env.difficulty == Difficulty::hard) {
        // T-junction branch off a long horizontal segment.
        int seg = -1;
        for (std::size_t s = 0; s + 1 < verts.size(); ++s) {
            if (verts[s].r == verts[s + 1].r &&
                std::abs(verts[s + 1].c - verts[s].c) >= 18) {
                seg = static_cast<int>(s);
                if (s > 0) break;  // prefer an interior segment
            }
        }
        if (seg < 0) return false;
        const int jr = verts[seg].r;
        const int c0 = std::min(verts[seg].c, verts[seg + 1].c);
        const int c1 = std::max(verts[seg].c, verts[seg + 1].c);
        const int jc = (c0 + c1) / 2;
        if (jc - c0 < 8 || c1 - jc < 8) return false;
        const int bdir = -vdir;  // branch away from the staircase side
        const int blen = 14 + static_cast<int>(rng.uniform_index(9));  // 14..22
        const int br = std::clamp(jr + bdir * blen, lo, hi);
        if (std::abs(br - jr) < 12) return false;
        carve_band(env, jr, jc, br, jc, halfwidth);

        Junction j;
        j.cell = {jr, jc};
        j.approach = cell_center(env, jr, jc - 7, 0.0);
        j.continuations[0] = cell_center(env, jr, jc + 12, 0.0);
        j.continuations[1] =
            cell_center(env, jr + bdir * 12, jc, bdir > 0 ? kPi / 2.0 : -kPi / 2.0);
        env.junctions.push_back(j);
        env.branch_goals.push_back(
            cell_center(env, br, jc, bdir > 0 ? kPi / 2.0 : -kPi / 2.0));
        must_reach.push_back({br, jc});
        must_reach.push_back({jr, jc + 12});
        must_reach.push_back({jr + bdir * 12, jc});

        // Keep boxes away from the junction.
        for (BoxSpot& spot : spots) {
            if (spot.horizontal && spot.center_line == jr) {
                if (spot.along_lo < jc + 16 && spot.along_hi > jc - 16) {
                    const int left_hi = jc - 16;
                    const int right_lo = jc + 16;
                    BoxSpot right = spot;
                    spot.along_hi = std::min(spot.along_hi, left_hi);
                    right.along_lo = std::max(right.along_lo, right_lo);
                    if (right.along_hi - right.along_lo > 4) spots.push_back(right);
                }
            }
        }
    }

    {
        const std::vector<std::uint8_t> passable = inflate_grid(env, kPlanClearance);
        if (!bfs_reachable(env, passable, start_cell, must_reach)) return false;
    }
    if (env.difficulty == Difficulty::hard) {
        if (!place_boxes(env, rng, spots, 2 + static_cast<int>(rng.uniform_index(3)),
                         start_cell, must_reach)) {
            return false;
        }
    }

    // Final validation: the resampled expert paths must be executable and
    // long enough for the training horizons.
    try {
        const std::vector<Pose> main_path = plan_path(env, start_cell, goal_cell);
        if (main_path.size() < 28 || !path_executable(env, main_path)) return false;
        for (const Pose& bg : env.branch_goals) {
            const std::vector<Pose> bp = plan_path(env, start_cell, env.cell_of(bg.x, bg.y));
            if (bp.size() < 20 || !path_executable(env, bp)) return false;
        }
    } catch (const DataError&) {
        return false;
    }
    return true;
}

bool generate_loop(Environment& env, Rng& rng) {
    const int size = 64;
    env.rows = env.cols = size;
    env.occ.assign(static_cast<std::size_t>(size) * size, 1);
    env.junctions.clear();
    env.branch_goals.clear();
    env.loop_anchors.clear();

    const int halfwidth = 5;
    const int kLo = 10, kHi = size - 11;  // ring centerline rectangle
    carve_band(env, kLo, kLo, kLo, kHi, halfwidth);
    carve_band(env, kHi, kLo, kHi, kHi, halfwidth);
    carve_band(env, kLo, kLo, kHi, kLo, halfwidth);
    carve_band(env, kLo, kHi, kHi, kHi, halfwidth);

    const int mid = (kLo + kHi) / 2;
    const bool ccw = rng.uniform_index(2) == 0;
    env.start_pose = cell_center(env, kLo, mid, ccw ? 0.0 : kPi);
    env.goal_pose = env.start_pose;
    if (ccw) {
        env.loop_anchors = {{kLo, mid}, {mid, kHi}, {kHi, mid}, {mid, kLo}};
    } else {
        env.loop_anchors = {{kLo, mid}, {mid, kLo}, {kHi, mid}, {mid, kHi}};
    }

    GridCell start_cell{kLo, mid};
    std::vector<GridCell> must_reach(env.loop_anchors.begin() + 1, env.loop_anchors.end());

    std::vector<BoxSpot> spots;
    auto add_band_spot = [&](bool horizontal, int center, int a0, int a1) {
        BoxSpot s{horizontal, center, a0 + 9, a1 - 9};
        if (s.along_hi > s.along_lo) spots.push_back(s);
    };
    add_band_spot(true, kLo, kLo, kHi);
    add_band_spot(true, kHi, kLo, kHi);
    add_band_spot(false, kLo, kLo, kHi);
    add_band_spot(false, kHi, kLo, kHi);

    if (env.difficulty == Difficulty::hard) {
        // Chord through the inner island: creates a T-junction at each end.
        const int cc = kLo + 8 + static_cast<int>(rng.uniform_index(kHi - kLo - 15));
        carve_band(env, kLo, cc, kHi, cc, halfwidth);

        const double up = kPi / 2.0, down = -kPi / 2.0;
        Junction jb;  // junction on the start band
        jb.cell = {kLo, cc};
        jb.approach = cell_center(env, kLo, ccw ? cc - 7 : cc + 7, ccw ? 0.0 : kPi);
        jb.continuations[0] = cell_center(env, kLo, ccw ? cc + 12 : cc - 12, ccw ? 0.0 : kPi);
        jb.continuations[1] = cell_center(env, kLo + 12, cc, up);
        env.junctions.push_back(jb);

        Junction jt;  // junction on the far band
        jt.cell = {kHi, cc};
        jt.approach = cell_center(env, kHi, ccw ? cc + 7 : cc - 7, ccw ? kPi : 0.0);
        jt.continuations[0] = cell_center(env, kHi, ccw ? cc - 12 : cc + 12, ccw ? kPi : 0.0);
        jt.continuations[1] = cell_center(env, kHi - 12, cc, down);
        env.junctions.push_back(jt);

        env.branch_goals.push_back(cell_center(env, mid, cc, up));
        must_reach.push_back({mid, cc});

        // Keep boxes off the junction bands near the chord.
        for (BoxSpot& spot : spots) {
            if (spot.horizontal && spot.along_lo < cc + 16 && spot.along_hi > cc - 16) {
                BoxSpot right = spot;
                spot.along_hi = std::min(spot.along_hi, cc - 16);
                right.along_lo = std::max(right.along_lo, cc + 16);
                if (right.along_hi - right.along_lo > 4) spots.push_back(right);
            }
        }
        if (!place_boxes(env, rng, spots, 2 + static_cast<int>(rng.uniform_index(3)),
                         start_cell, must_reach)) {
            return false;
        }
    }

    {
        const std::vector<std::uint8_t> passable = inflate_grid(env, kPlanClearance);
        if (!bfs_reachable(env, passable, start_cell, must_reach)) return false;
    }
    try {
        const std::vector<Pose> lap = expert_path(env);
        if (lap.size() < 40 || !path_executable(env, lap)) return false;
    } catch (const DataError&) {
        return false;
    }
    return true;
}

}  // namespace

Environment generate_environment(std::uint64_t seed, Difficulty difficulty, MapLayout layout) {
    Environment env;
    env.cell_size = kCellSize;
    env.difficulty = difficulty;
    env.layout = layout;
    env.seed = seed;
    for (int attempt = 0; attempt < kGenRetryLimit; ++attempt) {
        Rng rng(derive_seed(seed, "worldgen", static_cast<std::uint64_t>(attempt)));
        const bool ok = layout == MapLayout::corridor ? generate_corridor(env, rng)
                                                      : generate_loop(env, rng);
        if (ok) return env;
    }
    throw DataError("generate_environment: retry limit (100) exceeded for seed " +
                    std::to_string(seed));
}

std::vector<Pose> expert_path(const Environment& env) {
    if (env.layout == MapLayout::loop) {
        // One lap: chain A* legs through the anchors and close the cycle.
        std::vector<GridCell> stops = env.loop_anchors;
        stops.push_back(env.loop_anchors.front());
        std::vector<Point2> pts;
        for (std::size_t s = 0; s + 1 < stops.size(); ++s) {
            const std::vector<std::uint8_t> passable = inflate_grid(env, kPlanClearance);
            const std::vector<GridCell> cells = astar(env, passable, stops[s], stops[s + 1]);
            if (cells.empty()) throw DataError("expert_path: loop leg unreachable");
            std::vector<Point2> leg;
            leg.reserve(cells.size());
            for (const GridCell& c : cells) {
                leg.push_back({(c.col + 0.5) * env.cell_size, (c.row + 0.5) * env.cell_size});
            }
            const std::vector<Point2> smooth = shortcut_smooth(env, leg);
            const std::size_t skip = pts.empty() ? 0 : 1;
            pts.insert(pts.end(), smooth.begin() + skip, smooth.end());
        }
        return resample_polyline(pts, kWaypointSpacing);
    }
    return plan_path(env, env.cell_of(env.start_pose.x, env.start_pose.y),
                     env.cell_of(env.goal_pose.x, env.goal_pose.y));
}

std::vector<Pose> expert_path_to(const Environment& env, const Pose& target) {
    return plan_path(env, env.cell_of(env.start_pose.x, env.start_pose.y),
                     env.cell_of(target.x, target.y));
}

bool disc_collides(const Environment& env, double x, double y, double radius) {
    const int r0 = static_cast<int>(std::floor((y - radius) / env.cell_size));
    const int r1 = static_cast<int>(std::floor((y + radius) / env.cell_size));
    const int c0 = static_cast<int>(std::floor((x - radius) / env.cell_size));
    const int c1 = static_cast<int>(std::floor((x + radius) / env.cell_size));
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            if (!env.occupied(r, c)) continue;
            const double x0 = c * env.cell_size;
            const double y0 = r * env.cell_size;
            const double dx = std::max({x0 - x, 0.0, x - (x0 + env.cell_size)});
            const double dy = std::max({y0 - y, 0.0, y - (y0 + env.cell_size)});
            if (dx * dx + dy * dy <= radius * radius) return true;
        }
    }
    return false;
}

double cast_ray(const Environment& env, double x, double y, double angle, double max_range) {
    const double dx = std::cos(angle);
    const double dy = std::sin(angle);
    int c = static_cast<int>(std::floor(x / env.cell_size));
    int r = static_cast<int>(std::floor(y / env.cell_size));
    if (env.occupied(r, c)) return 0.0;

    const int step_c = dx > 0.0 ? 1 : -1;
    const int step_r = dy > 0.0 ? 1 : -1;
    const double inv_dx = std::abs(dx) > 1e-15 ? 1.0 / dx : 0.0;
    const double inv_dy = std::abs(dy) > 1e-15 ? 1.0 / dy : 0.0;
    double t_max_x = std::abs(dx) > 1e-15
                         ? ((step_c > 0 ? (c + 1) * env.cell_size : c * env.cell_size) - x) * inv_dx
                         : std::numeric_limits<double>::infinity();
    double t_max_y = std::abs(dy) > 1e-15
                         ? ((step_r > 0 ? (r + 1) * env.cell_size : r * env.cell_size) - y) * inv_dy
                         : std::numeric_limits<double>::infinity();
    const double t_delta_x =
        std::abs(dx) > 1e-15 ? env.cell_size / std::abs(dx) : std::numeric_limits<double>::infinity();
    const double t_delta_y =
        std::abs(dy) > 1e-15 ? env.cell_size / std::abs(dy) : std::numeric_limits<double>::infinity();

    double t = 0.0;
    while (t <= max_range) {
        if (t_max_x < t_max_y) {
            t = t_max_x;
            t_max_x += t_delta_x;
            c += step_c;
        } else {
            t = t_max_y;
            t_max_y += t_delta_y;
            r += step_r;
        }
        if (env.occupied(r, c)) return std::min(t, max_range);
    }
    return max_range;
}

std::vector<double> observe(const Environment& env, const Pose& pose, int ray_count) {
    if (ray_count < 2) throw ContractError("observe: need at least 2 rays");
    const GridCell cell = env.cell_of(pose.x, pose.y);
    if (env.occupied(cell.row, cell.col)) {
        throw ContractError("observe: pose is inside an occupied cell");
    }
    std::vector<double> features;
    features.reserve(ray_count + 2);
    for (int i = 0; i < ray_count; ++i) {
        const double offset = -kPi / 2.0 + kPi * static_cast<double>(i) / (ray_count - 1);
        const double range = cast_ray(env, pose.x, pose.y, pose.heading + offset, kMaxRayRange);
        features.push_back(range / kMaxRayRange);
    }
    features.push_back(std::sin(pose.heading));
    features.push_back(std::cos(pose.heading));
    return features;
}

DepthPrior depth_features(const Environment& env, const Pose& pose) {
    const GridCell cell = env.cell_of(pose.x, pose.y);
    if (env.occupied(cell.row, cell.col)) {
        throw ContractError("depth_features: pose is inside an occupied cell");
    }
    std::array<double, kDepthRayCount> inv_depth{};
    for (int i = 0; i < kDepthRayCount; ++i) {
        const double offset = -kPi / 2.0 + kPi * static_cast<double>(i) / (kDepthRayCount - 1);
        const double range = cast_ray(env, pose.x, pose.y, pose.heading + offset, kMaxRayRange);
        inv_depth[i] = 1.0 / (1.0 + range);
    }
    DepthPrior out;
    constexpr int block = kDepthRayCount / core::kDepthDim;
    for (int j = 0; j < core::kDepthDim; ++j) {
        double acc = 0.0;
        for (int b = 0; b < block; ++b) acc += inv_depth[j * block + b];
        out.pooled[j] = acc / block;
    }
    return out;
}

std::vector<Pose> actions_to_world(const Pose& pose, const core::ActionSequence& actions) {
    const double ch = std::cos(pose.heading);
    const double sh = std::sin(pose.heading);
    std::vector<Pose> out;
    out.reserve(core::kActionHorizon);
    double px = pose.x, py = pose.y, ph = pose.heading;
    for (int i = 0; i < core::kActionHorizon; ++i) {
        const core::Waypoint& w = actions.waypoints[i];
        const double wx = pose.x + ch * w.x - sh * w.y;
        const double wy = pose.y + sh * w.x + ch * w.y;
        const double heading = std::hypot(wx - px, wy - py) > 1e-9
                                   ? std::atan2(wy - py, wx - px)
                                   : ph;
        out.push_back({wx, wy, normalize_angle(heading)});
        px = wx;
        py = wy;
        ph = heading;
    }
    return out;
}

int count_collision_entries(const Environment& env, const std::vector<Pose>& chain,
                            double resolution, double radius) {
    if (chain.size() < 2) return 0;
    bool in_collision = disc_collides(env, chain.front().x, chain.front().y, radius);
    int entries = 0;
    for (std::size_t s = 0; s + 1 < chain.size(); ++s) {
        const double dx = chain[s + 1].x - chain[s].x;
        const double dy = chain[s + 1].y - chain[s].y;
        const double len = std::hypot(dx, dy);
        const int n = std::max(1, static_cast<int>(std::ceil(len / resolution)));
        for (int i = 1; i <= n; ++i) {
            const double u = static_cast<double>(i) / n;
            const bool c = disc_collides(env, chain[s].x + u * dx, chain[s].y + u * dy, radius);
            if (c && !in_collision) ++entries;
            in_collision = c;
        }
    }
    return entries;
}

int check_collision(const Environment& env, const Pose& pose,
                    const core::ActionSequence& actions) {
    if (actions.normalized) {
        throw ContractError("check_collision: actions must be unnormalized");
    }
    std::vector<Pose> chain;
    chain.reserve(core::kActionHorizon + 1);
    chain.push_back(pose);
    const std::vector<Pose> world = actions_to_world(pose, actions);
    chain.insert(chain.end(), world.begin(), world.end());
    return count_collision_entries(env, chain, kCollisionMarchStep, kRobotRadius);
}

DatasetBuild build_dataset(const DatasetConfig& config, std::uint64_t master_seed) {
    if (config.n_envs < 1) throw ContractError("build_dataset: n_envs must be >= 1");
    DatasetBuild out;
    std::vector<core::ActionSequence> raw_actions;

    for (int e = 0; e < config.n_envs; ++e) {
        const std::uint64_t env_seed = derive_seed(master_seed, "env", static_cast<std::uint64_t>(e));
        const Difficulty difficulty =
            config.mix_difficulties ? (e % 2 == 0 ? Difficulty::hard : Difficulty::easy)
                                    : config.difficulty_mix;
        const Environment env = generate_environment(env_seed, difficulty);

        std::vector<std::vector<Pose>> paths;
        paths.push_back(expert_path(env));
        for (const Pose& bg : env.branch_goals) {
            paths.push_back(expert_path_to(env, bg));
        }

        // Eligible start indices must leave room for the action horizon and
        // the closest admissible goal.
        std::vector<int> eligible;
        int total_eligible = 0;
        for (const std::vector<Pose>& p : paths) {
            const int len = static_cast<int>(p.size());
            const int hi = len - 1 - std::max(core::kActionHorizon, config.goal_min_ahead);
            const int n = std::max(0, hi - core::kObsHorizon + 1);
            eligible.push_back(n);
            total_eligible += n;
        }

        Rng rng(derive_seed(master_seed, "records", static_cast<std::uint64_t>(e)));
        for (int k = 0; k < config.records_per_env; ++k) {
            if (total_eligible == 0) {
                ++out.skipped;
                continue;
            }
            int pick = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(total_eligible)));
            int path_id = 0;
            while (pick >= eligible[path_id]) {
                pick -= eligible[path_id];
                ++path_id;
            }
            const std::vector<Pose>& path = paths[path_id];
            const int i = core::kObsHorizon + pick;
            const int len = static_cast<int>(path.size());
            const int max_goal = std::min(config.goal_max_ahead, len - 1 - i);
            const int j =
                i + config.goal_min_ahead +
                static_cast<int>(rng.uniform_index(
                    static_cast<std::uint64_t>(max_goal - config.goal_min_ahead + 1)));

            TrainingRecord rec;
            for (int s = 0; s < core::kContextSteps; ++s) {
                rec.context.step_features[s] =
                    observe(env, path[i - core::kObsHorizon + s], config.ray_count);
            }
            rec.context.goal_features = observe(env, path[j], config.ray_count);
            if (config.with_depth) {
                rec.context.depth_features = depth_features(env, path[i]).pooled;
            }
            rec.goal_present = true;
            rec.temporal_distance_label = static_cast<double>(j - i);
            rec.provenance = {env_seed, path_id, i, j, path[i]};

            // Relative waypoints in the frame of path[i].
            const Pose& base = path[i];
            const double ch = std::cos(base.heading);
            const double sh = std::sin(base.heading);
            core::ActionSequence actions;
            for (int a = 0; a < core::kActionHorizon; ++a) {
                const Pose& p = path[i + 1 + a];
                const double dx = p.x - base.x;
                const double dy = p.y - base.y;
                actions.waypoints[a] = {ch * dx + sh * dy, -sh * dx + ch * dy};
            }
            actions.normalized = false;
            rec.expert_actions = actions;  // normalized below
            raw_actions.push_back(actions);
            out.records.push_back(std::move(rec));
        }
    }

    if (out.records.empty()) {
        throw DataError("build_dataset: no records produced");
    }
    out.stats = core::compute_norm_stats(raw_actions);
    for (std::size_t k = 0; k < out.records.size(); ++k) {
        out.records[k].expert_actions = core::normalize_actions(raw_actions[k], out.stats);
    }
    return out;
}

}  // namespace fmnav::world
