#include "fmnav/svg.hpp"

#include <cstdio>
#include <sstream>

#include "fmnav/errors.hpp"

namespace fmnav::svg {

namespace {

constexpr double kScale = 80.0;  // pixels per meter

std::string px(double meters) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", meters * kScale);
    return buf;
}

void append_polyline(std::ostringstream& out, const std::vector<std::array<double, 2>>& pts,
                     double height_m, const char* css_class) {
    if (pts.size() < 2) return;
    out << "<polyline class=\"" << css_class << "\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i) out << ' ';
        // y axis flipped so larger y renders upward
        out << px(pts[i][0]) << ',' << px(height_m - pts[i][1]);
    }
    out << "\"/>\n";
}

}  // namespace

Scene scene_from_environment(const world::Environment& env) {
    Scene s;
    s.rows = env.rows;
    s.cols = env.cols;
    s.cell_size = env.cell_size;
    s.grid.reserve(env.rows);
    for (int r = 0; r < env.rows; ++r) {
        std::string row(env.cols, '.');
        for (int c = 0; c < env.cols; ++c) {
            if (env.occupied(r, c)) row[c] = '#';
        }
        s.grid.push_back(std::move(row));
    }
    s.goal = {{env.goal_pose.x, env.goal_pose.y}};
    return s;
}

std::string render_svg(const Scene& scene) {
    if (scene.rows <= 0 || scene.cols <= 0 ||
        scene.grid.size() != static_cast<std::size_t>(scene.rows)) {
        throw DataError("render_svg: malformed grid");
    }
    for (const std::string& row : scene.grid) {
        if (row.size() != static_cast<std::size_t>(scene.cols)) {
            throw DataError("render_svg: ragged grid row");
        }
    }
    const double width_m = scene.cols * scene.cell_size;
    const double height_m = scene.rows * scene.cell_size;

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(width_m) << "\" height=\""
        << px(height_m) << "\" viewBox=\"0 0 " << px(width_m) << ' ' << px(height_m) << "\">\n";
    out << "<style>.wall{fill:#334155;}.sampled{fill:none;stroke:#2563eb;stroke-width:2;"
           "stroke-opacity:0.55;}.executed{fill:none;stroke:#eab308;stroke-width:3;}"
           ".goal{fill:#16a34a;}</style>\n";
    out << "<rect width=\"" << px(width_m) << "\" height=\"" << px(height_m)
        << "\" fill=\"#f8fafc\"/>\n";

    // Merge horizontal runs of occupied cells into single rects.
    for (int r = 0; r < scene.rows; ++r) {
        const std::string& row = scene.grid[r];
        int c = 0;
        while (c < scene.cols) {
            if (row[c] != '#') {
                ++c;
                continue;
            }
            int c2 = c;
            while (c2 < scene.cols && row[c2] == '#') ++c2;
            const double x = c * scene.cell_size;
            const double y_top = height_m - (r + 1) * scene.cell_size;
            out << "<rect class=\"wall\" x=\"" << px(x) << "\" y=\"" << px(y_top) << "\" width=\""
                << px((c2 - c) * scene.cell_size) << "\" height=\"" << px(scene.cell_size)
                << "\"/>\n";
            c = c2;
        }
    }

    for (const auto& traj : scene.sampled) {
        append_polyline(out, traj, height_m, "sampled");
    }
    append_polyline(out, scene.executed, height_m, "executed");

    if (scene.goal) {
        out << "<circle class=\"goal\" cx=\"" << px((*scene.goal)[0]) << "\" cy=\""
            << px(height_m - (*scene.goal)[1]) << "\" r=\"" << px(0.12) << "\"/>\n";
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace fmnav::svg
