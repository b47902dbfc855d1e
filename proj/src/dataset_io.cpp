#include "fmnav/dataset_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fmnav/errors.hpp"

namespace fmnav::dataset_io {

using nlohmann::json;

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open for writing: " + tmp);
        out << contents;
        if (!out) throw DataError("write failure: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw DataError("rename failure: " + tmp + " -> " + path);
    }
}

void write_dataset(const std::string& path, const world::DatasetBuild& build,
                   const world::DatasetConfig& config, std::uint64_t master_seed) {
    std::ostringstream out;
    for (const world::TrainingRecord& rec : build.records) {
        out << kSchemaVersion << ' ' << rec.provenance.env_seed << ' ' << rec.provenance.path_id
            << ' ' << rec.provenance.index << ' ' << rec.provenance.goal_index << ' '
            << format_double(rec.provenance.pose.x) << ' ' << format_double(rec.provenance.pose.y)
            << ' ' << format_double(rec.provenance.pose.heading) << ' '
            << (rec.goal_present ? 1 : 0) << ' ' << rec.context.step_features[0].size();
        for (const auto& step : rec.context.step_features) {
            for (double v : step) out << ' ' << format_double(v);
        }
        if (!rec.context.goal_features) {
            throw DataError("write_dataset: record missing goal features");
        }
        for (double v : *rec.context.goal_features) out << ' ' << format_double(v);
        out << ' ' << (rec.context.depth_features ? 1 : 0);
        if (rec.context.depth_features) {
            for (double v : *rec.context.depth_features) out << ' ' << format_double(v);
        }
        for (const core::Waypoint& w : rec.expert_actions.waypoints) {
            out << ' ' << format_double(w.x) << ' ' << format_double(w.y);
        }
        out << ' ' << format_double(rec.temporal_distance_label) << '\n';
    }
    write_file_atomic(path, out.str());

    json header;
    header["schema_version"] = kSchemaVersion;
    header["count"] = build.records.size();
    header["skipped"] = build.skipped;
    header["master_seed"] = master_seed;
    header["norm_stats"] = {{"mean", build.stats.mean}, {"scale", build.stats.scale}};
    header["generation"] = {{"n_envs", config.n_envs},
                            {"records_per_env", config.records_per_env},
                            {"with_depth", config.with_depth},
                            {"ray_count", config.ray_count},
                            {"goal_min_ahead", config.goal_min_ahead},
                            {"goal_max_ahead", config.goal_max_ahead},
                            {"mix_difficulties", config.mix_difficulties},
                            {"cell_size", world::kCellSize},
                            {"waypoint_spacing", world::kWaypointSpacing},
                            {"max_ray_range", world::kMaxRayRange}};
    write_file_atomic(path + ".header.json", header.dump(2) + "\n");
}

namespace {

double parse_double(std::istringstream& in, const char* what, std::size_t line_no) {
    std::string tok;
    if (!(in >> tok)) {
        throw DataError("dataset: truncated line " + std::to_string(line_no) + " reading " + what);
    }
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') {
        throw DataError("dataset: bad number '" + tok + "' at line " + std::to_string(line_no));
    }
    return v;
}

long parse_long(std::istringstream& in, const char* what, std::size_t line_no) {
    const double v = parse_double(in, what, line_no);
    return static_cast<long>(v);
}

std::uint64_t parse_u64(std::istringstream& in, const char* what, std::size_t line_no) {
    std::string tok;
    if (!(in >> tok)) {
        throw DataError("dataset: truncated line " + std::to_string(line_no) + " reading " + what);
    }
    char* end = nullptr;
    const std::uint64_t v = std::strtoull(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0') {
        throw DataError("dataset: bad integer '" + tok + "' at line " + std::to_string(line_no));
    }
    return v;
}

}  // namespace

DatasetFile read_dataset(const std::string& path) {
    std::ifstream header_in(path + ".header.json");
    if (!header_in) throw DataError("dataset: missing header sidecar for " + path);
    json header;
    try {
        header_in >> header;
    } catch (const json::exception& e) {
        throw DataError(std::string("dataset: bad header json: ") + e.what());
    }
    if (header.at("schema_version").get<int>() != kSchemaVersion) {
        throw DataError("dataset: unsupported schema version");
    }

    DatasetFile out;
    out.stats.mean = header.at("norm_stats").at("mean").get<std::array<double, 2>>();
    out.stats.scale = header.at("norm_stats").at("scale").get<std::array<double, 2>>();
    out.skipped = header.at("skipped").get<int>();
    out.with_depth = header.at("generation").at("with_depth").get<bool>();
    out.ray_count = header.at("generation").at("ray_count").get<int>();

    std::ifstream in(path);
    if (!in) throw DataError("dataset: cannot open " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        const long version = parse_long(ss, "version", line_no);
        if (version != kSchemaVersion) {
            throw DataError("dataset: record schema mismatch at line " + std::to_string(line_no));
        }
        world::TrainingRecord rec;
        rec.provenance.env_seed = parse_u64(ss, "env_seed", line_no);
        rec.provenance.path_id = static_cast<int>(parse_long(ss, "path_id", line_no));
        rec.provenance.index = static_cast<int>(parse_long(ss, "index", line_no));
        rec.provenance.goal_index = static_cast<int>(parse_long(ss, "goal_index", line_no));
        rec.provenance.pose.x = parse_double(ss, "pose.x", line_no);
        rec.provenance.pose.y = parse_double(ss, "pose.y", line_no);
        rec.provenance.pose.heading = parse_double(ss, "pose.heading", line_no);
        rec.goal_present = parse_long(ss, "goal_present", line_no) != 0;
        const int obs_dim = static_cast<int>(parse_long(ss, "obs_dim", line_no));
        for (int s = 0; s < core::kContextSteps; ++s) {
            rec.context.step_features[s].resize(obs_dim);
            for (int i = 0; i < obs_dim; ++i) {
                rec.context.step_features[s][i] = parse_double(ss, "step_feature", line_no);
            }
        }
        std::vector<double> goal(obs_dim);
        for (int i = 0; i < obs_dim; ++i) goal[i] = parse_double(ss, "goal_feature", line_no);
        rec.context.goal_features = std::move(goal);
        const bool has_depth = parse_long(ss, "has_depth", line_no) != 0;
        if (has_depth) {
            std::array<double, core::kDepthDim> depth{};
            for (double& v : depth) v = parse_double(ss, "depth", line_no);
            rec.context.depth_features = depth;
        }
        for (core::Waypoint& w : rec.expert_actions.waypoints) {
            w.x = parse_double(ss, "action.x", line_no);
            w.y = parse_double(ss, "action.y", line_no);
        }
        rec.expert_actions.normalized = true;
        rec.temporal_distance_label = parse_double(ss, "temporal_distance", line_no);
        out.records.push_back(std::move(rec));
    }
    if (header.at("count").get<std::size_t>() != out.records.size()) {
        throw DataError("dataset: header count does not match record lines");
    }
    return out;
}

}  // namespace fmnav::dataset_io
