#pragma once

#include <string>
#include <vector>

#include "fmnav/core.hpp"
#include "fmnav/world.hpp"

namespace fmnav::dataset_io {

inline constexpr int kSchemaVersion = 1;

struct DatasetFile {
    std::vector<world::TrainingRecord> records;
    core::NormStats stats;
    int skipped = 0;
    bool with_depth = false;
    int ray_count = world::kDefaultRayCount;
};

// Writes one record per line plus a "<path>.header.json" sidecar carrying
// NormStats and the generation config. Files are written atomically and
// byte-stable for identical inputs.
void write_dataset(const std::string& path, const world::DatasetBuild& build,
                   const world::DatasetConfig& config, std::uint64_t master_seed);

DatasetFile read_dataset(const std::string& path);

// Atomic text write used for every artifact (temp file + rename).
void write_file_atomic(const std::string& path, const std::string& contents);

// %.17g, enough digits to round-trip doubles exactly.
std::string format_double(double v);

}  // namespace fmnav::dataset_io
