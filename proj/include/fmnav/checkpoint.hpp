#pragma once

#include <string>

#include "fmnav/policy.hpp"

namespace fmnav::checkpoint {

inline constexpr int kSchemaVersion = 1;

// Single-file checkpoint: versioned header, policy config, norm stats,
// every parameter vector with its layout descriptor, and an echo of the
// training settings. Bytes are stable for identical policies.
void write_checkpoint(const std::string& path, const policy::Policy& pol,
                      const policy::TrainSettings& train_echo);

struct LoadedCheckpoint {
    policy::Policy policy;
    policy::TrainSettings train_echo;
};

LoadedCheckpoint read_checkpoint(const std::string& path);

}  // namespace fmnav::checkpoint
