#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "sdlab/cusim.h"
#include "sdlab/engine.h"

namespace sdlab {

// Profile given either by name (resolved against a profile directory) or inline.
struct ProfileRef {
  std::optional<std::string> name;
  std::optional<Profile> inline_profile;

  Profile resolve(const std::string& profile_dir) const;
};

struct SimulateSpec {
  ProfileRef profile;
  SimMethod method = SimMethod::kStreamingOverlap;
  double bandwidth_gbits = 1.0;
  std::optional<long> tau;
};

struct SweepSpec {
  ProfileRef profile;
  std::vector<SimMethod> methods = all_sim_methods();
  std::vector<double> bandwidths_gbits = default_bandwidth_grid_gbits();
  std::vector<double> cu_targets = default_cu_targets();
  std::optional<long> tau;
};

struct MemorySpec {
  double num_params = 0.0;
  std::size_t layers = 0;
  std::size_t fragment_size = 3;
};

// Top-level document: {"train": ..., "simulate": ..., "sweep": ..., "memory": ...}.
// Every section is optional; unknown keys anywhere are rejected.
struct RunConfig {
  std::optional<TrainConfig> train;
  std::optional<SimulateSpec> simulate;
  std::optional<SweepSpec> sweep;
  std::optional<MemorySpec> memory;
};

// Throws ConfigError naming the dotted path of the first bad field.
RunConfig parse_run_config(const std::string& json_text, const std::string& origin);
RunConfig load_run_config(const std::string& path);

// Normalized echo of a training config; parses back to an equal config.
nlohmann::json train_config_to_json(const TrainConfig& c);

}  // namespace sdlab
