#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "advface/evalharness.hpp"

namespace advface {

// Malformed or unreadable configuration (unknown keys, wrong types, bad JSON).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StackConfig {
  int size = 112;
  std::uint64_t seed = 1;
  Metric metric = Metric::L2;
  int calibration_identities = 40;
};

struct PairsConfig {
  int count = 20;
  std::uint64_t seed = 2;
};

// Everything a command needs besides paths. Every section and key is
// optional; omitted values keep their defaults.
struct RunConfig {
  StackConfig stack;
  PairsConfig pairs;
  GridSettings grid;          // grid.base doubles as the single-attack config
  CaptureGridSpec capture;
  EvalSettings evaluation;
  SweepSettings sweep;        // base/master_seed/workers taken from grid
};

RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string to_json(const RunConfig& cfg);

// Single sections, in the same key schema as the "attack" and
// "capture.base" objects of a run config.
AttackConfig attack_config_from_json(const std::string& text);
CaptureParams capture_params_from_json(const std::string& text);

// Validates the nested attack, capture and sweep settings.
void validate(const RunConfig& cfg);

}  // namespace advface
