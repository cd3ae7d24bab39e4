#pragma once

// Run configuration files: strict JSON ingestion with defaults, the resolved
// echo, and ablation grid expansion.

#include "care/graphio.hpp"
#include "care/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace care::cfg {

struct RunConfig {
  std::string dataset;       ///< directory holding the TUDataset files
  std::string dataset_name;  ///< file prefix; defaults to the directory name
  std::optional<graph::FeaturePolicy> feature_policy;  ///< empty = automatic
  std::string output_dir = "results";
  bool stratified_folds = false;
  std::vector<int> folds;    ///< empty = all ten
  train::ModelConfig model;
};

/// Keys accepted in a run configuration file.
const std::vector<std::string>& known_keys();

/// Unknown keys and ill-typed values raise ConfigError naming the key.
/// Missing keys take their defaults; "architecture": "auto" (the default)
/// selects hierarchical for gin and global otherwise.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Every field with its concrete value; parsing it reproduces the config.
nlohmann::json to_json(const RunConfig& config);

/// Keys that may appear in an ablation grid.
const std::vector<std::string>& grid_keys();

struct GridCell {
  std::string label;       ///< "key=value,key=value"
  nlohmann::json overrides;
  RunConfig config;
};

/// Cross product of the grid's value lists (keys in sorted order) applied on
/// top of `base`. ConfigError for an empty grid, an empty list or an unknown
/// key.
std::vector<GridCell> expand_grid(const nlohmann::json& base, const nlohmann::json& grid);

}  // namespace care::cfg
