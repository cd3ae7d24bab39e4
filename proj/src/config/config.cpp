#include "care/config.hpp"

#include "care/error.hpp"

#include <algorithm>
#include <fstream>

namespace care::cfg {

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "dataset",  "dataset_name",    "feature_policy", "output_dir",  "stratified_folds", "folds",
      "backbone", "architecture",    "depth",          "hidden",      "selector",         "pooling_ratio",
      "lambda1",  "lambda2",         "design",         "class_loss_mode", "l2_norm",      "lr",
      "batch_size", "max_epochs",    "patience",       "seed",        "care",             "refiner",
      "bag_capacity"};
  return keys;
}

const std::vector<std::string>& grid_keys() {
  static const std::vector<std::string> keys = {"lambda1", "lambda2", "design",        "selector",
                                                "class_loss_mode", "depth", "pooling_ratio", "care",
                                                "backbone", "refiner"};
  return keys;
}

namespace {

template <typename T>
T get(const nlohmann::json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type (" + j.at(key).dump() + ")");
  }
}

template <typename T>
void read(const nlohmann::json& j, const std::string& key, T& out) {
  if (j.contains(key)) out = get<T>(j, key);
}

void read_int(const nlohmann::json& j, const std::string& key, int& out) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_number_integer()) throw ConfigError("config key '" + key + "' must be an integer");
  out = get<int>(j, key);
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run configuration must be a JSON object");
  const auto& keys = known_keys();
  for (const auto& [key, value] : j.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  RunConfig c;
  train::ModelConfig& m = c.model;
  read(j, "dataset", c.dataset);
  read(j, "dataset_name", c.dataset_name);
  if (c.dataset_name.empty() && !c.dataset.empty()) {
    c.dataset_name = std::filesystem::path(c.dataset).lexically_normal().filename().string();
    if (c.dataset_name.empty()) {
      c.dataset_name = std::filesystem::path(c.dataset).lexically_normal().parent_path().filename().string();
    }
  }
  if (j.contains("feature_policy")) {
    const auto p = get<std::string>(j, "feature_policy");
    if (p != "auto") c.feature_policy = graph::parse_feature_policy(p);
  }
  read(j, "output_dir", c.output_dir);
  read(j, "stratified_folds", c.stratified_folds);
  if (j.contains("folds")) c.folds = get<std::vector<int>>(j, "folds");

  if (j.contains("backbone")) m.backbone = enc::parse_layer_kind(get<std::string>(j, "backbone"));
  std::string arch = "auto";
  read(j, "architecture", arch);
  if (arch == "auto") {
    m.architecture = m.backbone == enc::LayerKind::Gin ? train::Architecture::Hierarchical
                                                       : train::Architecture::Global;
  } else {
    m.architecture = train::parse_architecture(arch);
  }
  read_int(j, "depth", m.depth);
  if (j.contains("hidden")) {
    int hidden = 0;
    read_int(j, "hidden", hidden);
    m.hidden = hidden;
  }
  if (j.contains("selector")) m.selector.kind = sel::parse_selector_kind(get<std::string>(j, "selector"));
  read(j, "pooling_ratio", m.selector.pooling_ratio);
  read(j, "lambda1", m.loss.lambda1);
  read(j, "lambda2", m.loss.lambda2);
  if (j.contains("design")) m.loss.design = loss::parse_design(get<std::string>(j, "design"));
  if (j.contains("class_loss_mode")) {
    m.loss.mode = loss::parse_class_loss_mode(get<std::string>(j, "class_loss_mode"));
  }
  if (j.contains("l2_norm")) m.loss.l2_norm = loss::parse_l2_norm(get<std::string>(j, "l2_norm"));
  read(j, "lr", m.lr);
  read_int(j, "batch_size", m.batch_size);
  read_int(j, "max_epochs", m.max_epochs);
  read_int(j, "patience", m.patience);
  if (j.contains("seed")) {
    const auto& seed = j.at("seed");
    if (!seed.is_number_integer() || (!seed.is_number_unsigned() && seed.get<std::int64_t>() < 0)) {
      throw ConfigError("config key 'seed' must be a non-negative integer");
    }
    m.seed = get<std::uint64_t>(j, "seed");
  }
  read(j, "care", m.care_enabled);
  if (j.contains("refiner")) m.refiner = train::parse_refiner_mode(get<std::string>(j, "refiner"));
  if (j.contains("bag_capacity")) {
    int cap = 0;
    read_int(j, "bag_capacity", cap);
    if (cap < 1) throw ConfigError("bag_capacity must be >= 1");
    m.bag_capacity = static_cast<std::size_t>(cap);
  }
  for (int f : c.folds) {
    if (f < 0 || f >= graph::kFoldCount) throw ConfigError("fold index " + std::to_string(f) + " outside [0, 10)");
  }
  m.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

nlohmann::json to_json(const RunConfig& c) {
  const train::ModelConfig& m = c.model;
  return {{"dataset", c.dataset},
          {"dataset_name", c.dataset_name},
          {"feature_policy", c.feature_policy ? graph::to_string(*c.feature_policy) : "auto"},
          {"output_dir", c.output_dir},
          {"stratified_folds", c.stratified_folds},
          {"folds", c.folds},
          {"backbone", enc::to_string(m.backbone)},
          {"architecture", train::to_string(m.architecture)},
          {"depth", m.depth},
          {"hidden", m.hidden},
          {"selector", sel::to_string(m.selector.kind)},
          {"pooling_ratio", m.selector.pooling_ratio},
          {"lambda1", m.loss.lambda1},
          {"lambda2", m.loss.lambda2},
          {"design", loss::to_string(m.loss.design)},
          {"class_loss_mode", loss::to_string(m.loss.mode)},
          {"l2_norm", loss::to_string(m.loss.l2_norm)},
          {"lr", m.lr},
          {"batch_size", m.batch_size},
          {"max_epochs", m.max_epochs},
          {"patience", m.patience},
          {"seed", m.seed},
          {"care", m.care_enabled},
          {"refiner", train::to_string(m.refiner)},
          {"bag_capacity", m.bag_capacity}};
}

std::vector<GridCell> expand_grid(const nlohmann::json& base, const nlohmann::json& grid) {
  if (!grid.is_object() || grid.empty()) throw ConfigError("ablation grid is empty");
  const auto& allowed = grid_keys();
  std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes;
  for (const auto& [key, values] : grid.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("grid key '" + key + "' is not an ablation axis");
    }
    if (!values.is_array() || values.empty()) throw ConfigError("grid key '" + key + "' needs a non-empty list");
    axes.emplace_back(key, values.get<std::vector<nlohmann::json>>());
  }
  std::vector<GridCell> cells;
  std::vector<std::size_t> pos(axes.size(), 0);
  while (true) {
    GridCell cell;
    nlohmann::json merged = base;
    cell.overrides = nlohmann::json::object();
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const auto& value = axes[a].second[pos[a]];
      merged[axes[a].first] = value;
      cell.overrides[axes[a].first] = value;
      if (!cell.label.empty()) cell.label += ',';
      cell.label += axes[a].first + "=" + (value.is_string() ? value.get<std::string>() : value.dump());
    }
    cell.config = parse_run_config(merged);
    cells.push_back(std::move(cell));
    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++pos[a] < axes[a].second.size()) break;
      pos[a] = 0;
      if (a == 0) return cells;
    }
    if (axes.empty()) return cells;
  }
}

}  // namespace care::cfg
