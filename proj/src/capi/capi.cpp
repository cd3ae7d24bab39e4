#include "care/care.h"

#include "care/config.hpp"
#include "care/error.hpp"
#include "care/graphio.hpp"
#include "care/sepmetrics.hpp"
#include "care/trainer.hpp"
#include "care/vcbound.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <string>

struct care_config {
  care::cfg::RunConfig value;
};

struct care_dataset {
  care::graph::Dataset value;
};

struct care_result {
  care::train::RunResult value;
};

namespace {

thread_local std::string g_last_error;

care_status fail(care_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

/// Runs `body`, translating exceptions into status codes.
template <typename Body>
care_status guarded(Body&& body) {
  try {
    g_last_error.clear();
    body();
    return CARE_OK;
  } catch (const care::ConfigError& e) {
    return fail(CARE_ERR_USAGE, e.what());
  } catch (const care::ContractError& e) {
    return fail(CARE_ERR_USAGE, e.what());
  } catch (const care::IoError& e) {
    return fail(CARE_ERR_DATA, e.what());
  } catch (const care::FormatError& e) {
    return fail(CARE_ERR_DATA, e.what());
  } catch (const care::DomainError& e) {
    return fail(CARE_ERR_DATA, e.what());
  } catch (const care::ShapeError& e) {
    return fail(CARE_ERR_DATA, e.what());
  } catch (const care::NumericError& e) {
    return fail(CARE_ERR_NUMERIC, e.what());
  } catch (const std::bad_alloc&) {
    return fail(CARE_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CARE_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(CARE_ERR_INTERNAL, "unknown error");
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw care::ConfigError(std::string(what) + " must not be NULL");
}

care::graph::Dataset load_dataset(const care::cfg::RunConfig& c) {
  if (c.dataset.empty()) throw care::ConfigError("config does not name a dataset");
  if (!std::filesystem::is_directory(c.dataset)) throw care::IoError("dataset directory not found: " + c.dataset);
  return care::graph::parse_tudataset(c.dataset, c.dataset_name, c.feature_policy);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw care::IoError("cannot write " + path.string());
  out << text;
  if (!out) throw care::IoError("failed writing " + path.string());
}

care::train::RunResult run(const care::graph::Dataset& dataset, const care::cfg::RunConfig& c, const char* out_dir,
                           care_epoch_callback callback, void* user) {
  care::train::RunOptions options;
  options.folds = c.folds;
  options.stratified_folds = c.stratified_folds;
  if (out_dir != nullptr) {
    options.output_dir = std::filesystem::path(out_dir);
    std::filesystem::create_directories(*options.output_dir);
    write_text(*options.output_dir / "config.resolved.json", care::cfg::to_json(c).dump(2) + "\n");
  }
  if (callback != nullptr) {
    options.on_epoch = [callback, user](int fold, const care::train::EpochRecord& r) {
      callback(fold, r.epoch, r.train_loss, r.val_loss, r.val_acc, user);
    };
  }
  return care::train::run_cv(dataset, c.model, options);
}

}  // namespace

extern "C" {

const char* care_version(void) { return "1.0.0"; }

const char* care_last_error(void) { return g_last_error.c_str(); }

void care_string_free(char* s) { std::free(s); }

care_status care_config_from_json(const char* json, care_config** out) {
  return guarded([&] {
    require(json, "json");
    require(out, "out");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::parse_error& e) {
      throw care::ConfigError(std::string("config JSON: ") + e.what());
    }
    *out = new care_config{care::cfg::parse_run_config(j)};
  });
}

care_status care_config_load(const char* path, care_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new care_config{care::cfg::load_run_config(path)};
  });
}

care_status care_config_set_seed(care_config* config, uint64_t seed) {
  return guarded([&] {
    require(config, "config");
    config->value.model.seed = seed;
  });
}

care_status care_config_set_output_dir(care_config* config, const char* dir) {
  return guarded([&] {
    require(config, "config");
    require(dir, "dir");
    config->value.output_dir = dir;
  });
}

care_status care_config_output_dir(const care_config* config, char** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = copy_string(config->value.output_dir);
  });
}

care_status care_config_resolved_json(const care_config* config, char** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = copy_string(care::cfg::to_json(config->value).dump(2));
  });
}

void care_config_free(care_config* config) { delete config; }

care_status care_dataset_load(const char* dir, const char* name, const char* feature_policy, care_dataset** out) {
  return guarded([&] {
    require(dir, "dir");
    require(out, "out");
    care::cfg::RunConfig c;
    nlohmann::json j = {{"dataset", dir}};
    if (name != nullptr) j["dataset_name"] = name;
    if (feature_policy != nullptr) j["feature_policy"] = feature_policy;
    c = care::cfg::parse_run_config(j);
    *out = new care_dataset{load_dataset(c)};
  });
}

care_status care_dataset_load_for_config(const care_config* config, care_dataset** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = new care_dataset{load_dataset(config->value)};
  });
}

care_status care_dataset_stats_json(const care_dataset* dataset, char** out) {
  return guarded([&] {
    require(dataset, "dataset");
    require(out, "out");
    const auto s = dataset->value.stats();
    const nlohmann::json j = {{"name", dataset->value.name},
                              {"graphs", s.graphs},
                              {"classes", s.classes},
                              {"mean_nodes", s.mean_nodes},
                              {"mean_edges", s.mean_edges},
                              {"class_histogram", s.class_histogram},
                              {"class_values", dataset->value.class_values},
                              {"feature_dim", dataset->value.feature_dim},
                              {"feature_policy", care::graph::to_string(dataset->value.policy)}};
    *out = copy_string(j.dump(2));
  });
}

void care_dataset_free(care_dataset* dataset) { delete dataset; }

care_status care_run_cv(const care_dataset* dataset, const care_config* config, const char* out_dir,
                        care_epoch_callback callback, void* user, care_result** out) {
  return guarded([&] {
    require(dataset, "dataset");
    require(config, "config");
    require(out, "out");
    *out = new care_result{run(dataset->value, config->value, out_dir, callback, user)};
  });
}

care_status care_result_json(const care_result* result, char** out) {
  return guarded([&] {
    require(result, "result");
    require(out, "out");
    *out = copy_string(result->value.to_json().dump(2));
  });
}

care_status care_result_accuracy(const care_result* result, double* mean, double* std_dev) {
  return guarded([&] {
    require(result, "result");
    if (mean != nullptr) *mean = result->value.mean_accuracy;
    if (std_dev != nullptr) *std_dev = result->value.std_accuracy;
  });
}

void care_result_free(care_result* result) { delete result; }

care_status care_ablate(const care_config* base, const char* grid_json, const char* out_dir,
                        care_epoch_callback callback, void* user, char** summary_json) {
  return guarded([&] {
    require(base, "base");
    require(grid_json, "grid_json");
    require(out_dir, "out_dir");
    nlohmann::json grid;
    try {
      grid = nlohmann::json::parse(grid_json);
    } catch (const nlohmann::json::parse_error& e) {
      throw care::ConfigError(std::string("grid JSON: ") + e.what());
    }
    const auto cells = care::cfg::expand_grid(care::cfg::to_json(base->value), grid);
    const care::graph::Dataset dataset = load_dataset(base->value);
    struct Row {
      std::size_t cell;
      std::string label;
      care::train::RunResult result;
    };
    std::vector<Row> rows;
    for (std::size_t k = 0; k < cells.size(); ++k) {
      char dir[32];
      std::snprintf(dir, sizeof(dir), "cell_%03zu", k);
      const std::string path = (std::filesystem::path(out_dir) / dir).string();
      rows.push_back({k, cells[k].label, run(dataset, cells[k].config, path.c_str(), callback, user)});
    }
    std::vector<std::size_t> order(rows.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return rows[a].result.mean_accuracy > rows[b].result.mean_accuracy;
    });
    std::string csv = "rank,cell,label,mean_accuracy,std_accuracy,mean_epochs\n";
    nlohmann::json ranking = nlohmann::json::array();
    for (std::size_t r = 0; r < order.size(); ++r) {
      const Row& row = rows[order[r]];
      char line[512];
      std::snprintf(line, sizeof(line), "%zu,cell_%03zu,\"%s\",%.17g,%.17g,%.17g\n", r + 1, row.cell,
                    row.label.c_str(), row.result.mean_accuracy, row.result.std_accuracy, row.result.mean_epochs);
      csv += line;
      ranking.push_back({{"rank", r + 1},
                         {"cell", row.cell},
                         {"label", row.label},
                         {"mean_accuracy", row.result.mean_accuracy},
                         {"std_accuracy", row.result.std_accuracy}});
    }
    write_text(std::filesystem::path(out_dir) / "summary.csv", csv);
    if (summary_json != nullptr) *summary_json = copy_string(ranking.dump(2));
  });
}

care_status care_metrics_from_csv(const char* path, char** out_json) {
  return guarded([&] {
    require(path, "path");
    require(out_json, "out_json");
    const auto set = care::sep::read_embeddings_csv(path);
    *out_json = copy_string(care::sep::to_json(care::sep::compute_all(set)).dump(2));
  });
}

care_status care_vcbound_report(uint64_t n, uint64_t h2, uint64_t d, char** out_json, char** table) {
  return guarded([&] {
    require(out_json, "out_json");
    const auto report = care::vc::theorem1_check(n, h2, d);
    *out_json = copy_string(care::vc::to_json(report).dump(2));
    if (table != nullptr) *table = copy_string(care::vc::format_table({report}));
  });
}

care_status care_vcbound_sweep(uint64_t n_max, uint64_t h2_max, const uint64_t* depths, size_t depth_count,
                               char** out_json) {
  return guarded([&] {
    require(depths, "depths");
    require(out_json, "out_json");
    const std::vector<care::vc::Count> d(depths, depths + depth_count);
    const auto s = care::vc::sweep(n_max, h2_max, d);
    *out_json = copy_string(nlohmann::json{{"cells", s.cells},
                                           {"evaluations", s.evaluations},
                                           {"failures", s.failures},
                                           {"min_difference", s.min_difference},
                                           {"depths", s.depths},
                                           {"verdict", s.failures == 0}}
                                .dump(2));
  });
}

}  // extern "C"
