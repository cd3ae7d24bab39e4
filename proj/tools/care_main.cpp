// Command-line front end. Talks to the library only through the C interface.

#include "care/care.h"

#include "CLI11.hpp"
#include "json.hpp"

#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitUsage = 1;

struct Freed {
  void operator()(char* s) const { care_string_free(s); }
  void operator()(care_config* c) const { care_config_free(c); }
  void operator()(care_dataset* d) const { care_dataset_free(d); }
  void operator()(care_result* r) const { care_result_free(r); }
};
using String = std::unique_ptr<char, Freed>;
using Config = std::unique_ptr<care_config, Freed>;
using Dataset = std::unique_ptr<care_dataset, Freed>;
using Result = std::unique_ptr<care_result, Freed>;

/// Non-zero status: prints the library diagnostic and returns the exit code.
int report(care_status status) {
  std::cerr << "error: " << care_last_error() << '\n';
  return static_cast<int>(status);
}

std::optional<std::uint64_t> seed_from_env() {
  const char* raw = std::getenv("CARE_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(raw, &end, 10);
  if (errno != 0 || *end != '\0' || raw[0] == '-') {
    throw CLI::ValidationError("CARE_SEED", std::string("not a non-negative integer: ") + raw);
  }
  return static_cast<std::uint64_t>(v);
}

bool write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  return static_cast<bool>(out);
}

void print_progress(int fold, int epoch, double train_loss, double val_loss, double val_acc, void* user) {
  if (*static_cast<bool*>(user)) {
    std::fprintf(stderr, "fold %d epoch %4d  train_loss %.5f  val_loss %.5f  val_acc %.4f\n", fold, epoch,
                 train_loss, val_loss, val_acc);
  }
}

int load_config(const std::string& path, const std::string& out_override, Config& config) {
  care_config* raw = nullptr;
  if (const care_status s = care_config_load(path.c_str(), &raw); s != CARE_OK) return report(s);
  config.reset(raw);
  if (const auto seed = seed_from_env()) {
    if (const care_status s = care_config_set_seed(config.get(), *seed); s != CARE_OK) return report(s);
  }
  if (!out_override.empty()) {
    if (const care_status s = care_config_set_output_dir(config.get(), out_override.c_str()); s != CARE_OK) {
      return report(s);
    }
  }
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out, bool verbose) {
  Config config;
  if (const int rc = load_config(config_path, out, config); rc != 0) return rc;
  care_dataset* ds = nullptr;
  if (const care_status s = care_dataset_load_for_config(config.get(), &ds); s != CARE_OK) return report(s);
  Dataset dataset(ds);
  char* dir_raw = nullptr;
  if (const care_status s = care_config_output_dir(config.get(), &dir_raw); s != CARE_OK) return report(s);
  String dir(dir_raw);
  care_result* res = nullptr;
  if (const care_status s = care_run_cv(dataset.get(), config.get(), dir.get(), print_progress, &verbose, &res);
      s != CARE_OK) {
    return report(s);
  }
  Result result(res);
  double mean = 0.0;
  double sd = 0.0;
  care_result_accuracy(result.get(), &mean, &sd);
  std::printf("accuracy: %.2f +- %.2f (%%, 10-fold)\nresults: %s\n", 100.0 * mean, 100.0 * sd, dir.get());
  return 0;
}

int cmd_metrics(const std::string& csv, const std::string& out) {
  char* raw = nullptr;
  if (const care_status s = care_metrics_from_csv(csv.c_str(), &raw); s != CARE_OK) return report(s);
  String json(raw);
  std::printf("%s\n", json.get());
  if (!out.empty() && !write_file(out, std::string(json.get()) + "\n")) {
    std::cerr << "error: cannot write " << out << '\n';
    return 2;
  }
  return 0;
}

int cmd_vcbound(std::int64_t n, std::int64_t h2, std::int64_t d, bool sweep, bool json) {
  if (sweep) {
    const std::uint64_t depths[] = {1, 2, 4};
    char* raw = nullptr;
    if (const care_status s = care_vcbound_sweep(100, 256, depths, 3, &raw); s != CARE_OK) return report(s);
    String out(raw);
    if (json) std::printf("%s\n", out.get());
    const nlohmann::json summary = nlohmann::json::parse(out.get());
    const auto cells = summary.at("cells").get<std::uint64_t>();
    std::printf("n in [1,100], h2 in [1,256], d in {1,2,4}\n");
    if (summary.at("failures").get<std::uint64_t>() == 0) {
      std::printf("verdict: true for all %llu cells\n", static_cast<unsigned long long>(cells));
      return 0;
    }
    std::printf("verdict: false for %llu of %llu evaluations\n",
                static_cast<unsigned long long>(summary.at("failures").get<std::uint64_t>()),
                static_cast<unsigned long long>(summary.at("evaluations").get<std::uint64_t>()));
    return 3;
  }
  if (n <= 0 || h2 <= 0 || d <= 0) {
    std::cerr << "error: --n, --h2 and --d must be positive integers\n";
    return kExitUsage;
  }
  char* json_raw = nullptr;
  char* table_raw = nullptr;
  if (const care_status s = care_vcbound_report(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(h2),
                                                static_cast<std::uint64_t>(d), &json_raw, &table_raw);
      s != CARE_OK) {
    return report(s);
  }
  String js(json_raw);
  String table(table_raw);
  std::printf("%s", json ? (std::string(js.get()) + "\n").c_str() : table.get());
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& grid, const std::string& out, bool verbose) {
  Config config;
  if (const int rc = load_config(config_path, out, config); rc != 0) return rc;
  std::string grid_json = grid;
  if (std::ifstream in(grid); in) {
    std::ostringstream ss;
    ss << in.rdbuf();
    grid_json = ss.str();
  }
  char* dir_raw = nullptr;
  if (const care_status s = care_config_output_dir(config.get(), &dir_raw); s != CARE_OK) return report(s);
  String dir(dir_raw);
  char* summary = nullptr;
  if (const care_status s =
          care_ablate(config.get(), grid_json.c_str(), dir.get(), print_progress, &verbose, &summary);
      s != CARE_OK) {
    return report(s);
  }
  String text(summary);
  std::printf("%s\nsummary: %s/summary.csv\n", text.get(), dir.get());
  return 0;
}

int cmd_parse(const std::string& dir, const std::string& name, const std::string& policy) {
  care_dataset* raw = nullptr;
  if (const care_status s = care_dataset_load(dir.c_str(), name.empty() ? nullptr : name.c_str(),
                                              policy.empty() ? nullptr : policy.c_str(), &raw);
      s != CARE_OK) {
    return report(s);
  }
  Dataset dataset(raw);
  char* stats = nullptr;
  if (const care_status s = care_dataset_stats_json(dataset.get(), &stats); s != CARE_OK) return report(s);
  String text(stats);
  std::printf("%s\n", text.get());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-aware graph classification: training, ablations, separability metrics, complexity bounds"};
  app.require_subcommand(1);
  app.set_version_flag("--version", care_version());

  std::string out;
  bool verbose = false;

  std::string train_config;
  auto* train = app.add_subcommand("train", "10-fold cross-validation run from a JSON config");
  train->add_option("--config", train_config, "run configuration (JSON)")->required();
  train->add_option("--out", out, "output directory (overrides the config)");
  train->add_flag("-v,--verbose", verbose, "per-epoch progress on stderr");

  std::string csv;
  std::string metrics_out;
  auto* metrics = app.add_subcommand("metrics", "separability metrics of an embeddings CSV");
  metrics->add_option("csv", csv, "CSV with header id,label,e0,...")->required();
  metrics->add_option("--out", metrics_out, "also write the JSON here");

  std::int64_t n = 0;
  std::int64_t h2 = 0;
  std::int64_t d = 1;
  bool sweep = false;
  bool json = false;
  auto* vcbound = app.add_subcommand("vcbound", "parameter-matched complexity comparison");
  auto* n_opt = vcbound->add_option("--n", n, "node count");
  auto* h2_opt = vcbound->add_option("--h2", h2, "base width of the class-aware model");
  vcbound->add_option("--d", d, "layer count");
  auto* sweep_flag = vcbound->add_flag("--sweep", sweep, "exhaustive grid n<=100, h2<=256, d in {1,2,4}");
  vcbound->add_flag("--json", json, "print JSON instead of a table");
  sweep_flag->excludes(n_opt)->excludes(h2_opt);

  std::string ablate_config;
  std::string grid;
  auto* ablate = app.add_subcommand("ablate", "run a grid of configurations");
  ablate->add_option("--config", ablate_config, "base configuration (JSON)")->required();
  ablate->add_option("--grid", grid, "grid as JSON text or a file path")->required();
  ablate->add_option("--out", out, "output directory (overrides the config)");
  ablate->add_flag("-v,--verbose", verbose, "per-epoch progress on stderr");

  std::string parse_dir;
  std::string parse_name;
  std::string policy;
  auto* parse = app.add_subcommand("parse", "dataset statistics");
  parse->add_option("dir", parse_dir, "TUDataset directory")->required();
  parse->add_option("--name", parse_name, "file prefix (default: directory name)");
  parse->add_option("--feature-policy", policy, "auto, onehot_label, degree_onehot or constant");

  try {
    app.parse(argc, argv);
    if (*vcbound && !sweep && (n_opt->count() == 0 || h2_opt->count() == 0)) {
      throw CLI::ValidationError("vcbound", "--n and --h2 are required unless --sweep is given");
    }
    if (*train) return cmd_train(train_config, out, verbose);
    if (*metrics) return cmd_metrics(csv, metrics_out);
    if (*vcbound) return cmd_vcbound(n, h2, d, sweep, json);
    if (*ablate) return cmd_ablate(ablate_config, grid, out, verbose);
    if (*parse) return cmd_parse(parse_dir, parse_name, policy);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    app.exit(e);
    return kExitUsage;
  }
  return kExitUsage;
}
