#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "care/care.h"
#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <string>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Takes ownership of a string returned by the library.
std::string take(char* s) {
  REQUIRE(s != nullptr);
  std::string out(s);
  care_string_free(s);
  return out;
}

const std::string kData = CARE_TEST_DATA;

}  // namespace

TEST_CASE("version and error channel") {
  CHECK(std::string(care_version()).size() > 0);
  care_config* c = nullptr;
  CHECK(care_config_from_json(nullptr, &c) == CARE_ERR_USAGE);
  CHECK(std::string(care_last_error()).size() > 0);
  care_string_free(nullptr);
}

TEST_CASE("configuration") {
  care_config* c = nullptr;
  CHECK(care_config_from_json("{\"learning_rate\": 1}", &c) == CARE_ERR_USAGE);
  CHECK(std::string(care_last_error()).find("unknown config key 'learning_rate'") != std::string::npos);
  CHECK(c == nullptr);
  CHECK(care_config_from_json("{\"dataset\": ", &c) == CARE_ERR_USAGE);
  CHECK(care_config_load((kData + "/absent.json").c_str(), &c) == CARE_ERR_DATA);

  REQUIRE(care_config_from_json("{\"dataset\": \"TINY\", \"depth\": 2}", &c) == CARE_OK);
  CHECK(care_config_set_seed(c, 17) == CARE_OK);
  CHECK(care_config_set_output_dir(c, "out_here") == CARE_OK);
  char* s = nullptr;
  REQUIRE(care_config_resolved_json(c, &s) == CARE_OK);
  const json j = json::parse(take(s));
  CHECK(j.at("seed") == 17);
  CHECK(j.at("depth") == 2);
  REQUIRE(care_config_output_dir(c, &s) == CARE_OK);
  CHECK(take(s) == "out_here");
  CHECK(care_config_set_seed(nullptr, 1) == CARE_ERR_USAGE);
  care_config_free(c);
  care_config_free(nullptr);
}

TEST_CASE("datasets") {
  care_dataset* d = nullptr;
  REQUIRE(care_dataset_load((kData + "/TOY").c_str(), nullptr, nullptr, &d) == CARE_OK);
  char* s = nullptr;
  REQUIRE(care_dataset_stats_json(d, &s) == CARE_OK);
  const json j = json::parse(take(s));
  CHECK(j.at("graphs") == 2);
  CHECK(j.at("classes") == 2);
  care_dataset_free(d);

  d = nullptr;
  CHECK(care_dataset_load((kData + "/missing_dataset_dir").c_str(), nullptr, nullptr, &d) == CARE_ERR_DATA);
  CHECK(std::string(care_last_error()).find("missing_dataset_dir") != std::string::npos);
  CHECK(care_dataset_load((kData + "/BADTOKEN").c_str(), nullptr, nullptr, &d) == CARE_ERR_DATA);
  CHECK(std::string(care_last_error()).find("BADTOKEN_A.txt:2") != std::string::npos);
  CHECK(care_dataset_load((kData + "/TOY").c_str(), nullptr, "bogus", &d) == CARE_ERR_USAGE);
  CHECK(d == nullptr);
}

TEST_CASE("cross-validation through handles") {
  care_config* c = nullptr;
  const std::string cfg = "{\"dataset\": \"" + kData +
                          "/TINY\", \"hidden\": 4, \"depth\": 1, \"batch_size\": 8, \"max_epochs\": 2, "
                          "\"patience\": 1, \"lr\": 0.01, \"folds\": [0, 1]}";
  REQUIRE(care_config_from_json(cfg.c_str(), &c) == CARE_OK);
  care_dataset* d = nullptr;
  REQUIRE(care_dataset_load_for_config(c, &d) == CARE_OK);
  int epochs = 0;
  care_result* r = nullptr;
  const fs::path out = fs::temp_directory_path() / "care_capi_run";
  fs::remove_all(out);
  REQUIRE(care_run_cv(
              d, c, out.string().c_str(),
              [](int, int, double, double, double, void* user) { ++*static_cast<int*>(user); }, &epochs, &r) ==
          CARE_OK);
  CHECK(epochs >= 2);
  double mean = -1.0, sd = -1.0;
  REQUIRE(care_result_accuracy(r, &mean, &sd) == CARE_OK);
  CHECK(mean >= 0.0);
  CHECK(mean <= 1.0);
  CHECK(sd >= 0.0);
  char* s = nullptr;
  REQUIRE(care_result_json(r, &s) == CARE_OK);
  const json j = json::parse(take(s));
  CHECK(j.at("fold_accuracies").size() == 2);
  CHECK(fs::exists(out / "run_result.json"));
  CHECK(fs::exists(out / "config.resolved.json"));
  care_result_free(r);
  CHECK(care_run_cv(nullptr, c, nullptr, nullptr, nullptr, &r) == CARE_ERR_USAGE);
  care_dataset_free(d);
  care_config_free(c);
}

TEST_CASE("ablation grid errors") {
  care_config* c = nullptr;
  REQUIRE(care_config_from_json("{\"dataset\": \"TINY\"}", &c) == CARE_OK);
  char* s = nullptr;
  CHECK(care_ablate(c, "{}", "unused", nullptr, nullptr, &s) == CARE_ERR_USAGE);
  CHECK(std::string(care_last_error()).find("grid") != std::string::npos);
  CHECK(care_ablate(c, "{\"lr\": [1]}", "unused", nullptr, nullptr, &s) == CARE_ERR_USAGE);
  care_config_free(c);
}

TEST_CASE("metrics") {
  char* s = nullptr;
  REQUIRE(care_metrics_from_csv((kData + "/two_blobs.csv").c_str(), &s) == CARE_OK);
  const json j = json::parse(take(s));
  CHECK(j.at("si") == 1.0);
  CHECK(j.at("silhouette").get<double>() > 0.9);
  CHECK(care_metrics_from_csv((kData + "/empty.csv").c_str(), &s) == CARE_ERR_DATA);
  CHECK(care_metrics_from_csv((kData + "/malformed.csv").c_str(), &s) == CARE_ERR_DATA);
  CHECK(std::string(care_last_error()).find("malformed.csv:3") != std::string::npos);
}

TEST_CASE("complexity bound") {
  char* s = nullptr;
  char* table = nullptr;
  REQUIRE(care_vcbound_report(10, 4, 1, &s, &table) == CARE_OK);
  const json j = json::parse(take(s));
  CHECK(std::abs(j.at("difference").get<double>() - 100.0 * (std::sqrt(68.0) - 8.0)) < 1e-9);
  CHECK(j.at("verdict") == true);
  CHECK(take(table).find("24.62") != std::string::npos);
  CHECK(care_vcbound_report(0, 4, 1, &s, nullptr) == CARE_ERR_USAGE);

  const uint64_t depths[] = {1, 2, 4};
  REQUIRE(care_vcbound_sweep(100, 256, depths, 3, &s) == CARE_OK);
  const json sw = json::parse(take(s));
  CHECK(sw.at("cells") == 25600);
  CHECK(sw.at("evaluations") == 76800);
  CHECK(sw.at("failures") == 0);
  CHECK(care_vcbound_sweep(10, 10, nullptr, 0, &s) == CARE_ERR_USAGE);
}
