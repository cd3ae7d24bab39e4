#pragma once

// TUDataset text-format reader/writer, node feature construction, adjacency
// normalization and the 10-fold train/validation/test plan.

#include "care/diffcore.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace care::graph {

using diff::Index;
using diff::Matrix;

enum class FeaturePolicy { OneHotLabel, DegreeOneHot, Constant };

std::string to_string(FeaturePolicy policy);
/// Accepts "onehot_label", "degree_onehot", "constant".
FeaturePolicy parse_feature_policy(std::string_view name);

inline constexpr Index kDegreeCap = 64;

struct GraphRecord {
  Matrix adjacency;  ///< n x n, symmetric 0/1, zero diagonal
  Matrix features;   ///< n x c
  int label = 0;     ///< dense class index
  /// Raw node labels as read from DS_node_labels.txt (empty when absent).
  std::vector<long> node_labels;

  Index node_count() const { return adjacency.rows(); }
  Index edge_count() const;
};

struct DatasetStats {
  std::size_t graphs = 0;
  int classes = 0;
  double mean_nodes = 0.0;
  double mean_edges = 0.0;
  std::vector<std::size_t> class_histogram;
};

struct Dataset {
  std::string name;
  std::vector<GraphRecord> graphs;
  int class_count = 0;
  Index feature_dim = 0;
  FeaturePolicy policy = FeaturePolicy::OneHotLabel;
  /// Original label value for each dense class index.
  std::vector<long> class_values;

  DatasetStats stats() const;
};

/// Reads DS_A.txt, DS_graph_indicator.txt, DS_graph_labels.txt and the
/// optional DS_node_labels.txt / DS_node_attributes.txt from `directory`.
/// When `policy` is empty, node labels select onehot_label and their absence
/// selects degree_onehot.
Dataset parse_tudataset(const std::filesystem::path& directory, const std::string& name,
                        std::optional<FeaturePolicy> policy = std::nullopt);

/// Writes the dataset back in the same text layout (1-indexed, both edge
/// directions, original class values).
void write_tudataset(const Dataset& dataset, const std::filesystem::path& directory);

/// One feature matrix per graph. `node_labels`, when given, holds the raw node
/// labels of each graph. Throws ConfigError for onehot_label without labels.
std::vector<Matrix> build_features(std::span<const Matrix> adjacencies,
                                   const std::vector<std::vector<long>>* node_labels,
                                   FeaturePolicy policy);

/// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
Matrix normalize_adjacency(const Matrix& adjacency);

struct Fold {
  std::vector<Index> train;
  std::vector<Index> val;
  std::vector<Index> test;
};

struct FoldPlan {
  std::vector<Fold> folds;
};

inline constexpr int kFoldCount = 10;

/// Shuffles 0..n-1 with `seed` and cuts it into 10 contiguous chunks; fold k
/// tests on chunk k, validates on chunk k+1 (mod 10) and trains on the rest.
/// With `stratified`, each class is shuffled separately and dealt round-robin.
FoldPlan make_folds(const Dataset& dataset, std::uint64_t seed, bool stratified = false);

nlohmann::json to_json(const FoldPlan& plan);

}  // namespace care::graph
