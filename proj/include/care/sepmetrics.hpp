#pragma once

// Class-separability metrics over labelled embeddings: silhouette
// coefficient, separability index, hypothesis margin and centroid distance.
// Euclidean distance throughout.

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace care::sep {

using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EmbeddingSet {
  Points points;            ///< one row per sample
  std::vector<long> labels; ///< one per row
  std::vector<long> ids;    ///< optional sample ids (same length or empty)

  std::size_t size() const { return labels.size(); }
  /// Distinct labels, ascending.
  std::vector<long> classes() const;
  /// Throws ShapeError/DomainError on inconsistent sizes or empty sets.
  void validate() const;
};

/// Mean over samples of (b - a) / max(a, b); a is the mean distance to the
/// other members of the sample's class, b the smallest mean distance to any
/// other class. 0/0 counts as 0. DomainError for a singleton class or a
/// single class.
double silhouette(const EmbeddingSet& set);

/// Fraction of samples whose nearest other sample (ties to the lower index)
/// shares their label. DomainError with fewer than two samples.
double separability_index(const EmbeddingSet& set);

inline constexpr double kMarginEpsilon = 1e-12;

/// Mean over samples of |x - nearmiss| / |x - nearhit|. A zero nearhit
/// distance uses 1e-12 as the denominator and emits a warning.
double hypothesis_margin(const EmbeddingSet& set);

/// Sum over class pairs of the distance between class centroids.
double centroid_distance(const EmbeddingSet& set);

struct SeparabilityReport {
  double silhouette = 0.0;
  double si = 0.0;
  double hm = 0.0;
  double cd = 0.0;
};

SeparabilityReport compute_all(const EmbeddingSet& set);
nlohmann::json to_json(const SeparabilityReport& r);

/// (new - old) / |old|; DomainError when old == 0.
double relative_improvement(double old_value, double new_value);

/// Reads a CSV with header `id,label,e0,...,e{m-1}`. FormatError names the
/// offending line.
EmbeddingSet read_embeddings_csv(const std::filesystem::path& path);
void write_embeddings_csv(const std::filesystem::path& path, const EmbeddingSet& set);

}  // namespace care::sep
