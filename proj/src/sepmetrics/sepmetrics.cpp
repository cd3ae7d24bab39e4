#include "care/sepmetrics.hpp"

#include "care/error.hpp"
#include "care/log.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace care::sep {

std::vector<long> EmbeddingSet::classes() const {
  std::vector<long> c = labels;
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

void EmbeddingSet::validate() const {
  if (labels.empty()) throw DomainError("embedding set is empty");
  if (static_cast<std::size_t>(points.rows()) != labels.size()) {
    throw ShapeError("embedding set has " + std::to_string(points.rows()) + " points but " +
                     std::to_string(labels.size()) + " labels");
  }
  if (!ids.empty() && ids.size() != labels.size()) throw ShapeError("embedding set ids do not match labels");
  if (points.cols() < 1) throw ShapeError("embedding vectors have no components");
  if (!points.allFinite()) throw NumericError("embedding set contains non-finite values");
}

namespace {

double distance(const EmbeddingSet& s, Eigen::Index i, Eigen::Index j) {
  return (s.points.row(i) - s.points.row(j)).norm();
}

/// Dense symmetric distance matrix.
Points distances(const EmbeddingSet& s) {
  const Eigen::Index n = s.points.rows();
  Points d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = distance(s, i, j);
  }
  return d;
}

std::map<long, std::size_t> class_sizes(const EmbeddingSet& s) {
  std::map<long, std::size_t> sizes;
  for (long l : s.labels) ++sizes[l];
  return sizes;
}

void require_two_classes(const std::map<long, std::size_t>& sizes, const char* who) {
  if (sizes.size() < 2) throw DomainError(std::string(who) + " needs at least two classes");
}

void require_no_singletons(const std::map<long, std::size_t>& sizes, const char* who) {
  for (const auto& [label, count] : sizes) {
    if (count < 2) {
      throw DomainError(std::string(who) + ": class " + std::to_string(label) + " has a single sample");
    }
  }
}

}  // namespace

double silhouette(const EmbeddingSet& set) {
  set.validate();
  const auto sizes = class_sizes(set);
  require_two_classes(sizes, "silhouette");
  require_no_singletons(sizes, "silhouette");
  const Points d = distances(set);
  const auto n = static_cast<Eigen::Index>(set.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::map<long, double> sums;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) sums[set.labels[static_cast<std::size_t>(j)]] += d(i, j);
    }
    const long own = set.labels[static_cast<std::size_t>(i)];
    const double a = sums[own] / static_cast<double>(sizes.at(own) - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, sum] : sums) {
      if (label != own) b = std::min(b, sum / static_cast<double>(sizes.at(label)));
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

double separability_index(const EmbeddingSet& set) {
  set.validate();
  const auto n = static_cast<Eigen::Index>(set.size());
  if (n < 2) throw DomainError("separability index needs at least two samples");
  std::size_t same = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index nearest = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dij = distance(set, i, j);
      if (dij < best) {
        best = dij;
        nearest = j;
      }
    }
    if (set.labels[static_cast<std::size_t>(nearest)] == set.labels[static_cast<std::size_t>(i)]) ++same;
  }
  return static_cast<double>(same) / static_cast<double>(n);
}

double hypothesis_margin(const EmbeddingSet& set) {
  set.validate();
  const auto sizes = class_sizes(set);
  require_two_classes(sizes, "hypothesis margin");
  require_no_singletons(sizes, "hypothesis margin");
  const auto n = static_cast<Eigen::Index>(set.size());
  double total = 0.0;
  std::size_t guarded = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double hit = std::numeric_limits<double>::infinity();
    double miss = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dij = distance(set, i, j);
      if (set.labels[static_cast<std::size_t>(j)] == set.labels[static_cast<std::size_t>(i)]) {
        hit = std::min(hit, dij);
      } else {
        miss = std::min(miss, dij);
      }
    }
    if (hit == 0.0) {
      ++guarded;
      hit = kMarginEpsilon;
    }
    total += miss / hit;
  }
  if (guarded > 0) {
    warn("hypothesis margin: " + std::to_string(guarded) +
         " sample(s) coincide with a same-class neighbour; denominator set to 1e-12");
  }
  return total / static_cast<double>(n);
}

double centroid_distance(const EmbeddingSet& set) {
  set.validate();
  const auto sizes = class_sizes(set);
  require_two_classes(sizes, "centroid distance");
  std::vector<Eigen::RowVectorXd> centroids;
  for (const auto& [label, count] : sizes) {
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(set.points.cols());
    for (std::size_t k = 0; k < set.size(); ++k) {
      if (set.labels[k] == label) c += set.points.row(static_cast<Eigen::Index>(k));
    }
    centroids.push_back(c / static_cast<double>(count));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < centroids.size(); ++i) {
    for (std::size_t j = i + 1; j < centroids.size(); ++j) total += (centroids[i] - centroids[j]).norm();
  }
  return total;
}

SeparabilityReport compute_all(const EmbeddingSet& set) {
  return SeparabilityReport{silhouette(set), separability_index(set), hypothesis_margin(set),
                            centroid_distance(set)};
}

nlohmann::json to_json(const SeparabilityReport& r) {
  return {{"silhouette", r.silhouette}, {"si", r.si}, {"hm", r.hm}, {"cd", r.cd}};
}

double relative_improvement(double old_value, double new_value) {
  if (old_value == 0.0) throw DomainError("relative improvement against a zero baseline");
  return (new_value - old_value) / std::abs(old_value);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_field(const std::string& raw, const std::filesystem::path& path, std::size_t line) {
  const std::string s = trim(raw);
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw FormatError(path.string() + ":" + std::to_string(line) + ": cannot parse '" + s + "'");
  }
  return value;
}

}  // namespace

EmbeddingSet read_embeddings_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool header_seen = false;
  std::vector<std::vector<double>> rows;
  EmbeddingSet set;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (!header_seen) {
      if (fields.size() < 3 || trim(fields[0]) != "id" || trim(fields[1]) != "label") {
        throw FormatError(path.string() + ":" + std::to_string(line_no) +
                          ": expected header id,label,e0,...");
      }
      for (std::size_t k = 2; k < fields.size(); ++k) {
        if (trim(fields[k]) != "e" + std::to_string(k - 2)) {
          throw FormatError(path.string() + ":" + std::to_string(line_no) + ": column " +
                            std::to_string(k + 1) + " should be e" + std::to_string(k - 2));
        }
      }
      width = fields.size() - 2;
      header_seen = true;
      continue;
    }
    if (fields.size() != width + 2) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(width + 2) + " fields, found " + std::to_string(fields.size()));
    }
    set.ids.push_back(parse_field<long>(fields[0], path, line_no));
    set.labels.push_back(parse_field<long>(fields[1], path, line_no));
    std::vector<double> row(width);
    for (std::size_t k = 0; k < width; ++k) row[k] = parse_field<double>(fields[k + 2], path, line_no);
    rows.push_back(std::move(row));
  }
  if (!header_seen) throw FormatError(path.string() + ": empty file");
  if (rows.empty()) throw FormatError(path.string() + ": no embedding rows");
  set.points.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < width; ++k) {
      set.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
  }
  return set;
}

void write_embeddings_csv(const std::filesystem::path& path, const EmbeddingSet& set) {
  set.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "id,label";
  for (Eigen::Index k = 0; k < set.points.cols(); ++k) out << ",e" << k;
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < set.size(); ++i) {
    out << (set.ids.empty() ? static_cast<long>(i) : set.ids[i]) << ',' << set.labels[i];
    for (Eigen::Index k = 0; k < set.points.cols(); ++k) {
      const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), set.points(static_cast<Eigen::Index>(i), k));
      out << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf));
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace care::sep
