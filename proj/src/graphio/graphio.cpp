#include "care/graphio.hpp"

#include "care/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace care::graph {
namespace fs = std::filesystem;

namespace {

struct Line {
  std::size_t number;
  std::vector<std::string_view> tokens;
};

// Splits a text file into lines of comma/whitespace separated tokens. Blank
// lines are dropped; CRLF endings are tolerated.
class TokenFile {
 public:
  explicit TokenFile(const fs::path& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    text_ = buf.str();
    std::size_t number = 0;
    std::size_t pos = 0;
    while (pos < text_.size()) {
      std::size_t end = text_.find('\n', pos);
      if (end == std::string::npos) end = text_.size();
      ++number;
      Line line{number, {}};
      std::size_t i = pos;
      while (i < end) {
        while (i < end && is_sep(text_[i])) ++i;
        std::size_t j = i;
        while (j < end && !is_sep(text_[j])) ++j;
        if (j > i) line.tokens.emplace_back(text_.data() + i, j - i);
        i = j;
      }
      if (!line.tokens.empty()) lines_.push_back(std::move(line));
      pos = end + 1;
    }
  }

  const std::vector<Line>& lines() const { return lines_; }

  [[noreturn]] void fail(const Line& line, const std::string& what) const {
    throw FormatError(path_.filename().string() + ":" + std::to_string(line.number) + ": " + what);
  }

  long integer(const Line& line, std::string_view tok) const {
    long v = 0;
    const auto* first = tok.data();
    const auto* last = tok.data() + tok.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) {
      // Some label files store integral values as "1.0".
      double d = real(line, tok);
      if (d != std::floor(d)) fail(line, "non-integer token '" + std::string(tok) + "'");
      return static_cast<long>(d);
    }
    return v;
  }

  double real(const Line& line, std::string_view tok) const {
    double v = 0.0;
    const auto* first = tok.data();
    const auto* last = tok.data() + tok.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
      fail(line, "not a number '" + std::string(tok) + "'");
    }
    return v;
  }

 private:
  static bool is_sep(char c) { return c == ',' || c == ' ' || c == '\t' || c == '\r'; }

  fs::path path_;
  std::string text_;
  std::vector<Line> lines_;
};

fs::path dataset_file(const fs::path& dir, const std::string& name, const char* suffix) {
  return dir / (name + "_" + suffix + ".txt");
}

fs::path mandatory(const fs::path& dir, const std::string& name, const char* suffix) {
  fs::path p = dataset_file(dir, name, suffix);
  if (!fs::exists(p)) throw IoError("missing dataset file " + p.string());
  return p;
}

}  // namespace

std::string to_string(FeaturePolicy policy) {
  switch (policy) {
    case FeaturePolicy::OneHotLabel: return "onehot_label";
    case FeaturePolicy::DegreeOneHot: return "degree_onehot";
    case FeaturePolicy::Constant: return "constant";
  }
  return "unknown";
}

FeaturePolicy parse_feature_policy(std::string_view name) {
  if (name == "onehot_label") return FeaturePolicy::OneHotLabel;
  if (name == "degree_onehot") return FeaturePolicy::DegreeOneHot;
  if (name == "constant") return FeaturePolicy::Constant;
  throw ConfigError("unknown feature policy '" + std::string(name) + "'");
}

Index GraphRecord::edge_count() const {
  return static_cast<Index>(std::llround(adjacency.sum() / 2.0));
}

DatasetStats Dataset::stats() const {
  DatasetStats s;
  s.graphs = graphs.size();
  s.classes = class_count;
  s.class_histogram.assign(static_cast<std::size_t>(class_count), 0);
  double nodes = 0.0, edges = 0.0;
  for (const auto& g : graphs) {
    nodes += static_cast<double>(g.node_count());
    edges += static_cast<double>(g.edge_count());
    ++s.class_histogram[static_cast<std::size_t>(g.label)];
  }
  if (!graphs.empty()) {
    s.mean_nodes = nodes / static_cast<double>(graphs.size());
    s.mean_edges = edges / static_cast<double>(graphs.size());
  }
  return s;
}

std::vector<Matrix> build_features(std::span<const Matrix> adjacencies,
                                   const std::vector<std::vector<long>>* node_labels,
                                   FeaturePolicy policy) {
  std::vector<Matrix> out;
  out.reserve(adjacencies.size());
  switch (policy) {
    case FeaturePolicy::OneHotLabel: {
      if (node_labels == nullptr) {
        throw ConfigError("feature policy onehot_label needs a node-label file");
      }
      if (node_labels->size() != adjacencies.size()) {
        throw ShapeError("build_features: label lists for " + std::to_string(node_labels->size()) +
                         " graphs, adjacencies for " + std::to_string(adjacencies.size()));
      }
      std::set<long> distinct;
      for (const auto& labels : *node_labels) distinct.insert(labels.begin(), labels.end());
      std::map<long, Index> column;
      for (long v : distinct) column.emplace(v, static_cast<Index>(column.size()));
      const Index width = std::max<Index>(1, static_cast<Index>(column.size()));
      for (std::size_t g = 0; g < adjacencies.size(); ++g) {
        const auto& labels = (*node_labels)[g];
        if (static_cast<Index>(labels.size()) != adjacencies[g].rows()) {
          throw ShapeError("build_features: graph " + std::to_string(g) + " has " +
                           std::to_string(adjacencies[g].rows()) + " nodes but " +
                           std::to_string(labels.size()) + " labels");
        }
        Matrix f = Matrix::Zero(adjacencies[g].rows(), width);
        for (std::size_t v = 0; v < labels.size(); ++v) f(static_cast<Index>(v), column.at(labels[v])) = 1.0;
        out.push_back(std::move(f));
      }
      break;
    }
    case FeaturePolicy::DegreeOneHot: {
      Index max_degree = 0;
      for (const auto& a : adjacencies) {
        if (a.rows() > 0) max_degree = std::max(max_degree, static_cast<Index>(a.rowwise().sum().maxCoeff()));
      }
      const Index width = std::min(max_degree + 1, kDegreeCap);
      for (const auto& a : adjacencies) {
        Matrix f = Matrix::Zero(a.rows(), width);
        for (Index v = 0; v < a.rows(); ++v) {
          const Index degree = static_cast<Index>(std::llround(a.row(v).sum()));
          f(v, std::min(degree, width - 1)) = 1.0;
        }
        out.push_back(std::move(f));
      }
      break;
    }
    case FeaturePolicy::Constant:
      for (const auto& a : adjacencies) out.push_back(Matrix::Ones(a.rows(), 1));
      break;
  }
  return out;
}

Dataset parse_tudataset(const fs::path& directory, const std::string& name,
                        std::optional<FeaturePolicy> policy) {
  const TokenFile indicator(mandatory(directory, name, "graph_indicator"));
  const TokenFile edges(mandatory(directory, name, "A"));
  const TokenFile graph_labels(mandatory(directory, name, "graph_labels"));

  // Node i (1-based) belongs to graph node_graph[i-1] (0-based) at local slot node_local[i-1].
  std::vector<Index> node_graph;
  std::vector<Index> node_local;
  std::vector<Index> graph_size;
  node_graph.reserve(indicator.lines().size());
  for (const Line& line : indicator.lines()) {
    if (line.tokens.size() != 1) indicator.fail(line, "expected one graph id per line");
    const long gid = indicator.integer(line, line.tokens[0]);
    if (gid < 1) indicator.fail(line, "graph id must be >= 1");
    const auto g = static_cast<Index>(gid - 1);
    if (g >= static_cast<Index>(graph_size.size())) graph_size.resize(static_cast<std::size_t>(g) + 1, 0);
    node_graph.push_back(g);
    node_local.push_back(graph_size[static_cast<std::size_t>(g)]++);
  }

  std::vector<long> raw_labels;
  for (const Line& line : graph_labels.lines()) {
    if (line.tokens.size() != 1) graph_labels.fail(line, "expected one label per line");
    raw_labels.push_back(graph_labels.integer(line, line.tokens[0]));
  }
  const std::size_t graph_count = raw_labels.size();
  if (graph_count == 0) throw FormatError(name + "_graph_labels.txt: no graphs");
  if (graph_size.size() > graph_count) {
    throw FormatError(name + "_graph_indicator.txt: references graph " + std::to_string(graph_size.size()) +
                      " but only " + std::to_string(graph_count) + " labels exist");
  }
  graph_size.resize(graph_count, 0);
  for (std::size_t g = 0; g < graph_count; ++g) {
    if (graph_size[g] == 0) {
      throw FormatError(name + "_graph_indicator.txt: graph " + std::to_string(g + 1) + " has no nodes");
    }
  }

  Dataset ds;
  ds.name = name;
  ds.graphs.resize(graph_count);
  for (std::size_t g = 0; g < graph_count; ++g) {
    ds.graphs[g].adjacency = Matrix::Zero(graph_size[g], graph_size[g]);
  }

  const auto node_count = static_cast<long>(node_graph.size());
  for (const Line& line : edges.lines()) {
    if (line.tokens.size() != 2) edges.fail(line, "expected an edge pair");
    const long u = edges.integer(line, line.tokens[0]);
    const long v = edges.integer(line, line.tokens[1]);
    if (u < 1 || v < 1 || u > node_count || v > node_count) {
      edges.fail(line, "node id outside 1.." + std::to_string(node_count));
    }
    const Index gu = node_graph[static_cast<std::size_t>(u - 1)];
    const Index gv = node_graph[static_cast<std::size_t>(v - 1)];
    if (gu != gv) edges.fail(line, "edge joins nodes of graphs " + std::to_string(gu + 1) + " and " + std::to_string(gv + 1));
    if (u == v) continue;
    Matrix& a = ds.graphs[static_cast<std::size_t>(gu)].adjacency;
    const Index lu = node_local[static_cast<std::size_t>(u - 1)];
    const Index lv = node_local[static_cast<std::size_t>(v - 1)];
    a(lu, lv) = 1.0;
    a(lv, lu) = 1.0;
  }

  // Dense 0-based classes in ascending order of the raw values.
  std::set<long> distinct(raw_labels.begin(), raw_labels.end());
  ds.class_values.assign(distinct.begin(), distinct.end());
  ds.class_count = static_cast<int>(ds.class_values.size());
  for (std::size_t g = 0; g < graph_count; ++g) {
    const auto it = std::lower_bound(ds.class_values.begin(), ds.class_values.end(), raw_labels[g]);
    ds.graphs[g].label = static_cast<int>(it - ds.class_values.begin());
  }

  std::vector<std::vector<long>> node_labels;
  const fs::path labels_path = dataset_file(directory, name, "node_labels");
  const bool has_node_labels = fs::exists(labels_path);
  if (has_node_labels) {
    const TokenFile file(labels_path);
    if (static_cast<long>(file.lines().size()) != node_count) {
      throw FormatError(labels_path.filename().string() + ": " + std::to_string(file.lines().size()) +
                        " lines for " + std::to_string(node_count) + " nodes");
    }
    node_labels.resize(graph_count);
    for (std::size_t g = 0; g < graph_count; ++g) node_labels[g].resize(static_cast<std::size_t>(graph_size[g]));
    for (std::size_t i = 0; i < file.lines().size(); ++i) {
      const Line& line = file.lines()[i];
      // Multi-column node label files keep their first column.
      node_labels[static_cast<std::size_t>(node_graph[i])][static_cast<std::size_t>(node_local[i])] =
          file.integer(line, line.tokens[0]);
    }
  }

  const FeaturePolicy chosen =
      policy.value_or(has_node_labels ? FeaturePolicy::OneHotLabel : FeaturePolicy::DegreeOneHot);
  ds.policy = chosen;

  std::vector<Matrix> adjacencies;
  adjacencies.reserve(graph_count);
  for (const auto& g : ds.graphs) adjacencies.push_back(g.adjacency);
  std::vector<Matrix> features =
      build_features(adjacencies, has_node_labels ? &node_labels : nullptr, chosen);

  const fs::path attr_path = dataset_file(directory, name, "node_attributes");
  if (chosen == FeaturePolicy::OneHotLabel && fs::exists(attr_path)) {
    const TokenFile file(attr_path);
    if (static_cast<long>(file.lines().size()) != node_count) {
      throw FormatError(attr_path.filename().string() + ": " + std::to_string(file.lines().size()) +
                        " lines for " + std::to_string(node_count) + " nodes");
    }
    const auto width = static_cast<Index>(file.lines().front().tokens.size());
    std::vector<Matrix> attrs(graph_count);
    for (std::size_t g = 0; g < graph_count; ++g) attrs[g] = Matrix::Zero(graph_size[g], width);
    for (std::size_t i = 0; i < file.lines().size(); ++i) {
      const Line& line = file.lines()[i];
      if (static_cast<Index>(line.tokens.size()) != width) file.fail(line, "inconsistent attribute count");
      for (Index c = 0; c < width; ++c) {
        attrs[static_cast<std::size_t>(node_graph[i])](node_local[i], c) =
            file.real(line, line.tokens[static_cast<std::size_t>(c)]);
      }
    }
    for (std::size_t g = 0; g < graph_count; ++g) {
      Matrix joined(features[g].rows(), features[g].cols() + width);
      joined << features[g], attrs[g];
      features[g] = std::move(joined);
    }
  }

  for (std::size_t g = 0; g < graph_count; ++g) {
    ds.graphs[g].features = std::move(features[g]);
    if (has_node_labels) ds.graphs[g].node_labels = std::move(node_labels[g]);
  }
  ds.feature_dim = ds.graphs.front().features.cols();
  return ds;
}

void write_tudataset(const Dataset& dataset, const fs::path& directory) {
  fs::create_directories(directory);
  auto open = [&](const char* suffix) {
    const fs::path p = dataset_file(directory, dataset.name, suffix);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    return out;
  };
  std::ofstream a = open("A");
  std::ofstream ind = open("graph_indicator");
  std::ofstream lab = open("graph_labels");
  const bool with_node_labels =
      !dataset.graphs.empty() &&
      std::all_of(dataset.graphs.begin(), dataset.graphs.end(), [](const GraphRecord& g) {
        return static_cast<Index>(g.node_labels.size()) == g.node_count();
      });
  std::ofstream nl;
  if (with_node_labels) nl = open("node_labels");

  long offset = 0;
  for (std::size_t g = 0; g < dataset.graphs.size(); ++g) {
    const GraphRecord& rec = dataset.graphs[g];
    const Index n = rec.node_count();
    for (Index u = 0; u < n; ++u) {
      ind << (g + 1) << '\n';
      if (with_node_labels) nl << rec.node_labels[static_cast<std::size_t>(u)] << '\n';
      for (Index v = 0; v < n; ++v) {
        if (rec.adjacency(u, v) != 0.0) a << (offset + u + 1) << ", " << (offset + v + 1) << '\n';
      }
    }
    lab << dataset.class_values.at(static_cast<std::size_t>(rec.label)) << '\n';
    offset += n;
  }
}

Matrix normalize_adjacency(const Matrix& adjacency) {
  const Index n = adjacency.rows();
  if (adjacency.cols() != n) throw ShapeError("normalize_adjacency: not square, " + diff::shape_string(adjacency));
  if (adjacency != adjacency.transpose()) {
    throw ContractError("normalize_adjacency: adjacency is not symmetric");
  }
  Matrix a = adjacency;
  a.diagonal().array() += 1.0;
  const Eigen::VectorXd inv_sqrt = a.rowwise().sum().array().rsqrt();
  return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

FoldPlan make_folds(const Dataset& dataset, std::uint64_t seed, bool stratified) {
  const auto n = static_cast<Index>(dataset.graphs.size());
  if (n < kFoldCount) {
    throw ConfigError("make_folds: need at least " + std::to_string(kFoldCount) + " graphs, got " + std::to_string(n));
  }
  std::mt19937_64 rng(seed);
  std::vector<std::vector<Index>> chunks(kFoldCount);
  if (!stratified) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    const Index base = n / kFoldCount;
    const Index extra = n % kFoldCount;
    Index pos = 0;
    for (Index k = 0; k < kFoldCount; ++k) {
      const Index len = base + (k < extra ? 1 : 0);
      chunks[static_cast<std::size_t>(k)].assign(order.begin() + pos, order.begin() + pos + len);
      pos += len;
    }
  } else {
    std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(std::max(dataset.class_count, 1)));
    for (Index i = 0; i < n; ++i) by_class[static_cast<std::size_t>(dataset.graphs[static_cast<std::size_t>(i)].label)].push_back(i);
    std::size_t slot = 0;
    for (auto& members : by_class) {
      std::shuffle(members.begin(), members.end(), rng);
      for (Index i : members) chunks[slot++ % kFoldCount].push_back(i);
    }
  }

  FoldPlan plan;
  plan.folds.resize(kFoldCount);
  for (int k = 0; k < kFoldCount; ++k) {
    Fold& f = plan.folds[static_cast<std::size_t>(k)];
    const int val_chunk = (k + 1) % kFoldCount;
    f.test = chunks[static_cast<std::size_t>(k)];
    f.val = chunks[static_cast<std::size_t>(val_chunk)];
    for (int c = 0; c < kFoldCount; ++c) {
      if (c == k || c == val_chunk) continue;
      f.train.insert(f.train.end(), chunks[static_cast<std::size_t>(c)].begin(), chunks[static_cast<std::size_t>(c)].end());
    }
    std::sort(f.train.begin(), f.train.end());
    std::sort(f.val.begin(), f.val.end());
    std::sort(f.test.begin(), f.test.end());
  }
  return plan;
}

nlohmann::json to_json(const FoldPlan& plan) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t k = 0; k < plan.folds.size(); ++k) {
    const Fold& f = plan.folds[k];
    out.push_back({{"fold", k}, {"train", f.train}, {"val", f.val}, {"test", f.test}});
  }
  return out;
}

}  // namespace care::graph
