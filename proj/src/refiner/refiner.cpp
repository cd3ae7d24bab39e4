#include "care/refiner.hpp"

#include "care/error.hpp"

#include <cstring>

namespace care::ref {

Mlp::Mlp(const std::string& name, Index in_dim, Index hidden, Index out_dim, std::mt19937_64& rng)
    : w1(name + ".w1", diff::uniform_init(in_dim, hidden, in_dim, rng)),
      b1(name + ".b1", diff::uniform_init(1, hidden, in_dim, rng)),
      w2(name + ".w2", diff::uniform_init(hidden, out_dim, hidden, rng)),
      b2(name + ".b2", diff::uniform_init(1, out_dim, hidden, rng)) {}

Tensor Mlp::forward(ParameterBinding& bind, const Tensor& x) {
  if (x.cols() != in_dim()) {
    throw ShapeError(w1.name() + ": input " + diff::shape_string(x.value()) + " does not fit weight " +
                     diff::shape_string(w1.value()));
  }
  Tensor hidden = diff::relu(diff::add_row_bias(diff::matmul(x, bind(w1)), bind(b1)));
  return diff::add_row_bias(diff::matmul(hidden, bind(w2)), bind(b2));
}

void Mlp::set_trainable(bool on) {
  for (Parameter* p : parameters()) p->set_trainable(on);
}

void Mlp::set_identity() {
  if (w1.rows() != w1.cols() || w2.rows() != w2.cols()) {
    throw ContractError(w1.name() + ": identity hook needs equal widths");
  }
  w1.value().setIdentity();
  w2.value().setIdentity();
  b1.value().setZero();
  b2.value().setZero();
}

void Mlp::set_left_projection() {
  if (w1.rows() < w1.cols() || w2.rows() != w2.cols()) {
    throw ContractError(w1.name() + ": left-projection hook needs in >= hidden = out");
  }
  w1.value().setZero();
  w1.value().topRows(w1.cols()).setIdentity();
  w2.value().setIdentity();
  b1.value().setZero();
  b2.value().setZero();
}

void Mlp::set_zero() {
  for (Parameter* p : parameters()) p->value().setZero();
}

RefinerWeights::RefinerWeights(const std::string& prefix, Index m, std::mt19937_64& rng)
    : rho(prefix + ".rho", m, m, m, rng), trans(prefix + ".trans", 2 * m, m, m, rng) {}

std::vector<Parameter*> RefinerWeights::parameters() {
  std::vector<Parameter*> out = rho.parameters();
  for (Parameter* p : trans.parameters()) out.push_back(p);
  return out;
}

void RefinerWeights::set_trainable(bool on) {
  rho.set_trainable(on);
  trans.set_trainable(on);
}

ClassState::ClassState(Index class_count, Index dim, std::size_t capacity)
    : dim_(dim), capacity_(capacity), bags_(static_cast<std::size_t>(class_count)),
      hc_(static_cast<std::size_t>(class_count)), staleness_(static_cast<std::size_t>(class_count), 0) {
  if (class_count < 1 || dim < 1) throw ConfigError("ClassState needs at least one class and dim >= 1");
  if (capacity < 1) throw ConfigError("bag capacity must be >= 1");
}

void ClassState::check_class(Index i) const {
  if (i < 0 || i >= class_count()) {
    throw DomainError("class index " + std::to_string(i) + " outside [0, " +
                      std::to_string(class_count()) + ")");
  }
}

void ClassState::update_bag(Index i, const Matrix& rep) {
  if (mode_ != StateMode::Train) throw ContractError("update_bag called in eval mode");
  check_class(i);
  if (rep.rows() != 1 || rep.cols() != dim_) {
    throw ShapeError("update_bag: expected 1x" + std::to_string(dim_) + ", got " + diff::shape_string(rep));
  }
  auto& b = bags_[static_cast<std::size_t>(i)];
  b.push_back(rep);
  if (b.size() > capacity_) b.pop_front();
  ++staleness_[static_cast<std::size_t>(i)];
}

const std::deque<Matrix>& ClassState::bag(Index i) const {
  check_class(i);
  return bags_[static_cast<std::size_t>(i)];
}

void ClassState::set_bag(Index i, std::deque<Matrix> bag) {
  check_class(i);
  if (bag.size() > capacity_) throw ContractError("set_bag: bag exceeds capacity");
  for (const Matrix& m : bag) {
    if (m.rows() != 1 || m.cols() != dim_) throw ShapeError("set_bag: entry " + diff::shape_string(m));
  }
  bags_[static_cast<std::size_t>(i)] = std::move(bag);
}

bool ClassState::has_hc(Index i) const {
  check_class(i);
  return hc_[static_cast<std::size_t>(i)].has_value();
}

const Matrix& ClassState::hc(Index i) const {
  if (!has_hc(i)) throw ConfigError("class " + std::to_string(i) + " has no class representation");
  return *hc_[static_cast<std::size_t>(i)];
}

void ClassState::set_hc(Index i, Matrix value) {
  check_class(i);
  if (value.rows() != 1 || value.cols() != dim_) throw ShapeError("set_hc: " + diff::shape_string(value));
  if (!value.allFinite()) throw NumericError("class representation " + std::to_string(i) + " is not finite");
  hc_[static_cast<std::size_t>(i)] = std::move(value);
  staleness_[static_cast<std::size_t>(i)] = 0;
}

std::uint64_t ClassState::staleness(Index i) const {
  check_class(i);
  return staleness_[static_cast<std::size_t>(i)];
}

Matrix ClassState::bag_mean(Index i) const {
  const auto& b = bag(i);
  if (b.empty()) throw DomainError("bag of class " + std::to_string(i) + " is empty");
  Matrix sum = Matrix::Zero(1, dim_);
  for (const Matrix& m : b) sum += m;
  return sum / static_cast<double>(b.size());
}

void ClassState::require_all_hc() const {
  for (Index i = 0; i < class_count(); ++i) {
    if (!hc_[static_cast<std::size_t>(i)]) {
      throw ConfigError("class " + std::to_string(i) +
                        " has no class representation (no training graph of that class was seen)");
    }
  }
}

namespace {

struct Fnv {
  std::uint64_t h = 1469598103934665603ULL;
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < n; ++k) {
      h ^= p[k];
      h *= 1099511628211ULL;
    }
  }
  template <typename T>
  void value(const T& v) { bytes(&v, sizeof(v)); }
  void matrix(const Matrix& m) {
    value(m.rows());
    value(m.cols());
    bytes(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
};

nlohmann::json row_json(const Matrix& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

Matrix row_from_json(const nlohmann::json& j, Index dim) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Index>(v.size()) != dim) throw FormatError("class state vector has wrong width");
  Matrix m(1, dim);
  for (Index k = 0; k < dim; ++k) m(0, k) = v[static_cast<std::size_t>(k)];
  return m;
}

}  // namespace

std::uint64_t ClassState::hash() const {
  Fnv f;
  f.value(dim_);
  f.value(capacity_);
  for (std::size_t i = 0; i < bags_.size(); ++i) {
    f.value(bags_[i].size());
    for (const Matrix& m : bags_[i]) f.matrix(m);
    f.value(hc_[i].has_value());
    if (hc_[i]) f.matrix(*hc_[i]);
    f.value(staleness_[i]);
  }
  return f.h;
}

nlohmann::json ClassState::summary_json() const {
  nlohmann::json classes = nlohmann::json::array();
  for (Index i = 0; i < class_count(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    classes.push_back({{"class", i},
                       {"bag_size", bags_[k].size()},
                       {"staleness", staleness_[k]},
                       {"hc", hc_[k] ? row_json(*hc_[k]) : nlohmann::json(nullptr)}});
  }
  return {{"dim", dim_}, {"capacity", capacity_}, {"classes", classes}};
}

nlohmann::json ClassState::to_json() const {
  nlohmann::json j = summary_json();
  for (Index i = 0; i < class_count(); ++i) {
    nlohmann::json bag = nlohmann::json::array();
    for (const Matrix& m : bags_[static_cast<std::size_t>(i)]) bag.push_back(row_json(m));
    j["classes"][static_cast<std::size_t>(i)]["bag"] = std::move(bag);
  }
  return j;
}

ClassState ClassState::from_json(const nlohmann::json& j) {
  try {
    const auto& classes = j.at("classes");
    ClassState s(static_cast<Index>(classes.size()), j.at("dim").get<Index>(),
                 j.at("capacity").get<std::size_t>());
    for (Index i = 0; i < s.class_count(); ++i) {
      const auto& c = classes.at(static_cast<std::size_t>(i));
      std::deque<Matrix> bag;
      for (const auto& row : c.at("bag")) bag.push_back(row_from_json(row, s.dim_));
      s.set_bag(i, std::move(bag));
      if (!c.at("hc").is_null()) s.set_hc(i, row_from_json(c.at("hc"), s.dim_));
      s.staleness_[static_cast<std::size_t>(i)] = c.at("staleness").get<std::uint64_t>();
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("class state: ") + e.what());
  }
}

Tensor class_representation(ClassState& state, Index i, RefinerWeights& weights,
                            ParameterBinding& bind, const std::optional<Tensor>& live) {
  diff::Tape& tape = bind.tape();
  const auto& bag = state.bag(i);
  Tensor mean;
  if (live) {
    if (live->rows() != 1 || live->cols() != state.dim()) {
      throw ShapeError("class_representation: live rep " + diff::shape_string(live->value()));
    }
    if (bag.size() <= 1) {
      mean = *live;
    } else {
      Matrix older = Matrix::Zero(1, state.dim());
      for (std::size_t k = 0; k + 1 < bag.size(); ++k) older += bag[k];
      mean = diff::scale(diff::add(tape.constant(older), *live), 1.0 / static_cast<double>(bag.size()));
    }
  } else {
    if (bag.empty()) {
      throw DomainError("class_representation: class " + std::to_string(i) + " has an empty bag");
    }
    mean = tape.constant(state.bag_mean(i));
  }
  Tensor hc = weights.rho.forward(bind, mean);
  state.set_hc(i, hc.value());
  return hc;
}

Tensor refine(const Tensor& hg, const Tensor& hc, RefinerWeights& weights, ParameterBinding& bind) {
  if (hg.rows() != 1 || hc.rows() != 1 || hg.cols() != hc.cols()) {
    throw ShapeError("refine: " + diff::shape_string(hg.value()) + " and " + diff::shape_string(hc.value()));
  }
  return weights.trans.forward(bind, diff::concat_cols(hg, hc));
}

namespace {

double cosine(const Matrix& u, const Matrix& v) {
  return u.cwiseProduct(v).sum() / (u.norm() * v.norm() + diff::kCosineEpsilon);
}

}  // namespace

Index pseudo_label(const Matrix& hg_sub, const ClassState& state) {
  state.require_all_hc();
  if (hg_sub.rows() != 1 || hg_sub.cols() != state.dim()) {
    throw ShapeError("pseudo_label: " + diff::shape_string(hg_sub));
  }
  // Cosine of hg_sub with unit-normalised copies so that rescaling hg_sub
  // cannot reorder classes through the epsilon term.
  const double norm = hg_sub.norm();
  const Matrix unit = norm > 0.0 ? Matrix(hg_sub / norm) : hg_sub;
  Index best = 0;
  double best_sim = cosine(unit, state.hc(0));
  for (Index i = 1; i < state.class_count(); ++i) {
    const double s = cosine(unit, state.hc(i));
    if (s > best_sim) {
      best_sim = s;
      best = i;
    }
  }
  return best;
}

void refresh_class_representations(ClassState& state, RefinerWeights& weights) {
  diff::Tape tape(false);
  ParameterBinding bind(tape);
  for (Index i = 0; i < state.class_count(); ++i) {
    if (state.bag(i).empty()) continue;
    class_representation(state, i, weights, bind, std::nullopt);
  }
}

RefineOutput refiner_step(const Tensor& hg, const Tensor& hg_sub, std::optional<Index> label,
                          ClassState& state, RefinerWeights& weights, ParameterBinding& bind) {
  RefineOutput out;
  out.hg_sub = hg_sub;
  if (label) {
    if (state.mode() != StateMode::Train) throw ContractError("refiner_step: label given in eval mode");
    state.update_bag(*label, hg_sub.value());
    out.hc = class_representation(state, *label, weights, bind, hg_sub);
    out.chosen = *label;
  } else {
    out.chosen = pseudo_label(hg_sub.value(), state);
    out.hc = bind.tape().constant(state.hc(out.chosen));
  }
  out.refined = refine(hg, out.hc, weights, bind);
  return out;
}

}  // namespace care::ref
