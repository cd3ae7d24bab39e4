#include "care/losses.hpp"

#include "care/error.hpp"
#include "care/log.hpp"

#include <cmath>
#include <map>

namespace care::loss {

std::string to_string(ClassLossMode mode) {
  switch (mode) {
    case ClassLossMode::Cosine: return "cosine";
    case ClassLossMode::L2: return "l2";
    case ClassLossMode::Off: return "off";
  }
  return "unknown";
}

std::string to_string(Design design) {
  switch (design) {
    case Design::Cls: return "cls";
    case Design::Intra: return "intra";
    case Design::Inter: return "inter";
    case Design::Combine: return "combine";
  }
  return "unknown";
}

std::string to_string(L2Norm norm) { return norm == L2Norm::Mean ? "mean" : "max"; }

ClassLossMode parse_class_loss_mode(std::string_view name) {
  if (name == "cosine") return ClassLossMode::Cosine;
  if (name == "l2") return ClassLossMode::L2;
  if (name == "off") return ClassLossMode::Off;
  throw ConfigError("unknown class_loss_mode '" + std::string(name) + "' (expected cosine, l2 or off)");
}

Design parse_design(std::string_view name) {
  if (name == "cls") return Design::Cls;
  if (name == "intra") return Design::Intra;
  if (name == "inter") return Design::Inter;
  if (name == "combine") return Design::Combine;
  throw ConfigError("unknown loss design '" + std::string(name) + "' (expected cls, intra, inter or combine)");
}

L2Norm parse_l2_norm(std::string_view name) {
  if (name == "mean") return L2Norm::Mean;
  if (name == "max") return L2Norm::Max;
  throw ConfigError("unknown l2_norm '" + std::string(name) + "' (expected mean or max)");
}

void LossConfig::validate() const {
  if (!std::isfinite(lambda1) || lambda1 < 0.0) throw ConfigError("lambda1 must be finite and >= 0");
  if (!std::isfinite(lambda2) || lambda2 < 0.0) throw ConfigError("lambda2 must be finite and >= 0");
  if (mode == ClassLossMode::L2 && (design == Design::Intra || design == Design::Inter)) {
    throw ConfigError("loss design '" + to_string(design) + "' is defined for the cosine class loss only");
  }
}

namespace {

/// Members grouped by label, classes in ascending order.
std::map<Index, std::vector<const Member*>> by_class(std::span<const Member> batch, const char* who) {
  if (batch.empty()) throw DomainError(std::string(who) + ": empty batch");
  std::map<Index, std::vector<const Member*>> groups;
  for (const Member& m : batch) groups[m.label].push_back(&m);
  return groups;
}

Tensor average(const std::vector<Tensor>& terms) {
  Tensor sum = terms.front();
  for (std::size_t k = 1; k < terms.size(); ++k) sum = diff::add(sum, terms[k]);
  return diff::scale(sum, 1.0 / static_cast<double>(terms.size()));
}

/// Divides each term by the detached maximum of the group (Max) or leaves
/// it unchanged (Mean), then averages.
Tensor normalised_average(const std::vector<Tensor>& distances, L2Norm norm) {
  if (norm == L2Norm::Max) {
    std::size_t largest = 0;
    for (std::size_t k = 1; k < distances.size(); ++k) {
      if (distances[k].scalar() > distances[largest].scalar()) largest = k;
    }
    if (distances[largest].scalar() > 0.0) {
      return diff::mul_scalar(average(distances), diff::reciprocal(distances[largest]));
    }
  }
  return average(distances);
}

}  // namespace

Tensor intra_class_loss(std::span<const Member> batch) {
  const auto groups = by_class(batch, "intra_class_loss");
  std::vector<Tensor> per_class;
  for (const auto& [label, members] : groups) {
    std::vector<Tensor> sims;
    for (const Member* m : members) sims.push_back(diff::cosine_similarity(m->hc, m->hg_sub));
    per_class.push_back(average(sims));
  }
  return average(per_class);
}

Tensor inter_class_loss(diff::Tape& tape, std::span<const Tensor> class_reps) {
  if (class_reps.size() < 2) {
    warn("inter-class loss needs two class representations; using 0");
    return tape.constant(diff::Matrix::Zero(1, 1));
  }
  std::vector<Tensor> sims;
  for (std::size_t i = 0; i < class_reps.size(); ++i) {
    for (std::size_t j = i + 1; j < class_reps.size(); ++j) {
      sims.push_back(diff::cosine_similarity(class_reps[i], class_reps[j]));
    }
  }
  return average(sims);
}

Tensor class_loss(const Tensor& intra, const Tensor& inter, double lambda1) {
  return diff::exp(diff::sub(inter, diff::scale(intra, lambda1)));
}

Tensor l2_intra_loss(std::span<const Member> batch, L2Norm norm) {
  const auto groups = by_class(batch, "l2_intra_loss");
  std::vector<Tensor> per_class;
  for (const auto& [label, members] : groups) {
    std::vector<Tensor> dists;
    for (const Member* m : members) dists.push_back(diff::norm2(diff::sub(m->hc, m->hg_sub)));
    per_class.push_back(normalised_average(dists, norm));
  }
  return average(per_class);
}

Tensor l2_inter_loss(diff::Tape& tape, std::span<const Tensor> class_reps, L2Norm norm) {
  if (class_reps.size() < 2) {
    warn("inter-class loss needs two class representations; using 0");
    return tape.constant(diff::Matrix::Zero(1, 1));
  }
  std::vector<Tensor> dists;
  for (std::size_t i = 0; i < class_reps.size(); ++i) {
    for (std::size_t j = i + 1; j < class_reps.size(); ++j) {
      dists.push_back(diff::norm2(diff::sub(class_reps[i], class_reps[j])));
    }
  }
  return normalised_average(dists, norm);
}

ClassTerms class_terms(diff::Tape& tape, std::span<const Member> batch,
                       std::span<const Tensor> class_reps, const LossConfig& config) {
  ClassTerms t;
  if (config.mode == ClassLossMode::L2) {
    t.intra = l2_intra_loss(batch, config.l2_norm);
    t.inter = l2_inter_loss(tape, class_reps, config.l2_norm);
    t.class_loss = diff::exp(diff::sub(t.intra, t.inter));
  } else {
    t.intra = intra_class_loss(batch);
    t.inter = inter_class_loss(tape, class_reps);
    t.class_loss = class_loss(t.intra, t.inter, config.lambda1);
  }
  return t;
}

Tensor total_loss(const Tensor& l_cls, const std::optional<ClassTerms>& terms, const LossConfig& config) {
  if (config.mode == ClassLossMode::Off || config.design == Design::Cls || !terms) return l_cls;
  switch (config.design) {
    case Design::Intra:
      return diff::sub(l_cls, diff::scale(diff::exp(terms->intra), config.lambda2));
    case Design::Inter:
      return diff::add(l_cls, diff::scale(diff::exp(terms->inter), config.lambda2));
    case Design::Combine:
      return diff::add(l_cls, diff::scale(terms->class_loss, config.lambda2));
    case Design::Cls:
      break;
  }
  return l_cls;
}

}  // namespace care::loss
