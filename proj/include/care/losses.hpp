#pragma once

// Class loss family: cosine intra/inter similarities combined as
// exp(inter - lambda1 * intra), the L2-distance variant exp(intra - inter),
// and the total-loss designs cls / intra / inter / combine.

#include "care/diffcore.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace care::loss {

using diff::Index;
using diff::Tensor;

enum class ClassLossMode { Cosine, L2, Off };
enum class Design { Cls, Intra, Inter, Combine };
/// How L2 distances are normalised before averaging.
enum class L2Norm { Mean, Max };

std::string to_string(ClassLossMode mode);
std::string to_string(Design design);
std::string to_string(L2Norm norm);
ClassLossMode parse_class_loss_mode(std::string_view name);
Design parse_design(std::string_view name);
L2Norm parse_l2_norm(std::string_view name);

struct LossConfig {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  ClassLossMode mode = ClassLossMode::Cosine;
  Design design = Design::Combine;
  L2Norm l2_norm = L2Norm::Mean;

  /// Rejects negative or non-finite lambdas and the L2 mode combined with the
  /// intra/inter designs (those are defined on cosine similarities only).
  void validate() const;
};

/// One graph of a batch: its subgraph representation, the class
/// representation it was refined with, and its label.
struct Member {
  Tensor hg_sub;
  Tensor hc;
  Index label = 0;
};

/// Average over classes present in the batch of the average
/// cos(hc, hg_sub) of that class's members. DomainError on an empty batch.
Tensor intra_class_loss(std::span<const Member> batch);

/// Average of cos(hc_i, hc_j) over pairs i < j. Fewer than two
/// representations give a constant 0 and a warning.
Tensor inter_class_loss(diff::Tape& tape, std::span<const Tensor> class_reps);

/// exp(inter - lambda1 * intra).
Tensor class_loss(const Tensor& intra, const Tensor& inter, double lambda1);

/// L2 counterparts of the two terms (distances instead of similarities).
Tensor l2_intra_loss(std::span<const Member> batch, L2Norm norm);
Tensor l2_inter_loss(diff::Tape& tape, std::span<const Tensor> class_reps, L2Norm norm);

struct ClassTerms {
  Tensor intra;
  Tensor inter;
  Tensor class_loss;
};

/// Both terms and their combination for the configured mode. Cosine:
/// exp(inter - lambda1 * intra); L2: exp(intra - inter).
ClassTerms class_terms(diff::Tape& tape, std::span<const Member> batch,
                       std::span<const Tensor> class_reps, const LossConfig& config);

/// cls: L_cls. intra: L_cls - lambda2 exp(intra). inter: L_cls + lambda2 exp(inter).
/// combine: L_cls + lambda2 L_class. Mode Off or a missing `terms` gives L_cls.
Tensor total_loss(const Tensor& l_cls, const std::optional<ClassTerms>& terms, const LossConfig& config);

}  // namespace care::loss
