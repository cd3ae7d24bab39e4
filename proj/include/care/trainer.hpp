#pragma once

// Model assembly (encoder, selector, class-aware refiner, linear head),
// batch training with Adam, evaluation, early stopping and 10-fold
// cross-validation.

#include "care/adam.hpp"
#include "care/encoders.hpp"
#include "care/graphio.hpp"
#include "care/losses.hpp"
#include "care/refiner.hpp"
#include "care/selector.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

namespace care::train {

using diff::Index;
using diff::Matrix;
using diff::Parameter;
using diff::Tensor;

enum class Architecture { Global, Hierarchical };
/// ClassAware: Trans([hg | hc]). SubgraphOnly: Trans([hg | hg_sub]) with no
/// class state (the refiner-removed ablation).
enum class RefinerMode { ClassAware, SubgraphOnly };

std::string to_string(Architecture a);
std::string to_string(RefinerMode m);
Architecture parse_architecture(std::string_view name);
RefinerMode parse_refiner_mode(std::string_view name);

struct ModelConfig {
  enc::LayerKind backbone = enc::LayerKind::Gcn;
  Architecture architecture = Architecture::Global;
  int depth = 4;
  Index hidden = 146;
  sel::SelectorConfig selector;
  loss::LossConfig loss;
  double lr = 1e-4;
  int batch_size = 20;
  int max_epochs = 1000;
  int patience = 25;
  std::uint64_t seed = 0;
  bool care_enabled = true;
  RefinerMode refiner = RefinerMode::ClassAware;
  std::size_t bag_capacity = ref::kDefaultBagCapacity;

  /// Hierarchical needs gin; ranges of every numeric field; loss config.
  void validate() const;
};

/// One refinement site: score weights of the selector plus refiner weights
/// and class state. Global models have one site, hierarchical ones one per
/// encoder layer.
struct Site {
  Parameter score;  ///< m x 1
  ref::RefinerWeights refiner;
  ref::ClassState state;
};

class Model {
 public:
  Model(const ModelConfig& config, Index feature_dim, int class_count, std::mt19937_64& init_rng);

  const ModelConfig& config() const { return config_; }
  int class_count() const { return class_count_; }
  Index feature_dim() const { return feature_dim_; }

  enc::EncoderStack& encoder() { return encoder_; }
  Parameter& head_weight() { return head_w_; }
  Parameter& head_bias() { return head_b_; }
  std::vector<Site>& sites() { return sites_; }
  const std::vector<Site>& sites() const { return sites_; }

  /// Encoder, head, then per-site score and refiner parameters.
  std::vector<Parameter*> parameters();
  bool uses_class_state() const;

  void set_state_mode(ref::StateMode mode);
  /// Recomputes every cached class representation with current weights.
  void refresh_class_states();
  /// Combined hash of every parameter value and class state.
  std::uint64_t hash() const;

 private:
  ModelConfig config_;
  Index feature_dim_;
  int class_count_;
  enc::EncoderStack encoder_;
  Parameter head_w_;
  Parameter head_b_;
  std::vector<Site> sites_;
};

/// How the refiner picks the class representation of a graph.
enum class ForwardMode {
  Train,      ///< ground-truth label, bags updated, hc live
  Eval,       ///< pseudo label, state untouched
  TrueLabel,  ///< ground-truth label, cached hc, state untouched
};

struct SiteOutput {
  Tensor hg;
  Tensor hg_sub;
  Tensor hc;
  Index chosen = 0;
  std::vector<Index> kept;
};

struct ForwardOutput {
  Tensor logits;     ///< 1 x |Y|
  Tensor embedding;  ///< input of the linear head
  std::vector<SiteOutput> sites;
};

/// Per-graph constants precomputed once per dataset.
std::vector<enc::GraphOperators> prepare_operators(const graph::Dataset& dataset);

ForwardOutput forward_graph(Model& model, const enc::GraphOperators& graph, diff::ParameterBinding& bind,
                            ForwardMode mode, std::optional<Index> label);

struct BatchStats {
  double l_cls = 0.0;
  double l_intra = 0.0;
  double l_inter = 0.0;
  double l_class = 0.0;
  double l_total = 0.0;
  std::size_t correct = 0;
  std::size_t graphs = 0;
};

/// One batch: forward in train mode, mean cross-entropy, class terms from the
/// batch and the state, one Adam step on the total loss.
BatchStats train_batch(Model& model, const graph::Dataset& dataset,
                       const std::vector<enc::GraphOperators>& ops, std::span<const Index> batch,
                       diff::AdamState& adam);

struct EpochStats {
  int epoch = 0;
  std::size_t batches = 0;
  double train_loss = 0.0;  ///< graph-weighted mean total loss
  double train_acc = 0.0;
  double l_cls = 0.0;
  double l_intra = 0.0;
  double l_inter = 0.0;
  double l_class = 0.0;
  double l_total = 0.0;
};

/// Shuffles `train` with `rng`, runs ceil(|train| / batch_size) batches and
/// refreshes class representations afterwards.
EpochStats train_epoch(Model& model, const graph::Dataset& dataset, const std::vector<enc::GraphOperators>& ops,
                       std::span<const Index> train, diff::AdamState& adam, std::mt19937_64& rng);

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;  ///< cross-entropy only
  std::vector<Index> predictions;
};

/// Pseudo-label evaluation; ConfigError if a class has no representation.
/// Leaves parameters and class states untouched.
EvalResult evaluate(Model& model, const graph::Dataset& dataset, const std::vector<enc::GraphOperators>& ops,
                    std::span<const Index> indices);

/// Patience rule on 1-based epochs: a strictly lower loss resets the best;
/// training stops once epoch - best_epoch >= patience or epoch >= max_epochs.
class EarlyStopping {
 public:
  EarlyStopping(int patience, int max_epochs);

  /// Records the loss of `epoch` and returns true when training should stop.
  bool update(int epoch, double val_loss);
  bool improved() const { return improved_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int max_epochs_;
  int best_epoch_ = 0;
  double best_loss_;
  bool improved_ = false;
};

/// Parameter values and class states at one point of training.
struct Checkpoint {
  int epoch = 0;
  std::vector<std::string> names;
  std::vector<Matrix> values;
  std::vector<ref::ClassState> states;
};

Checkpoint capture(Model& model, int epoch);
void restore(Model& model, const Checkpoint& checkpoint);
/// JSON manifest with a versioned header; loading validates names and shapes.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double l_cls = 0.0;
  double l_intra = 0.0;
  double l_inter = 0.0;
  double l_class = 0.0;
  double l_total = 0.0;
};

struct EmbeddingDump {
  std::vector<Index> ids;
  std::vector<Index> labels;
  Matrix vectors;
};

struct FoldResult {
  int fold = 0;
  double test_accuracy = 0.0;
  int stop_epoch = 0;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<EpochRecord> trace;
  EmbeddingDump train_embeddings;  ///< ground-truth prototypes, restored model
  EmbeddingDump test_embeddings;   ///< pseudo labels, restored model
  nlohmann::json class_states;
};

struct RunResult {
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  ///< population standard deviation
  double mean_epochs = 0.0;
  double std_epochs = 0.0;
  double wall_seconds = 0.0;

  /// Deterministic summary (no timing).
  nlohmann::json to_json() const;
};

/// Population mean and standard deviation.
std::pair<double, double> mean_std(std::span<const double> values);

struct RunOptions {
  /// Subset of fold indices to run; empty runs all ten.
  std::vector<int> folds;
  std::optional<std::filesystem::path> output_dir;
  bool stratified_folds = false;
  std::function<void(int fold, const EpochRecord&)> on_epoch;
};

/// Fresh model and class state per fold; early stopping on the validation
/// cross-entropy; the best checkpoint is restored before testing.
RunResult run_cv(const graph::Dataset& dataset, const ModelConfig& config, const RunOptions& options = {});

/// Deterministic per-fold generator; `stream` separates initialisation (0)
/// from shuffling (1).
std::mt19937_64 fold_rng(std::uint64_t seed, int fold, int stream);

/// Writes run_result.json, timing.json and the per-fold trace, loss and
/// embedding CSVs into `dir`.
void write_run_outputs(const RunResult& result, const std::filesystem::path& dir);

}  // namespace care::train
