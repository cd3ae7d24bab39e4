#include "care/trainer.hpp"

#include "care/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace care::train {

namespace {

Index argmax_row(const Matrix& logits) {
  Index best = 0;
  for (Index k = 1; k < logits.cols(); ++k) {
    if (logits(0, k) > logits(0, best)) best = k;
  }
  return best;
}

Tensor mean_of(const std::vector<Tensor>& terms) {
  Tensor sum = terms.front();
  for (std::size_t k = 1; k < terms.size(); ++k) sum = diff::add(sum, terms[k]);
  return terms.size() == 1 ? sum : diff::scale(sum, 1.0 / static_cast<double>(terms.size()));
}

/// Restores train mode on scope exit.
class EvalModeGuard {
 public:
  explicit EvalModeGuard(Model& m) : model_(m) { model_.set_state_mode(ref::StateMode::Eval); }
  ~EvalModeGuard() { model_.set_state_mode(ref::StateMode::Train); }
  EvalModeGuard(const EvalModeGuard&) = delete;
  EvalModeGuard& operator=(const EvalModeGuard&) = delete;

 private:
  Model& model_;
};

void require_class_states(const Model& model) {
  if (!model.uses_class_state()) return;
  for (const Site& s : model.sites()) s.state.require_all_hc();
}

}  // namespace

BatchStats train_batch(Model& model, const graph::Dataset& dataset,
                       const std::vector<enc::GraphOperators>& ops, std::span<const Index> batch,
                       diff::AdamState& adam) {
  if (batch.empty()) throw DomainError("train_batch: empty batch");
  const ModelConfig& cfg = model.config();
  const auto class_count = static_cast<std::size_t>(model.class_count());
  model.set_state_mode(ref::StateMode::Train);

  diff::Tape tape(true);
  diff::ParameterBinding bind(tape);
  BatchStats stats;
  std::vector<Tensor> ces;
  std::vector<std::vector<loss::Member>> members(model.sites().size());
  std::vector<std::vector<std::optional<Tensor>>> latest(model.sites().size(),
                                                         std::vector<std::optional<Tensor>>(class_count));
  for (Index idx : batch) {
    const auto& record = dataset.graphs.at(static_cast<std::size_t>(idx));
    const Index y = record.label;
    ForwardOutput out = forward_graph(model, ops[static_cast<std::size_t>(idx)], bind, ForwardMode::Train, y);
    ces.push_back(diff::softmax_cross_entropy(out.logits, y));
    if (argmax_row(out.logits.value()) == y) ++stats.correct;
    for (std::size_t s = 0; s < out.sites.size(); ++s) {
      members[s].push_back(loss::Member{out.sites[s].hg_sub, out.sites[s].hc, y});
      latest[s][static_cast<std::size_t>(y)] = out.sites[s].hc;
    }
  }
  stats.graphs = batch.size();
  const Tensor l_cls = mean_of(ces);

  std::optional<loss::ClassTerms> terms;
  if (model.uses_class_state() && cfg.loss.mode != loss::ClassLossMode::Off) {
    std::vector<Tensor> intra, inter, combined;
    for (std::size_t s = 0; s < model.sites().size(); ++s) {
      const ref::ClassState& state = model.sites()[s].state;
      std::vector<Tensor> reps;
      for (std::size_t i = 0; i < class_count; ++i) {
        if (latest[s][i]) {
          reps.push_back(*latest[s][i]);
        } else if (state.has_hc(static_cast<Index>(i))) {
          reps.push_back(tape.constant(state.hc(static_cast<Index>(i))));
        }
      }
      loss::ClassTerms t = loss::class_terms(tape, members[s], reps, cfg.loss);
      intra.push_back(t.intra);
      inter.push_back(t.inter);
      combined.push_back(t.class_loss);
    }
    terms = loss::ClassTerms{mean_of(intra), mean_of(inter), mean_of(combined)};
  }
  const Tensor total = loss::total_loss(l_cls, terms, cfg.loss);

  stats.l_cls = l_cls.scalar();
  stats.l_total = total.scalar();
  if (terms) {
    stats.l_intra = terms->intra.scalar();
    stats.l_inter = terms->inter.scalar();
    stats.l_class = terms->class_loss.scalar();
  }
  if (!std::isfinite(stats.l_total)) throw NumericError("training loss is not finite");

  const std::vector<Parameter*> params = model.parameters();
  for (Parameter* p : params) p->zero_grad();
  tape.backward(total);
  diff::adam_step(params, adam);
  return stats;
}

EpochStats train_epoch(Model& model, const graph::Dataset& dataset, const std::vector<enc::GraphOperators>& ops,
                       std::span<const Index> train, diff::AdamState& adam, std::mt19937_64& rng) {
  if (train.empty()) throw DomainError("train_epoch: no training graphs");
  std::vector<Index> order(train.begin(), train.end());
  std::shuffle(order.begin(), order.end(), rng);
  const auto batch_size = static_cast<std::size_t>(model.config().batch_size);

  EpochStats e;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    const BatchStats b =
        train_batch(model, dataset, ops, std::span<const Index>(order.data() + start, end - start), adam);
    const auto w = static_cast<double>(b.graphs);
    e.l_cls += w * b.l_cls;
    e.l_intra += w * b.l_intra;
    e.l_inter += w * b.l_inter;
    e.l_class += w * b.l_class;
    e.l_total += w * b.l_total;
    correct += b.correct;
    ++e.batches;
  }
  const auto n = static_cast<double>(order.size());
  e.l_cls /= n;
  e.l_intra /= n;
  e.l_inter /= n;
  e.l_class /= n;
  e.l_total /= n;
  e.train_loss = e.l_total;
  e.train_acc = static_cast<double>(correct) / n;
  model.refresh_class_states();
  return e;
}

namespace {

/// Graphs per evaluation tape before it is cleared.
constexpr std::size_t kEvalChunk = 32;

template <typename Visit>
void for_each_forward(Model& model, const std::vector<enc::GraphOperators>& ops, std::span<const Index> indices,
                      ForwardMode mode, const graph::Dataset& dataset, Visit&& visit) {
  for (std::size_t start = 0; start < indices.size(); start += kEvalChunk) {
    diff::Tape tape(false);
    diff::ParameterBinding bind(tape);
    const std::size_t end = std::min(indices.size(), start + kEvalChunk);
    for (std::size_t k = start; k < end; ++k) {
      const Index idx = indices[k];
      const Index y = dataset.graphs.at(static_cast<std::size_t>(idx)).label;
      const std::optional<Index> label = mode == ForwardMode::Eval ? std::nullopt : std::optional<Index>(y);
      ForwardOutput out = forward_graph(model, ops[static_cast<std::size_t>(idx)], bind, mode, label);
      visit(idx, y, out);
    }
  }
}

}  // namespace

EvalResult evaluate(Model& model, const graph::Dataset& dataset, const std::vector<enc::GraphOperators>& ops,
                    std::span<const Index> indices) {
  if (indices.empty()) throw DomainError("evaluate: no graphs");
  require_class_states(model);
  EvalModeGuard guard(model);
  EvalResult r;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for_each_forward(model, ops, indices, ForwardMode::Eval, dataset, [&](Index, Index y, const ForwardOutput& out) {
    loss_sum += diff::softmax_cross_entropy(out.logits, y).scalar();
    const Index pred = argmax_row(out.logits.value());
    r.predictions.push_back(pred);
    if (pred == y) ++correct;
  });
  const auto n = static_cast<double>(indices.size());
  r.accuracy = static_cast<double>(correct) / n;
  r.mean_loss = loss_sum / n;
  return r;
}

EarlyStopping::EarlyStopping(int patience, int max_epochs)
    : patience_(patience), max_epochs_(max_epochs), best_loss_(std::numeric_limits<double>::infinity()) {
  if (patience < 1 || max_epochs < 1) throw ConfigError("early stopping needs patience, max_epochs >= 1");
}

bool EarlyStopping::update(int epoch, double val_loss) {
  improved_ = val_loss < best_loss_;
  if (improved_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch;
  }
  return epoch - best_epoch_ >= patience_ || epoch >= max_epochs_;
}

namespace {

EmbeddingDump dump_embeddings(Model& model, const graph::Dataset& dataset,
                              const std::vector<enc::GraphOperators>& ops, std::span<const Index> indices,
                              ForwardMode mode) {
  require_class_states(model);
  EvalModeGuard guard(model);
  EmbeddingDump d;
  d.vectors.resize(static_cast<Index>(indices.size()), model.config().hidden);
  for_each_forward(model, ops, indices, mode, dataset, [&](Index idx, Index y, const ForwardOutput& out) {
    d.vectors.row(static_cast<Index>(d.ids.size())) = out.embedding.value();
    d.ids.push_back(idx);
    d.labels.push_back(y);
  });
  return d;
}

}  // namespace

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

std::mt19937_64 fold_rng(std::uint64_t seed, int fold, int stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffU), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fold), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

RunResult run_cv(const graph::Dataset& dataset, const ModelConfig& config, const RunOptions& options) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const graph::FoldPlan plan = graph::make_folds(dataset, config.seed, options.stratified_folds);
  const std::vector<enc::GraphOperators> ops = prepare_operators(dataset);
  std::vector<int> folds = options.folds;
  if (folds.empty()) {
    for (int k = 0; k < graph::kFoldCount; ++k) folds.push_back(k);
  }

  RunResult result;
  for (int k : folds) {
    if (k < 0 || k >= static_cast<int>(plan.folds.size())) {
      throw ConfigError("fold index " + std::to_string(k) + " outside [0, " + std::to_string(plan.folds.size()) + ")");
    }
    const graph::Fold& fold = plan.folds[static_cast<std::size_t>(k)];
    try {
      std::mt19937_64 init_rng = fold_rng(config.seed, k, 0);
      std::mt19937_64 shuffle_rng = fold_rng(config.seed, k, 1);
      Model model(config, dataset.feature_dim, dataset.class_count, init_rng);
      const std::vector<Parameter*> params = model.parameters();
      diff::AdamState adam = diff::make_adam_state(params, diff::AdamOptions{config.lr});
      EarlyStopping stopper(config.patience, config.max_epochs);
      std::optional<Checkpoint> best;

      FoldResult fr;
      fr.fold = k;
      for (int epoch = 1;; ++epoch) {
        const EpochStats st = train_epoch(model, dataset, ops, fold.train, adam, shuffle_rng);
        const EvalResult val = evaluate(model, dataset, ops, fold.val);
        EpochRecord rec{epoch,    st.train_loss, val.mean_loss, st.train_acc, val.accuracy,
                        st.l_cls, st.l_intra,    st.l_inter,    st.l_class,   st.l_total};
        fr.trace.push_back(rec);
        if (options.on_epoch) options.on_epoch(k, rec);
        const bool stop = stopper.update(epoch, val.mean_loss);
        if (stopper.improved()) best = capture(model, epoch);
        if (stop) {
          fr.stop_epoch = epoch;
          break;
        }
      }
      if (!best) throw NumericError("validation loss never became finite");
      restore(model, *best);
      fr.best_epoch = stopper.best_epoch();
      fr.best_val_loss = stopper.best_loss();
      fr.test_accuracy = evaluate(model, dataset, ops, fold.test).accuracy;
      fr.train_embeddings = dump_embeddings(model, dataset, ops, fold.train,
                                            model.uses_class_state() ? ForwardMode::TrueLabel : ForwardMode::Eval);
      fr.test_embeddings = dump_embeddings(model, dataset, ops, fold.test, ForwardMode::Eval);
      nlohmann::json states = nlohmann::json::array();
      for (const Site& s : model.sites()) states.push_back(s.state.summary_json());
      fr.class_states = std::move(states);
      result.folds.push_back(std::move(fr));
    } catch (const Error&) {
      rethrow_with_context("fold " + std::to_string(k) + ": ");
    }
  }

  std::vector<double> acc, epochs;
  for (const auto& f : result.folds) {
    acc.push_back(f.test_accuracy);
    epochs.push_back(static_cast<double>(f.stop_epoch));
  }
  std::tie(result.mean_accuracy, result.std_accuracy) = mean_std(acc);
  std::tie(result.mean_epochs, result.std_epochs) = mean_std(epochs);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (options.output_dir) write_run_outputs(result, *options.output_dir);
  return result;
}

}  // namespace care::train
