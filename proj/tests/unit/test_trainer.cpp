#include "care/error.hpp"
#include "care/log.hpp"
#include "care/trainer.hpp"

#include "composed.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

using namespace care;
using namespace care::train;
using care::testing::random_graph;
using care::testing::random_matrix;
namespace fs = std::filesystem;

namespace {

Matrix relu(const Matrix& m) { return m.cwiseMax(0.0); }

Matrix add_bias(const Matrix& x, const Matrix& b) { return x.rowwise() + Eigen::RowVectorXd(b.row(0)); }

Matrix mlp_oracle(const ref::Mlp& f, const Matrix& x) {
  return add_bias(relu(add_bias(x * f.w1.value(), f.b1.value())) * f.w2.value(), f.b2.value());
}

double cosine_oracle(const Matrix& u, const Matrix& v) {
  return u.cwiseProduct(v).sum() / (u.norm() * v.norm() + 1e-12);
}

graph::Dataset toy_dataset(std::size_t graphs, Index feature_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  graph::Dataset ds;
  ds.name = "TOY";
  ds.class_count = 2;
  ds.class_values = {0, 1};
  ds.feature_dim = feature_dim;
  for (std::size_t g = 0; g < graphs; ++g) {
    graph::GraphRecord r;
    r.adjacency = random_graph(3 + static_cast<Index>(g % 4), rng);
    r.features = care::testing::random_away_from_zero(r.adjacency.rows(), feature_dim, rng);
    r.label = static_cast<int>(g % 2);
    ds.graphs.push_back(std::move(r));
  }
  return ds;
}

graph::Dataset tiny_dataset() { return graph::parse_tudataset(fs::path(CARE_TEST_DATA) / "TINY", "TINY"); }

ModelConfig small_config() {
  ModelConfig c;
  c.hidden = 6;
  c.depth = 2;
  c.batch_size = 4;
  c.lr = 0.01;
  c.max_epochs = 4;
  c.patience = 2;
  c.seed = 3;
  return c;
}

std::vector<Index> iota(std::size_t n) {
  std::vector<Index> v(n);
  for (std::size_t k = 0; k < n; ++k) v[k] = static_cast<Index>(k);
  return v;
}

struct QuietWarnings {
  WarningSink previous = set_warning_sink({});
  ~QuietWarnings() { set_warning_sink(previous); }
};

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("global GCN forward matches a scripted composition") {
    const graph::Dataset ds = toy_dataset(4, 3, 11);
    ModelConfig c = small_config();
    std::mt19937_64 init(5);
    Model model(c, 3, 2, init);
    Site& site = model.sites().front();
    std::mt19937_64 rng(6);
    site.state.set_hc(0, random_matrix(1, c.hidden, rng));
    site.state.set_hc(1, random_matrix(1, c.hidden, rng));
    const auto ops = prepare_operators(ds);
    for (std::size_t g = 0; g < ds.graphs.size(); ++g) {
      const Matrix& a = ds.graphs[g].adjacency;
      const Matrix a_hat = graph::normalize_adjacency(a);
      Matrix h = ds.graphs[g].features;
      for (const auto& layer : model.encoder().layers()) h = relu(a_hat * h * layer.w.value());
      const Matrix hg = h.colwise().mean();
      const Matrix scores = a_hat * h * site.score.value();
      std::vector<Index> order = iota(static_cast<std::size_t>(a.rows()));
      std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return scores(x, 0) > scores(y, 0); });
      const auto k = static_cast<std::size_t>(std::ceil(0.5 * static_cast<double>(a.rows())));
      order.resize(k);
      std::sort(order.begin(), order.end());
      Matrix sub = Matrix::Zero(1, c.hidden);
      for (Index v : order) sub += h.row(v) * std::tanh(scores(v, 0));
      sub /= static_cast<double>(k);
      const Index chosen = cosine_oracle(sub, site.state.hc(1)) > cosine_oracle(sub, site.state.hc(0)) ? 1 : 0;
      Matrix cat(1, 2 * c.hidden);
      cat << hg, site.state.hc(chosen);
      const Matrix refined = mlp_oracle(site.refiner.trans, cat);
      const Matrix logits = add_bias(refined * model.head_weight().value(), model.head_bias().value());

      diff::Tape tape(false);
      diff::ParameterBinding bind(tape);
      const ForwardOutput out = forward_graph(model, ops[g], bind, ForwardMode::Eval, std::nullopt);
      CHECK(out.logits.rows() == 1);
      CHECK(out.logits.cols() == 2);
      CHECK(out.sites.front().kept == order);
      CHECK(out.sites.front().chosen == chosen);
      CHECK((out.logits.value() - logits).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("baseline path depends only on encoder and head") {
    const graph::Dataset ds = toy_dataset(6, 3, 2);
    const auto ops = prepare_operators(ds);
    for (auto kind : {enc::LayerKind::Gcn, enc::LayerKind::Sage, enc::LayerKind::Gin}) {
      ModelConfig c = small_config();
      c.backbone = kind;
      c.care_enabled = false;
      std::mt19937_64 init(9);
      Model model(c, 3, 2, init);
      CHECK(model.sites().empty());
      CHECK(model.parameters().size() == model.encoder().parameters().size() + 2);
      for (std::size_t g = 0; g < ops.size(); ++g) {
        diff::Tape tape(false);
        diff::ParameterBinding bind(tape);
        const ForwardOutput out = forward_graph(model, ops[g], bind, ForwardMode::Eval, std::nullopt);
        const enc::GraphTensors gt = enc::bind(tape, ops[g]);
        const Tensor emb = enc::readout(model.encoder().forward(bind, gt).back(), enc::default_readout(kind));
        const Matrix logits = add_bias(emb.value() * model.head_weight().value(), model.head_bias().value());
        CHECK(out.logits.value() == logits);
        CHECK(out.sites.empty());
      }
    }
  }

  TEST_CASE("hierarchical models have one site per layer") {
    ModelConfig c = small_config();
    c.backbone = enc::LayerKind::Gin;
    c.architecture = Architecture::Hierarchical;
    c.depth = 3;
    std::mt19937_64 init(1);
    Model model(c, 3, 2, init);
    CHECK(model.sites().size() == 3);
    c.backbone = enc::LayerKind::Gcn;
    CHECK_THROWS_AS(Model(c, 3, 2, init), ConfigError);
  }

  TEST_CASE("care with a frozen left-projection refiner and lambda2 = 0 reproduces the baseline") {
    const graph::Dataset ds = tiny_dataset();
    const auto ops = prepare_operators(ds);
    const std::vector<Index> train = iota(ds.graphs.size());
    ModelConfig off = small_config();
    off.care_enabled = false;
    ModelConfig on = small_config();
    on.loss.lambda2 = 0.0;
    std::mt19937_64 init_a(21), init_b(21);
    Model a(off, ds.feature_dim, ds.class_count, init_a);
    Model b(on, ds.feature_dim, ds.class_count, init_b);
    for (Site& s : b.sites()) {
      s.refiner.trans.set_left_projection();
      s.refiner.trans.set_trainable(false);
    }
    auto adam_a = diff::make_adam_state(a.parameters(), diff::AdamOptions{off.lr});
    auto adam_b = diff::make_adam_state(b.parameters(), diff::AdamOptions{on.lr});
    std::mt19937_64 shuffle_a(4), shuffle_b(4);
    QuietWarnings quiet;
    for (int epoch = 0; epoch < 3; ++epoch) {
      const EpochStats sa = train_epoch(a, ds, ops, train, adam_a, shuffle_a);
      const EpochStats sb = train_epoch(b, ds, ops, train, adam_b, shuffle_b);
      CHECK(sa.l_cls == sb.l_cls);
      CHECK(sa.train_acc == sb.train_acc);
    }
    CHECK(a.head_weight().value() == b.head_weight().value());
    CHECK(a.encoder().layers().front().w.value() == b.encoder().layers().front().w.value());
  }

  TEST_CASE("a single graph is overfit with strictly decreasing loss") {
    graph::Dataset ds = toy_dataset(2, 3, 8);
    const auto ops = prepare_operators(ds);
    const std::vector<Index> train = {0};
    for (bool care_on : {false, true}) {
      ModelConfig c = small_config();
      c.care_enabled = care_on;
      c.lr = 1e-3;
      std::mt19937_64 init(2), shuffle(3);
      Model model(c, 3, 2, init);
      auto adam = diff::make_adam_state(model.parameters(), diff::AdamOptions{c.lr});
      QuietWarnings quiet;
      double previous = std::numeric_limits<double>::infinity();
      for (int epoch = 0; epoch < 50; ++epoch) {
        const EpochStats s = train_epoch(model, ds, ops, train, adam, shuffle);
        CHECK(s.l_cls < previous);
        previous = s.l_cls;
      }
    }
  }

  TEST_CASE("epoch batch count") {
    const graph::Dataset ds = toy_dataset(23, 3, 4);
    const auto ops = prepare_operators(ds);
    for (int bs : {1, 4, 5, 20, 23, 40}) {
      ModelConfig c = small_config();
      c.batch_size = bs;
      std::mt19937_64 init(1), shuffle(2);
      Model model(c, 3, 2, init);
      auto adam = diff::make_adam_state(model.parameters(), diff::AdamOptions{c.lr});
      const std::vector<Index> train = iota(17);
      const EpochStats s = train_epoch(model, ds, ops, train, adam, shuffle);
      CHECK(s.batches == (17 + static_cast<std::size_t>(bs) - 1) / static_cast<std::size_t>(bs));
      CHECK(adam.step == static_cast<std::uint64_t>(s.batches));
    }
  }

  TEST_CASE("evaluation is pure and repeatable") {
    const graph::Dataset ds = tiny_dataset();
    const auto ops = prepare_operators(ds);
    const std::vector<Index> all = iota(ds.graphs.size());
    ModelConfig c = small_config();
    std::mt19937_64 init(1), shuffle(2);
    Model model(c, ds.feature_dim, ds.class_count, init);
    CHECK_THROWS_AS(evaluate(model, ds, ops, all), ConfigError);
    auto adam = diff::make_adam_state(model.parameters(), diff::AdamOptions{c.lr});
    train_epoch(model, ds, ops, all, adam, shuffle);
    const std::uint64_t before = model.hash();
    const EvalResult r1 = evaluate(model, ds, ops, all);
    const EvalResult r2 = evaluate(model, ds, ops, all);
    CHECK(model.hash() == before);
    CHECK(r1.accuracy == r2.accuracy);
    CHECK(r1.mean_loss == r2.mean_loss);
    CHECK(r1.predictions == r2.predictions);
    CHECK(model.sites().front().state.mode() == ref::StateMode::Train);
  }

  TEST_CASE("a perfect classifier scores 1") {
    graph::Dataset ds;
    ds.class_count = 2;
    ds.feature_dim = 2;
    for (int g = 0; g < 4; ++g) {
      graph::GraphRecord r;
      r.adjacency = Matrix::Zero(2, 2);
      r.adjacency(0, 1) = r.adjacency(1, 0) = 1.0;
      r.features = Matrix::Zero(2, 2);
      r.features.col(g % 2).setOnes();
      r.label = g % 2;
      ds.graphs.push_back(r);
    }
    ModelConfig c = small_config();
    c.care_enabled = false;
    c.depth = 1;
    c.hidden = 2;
    std::mt19937_64 init(1);
    Model model(c, 2, 2, init);
    model.encoder().layers().front().w.value() = Matrix::Identity(2, 2);
    model.head_weight().value() = Matrix::Identity(2, 2);
    model.head_bias().value().setZero();
    const auto ops = prepare_operators(ds);
    const std::vector<Index> all = iota(4);
    CHECK(evaluate(model, ds, ops, all).accuracy == 1.0);
  }

  TEST_CASE("majority predictor on MUTAG") {
    const fs::path dir = fs::path(CARE_DATA_DIR) / "MUTAG";
    if (!fs::exists(dir)) {
      MESSAGE("MUTAG not present; skipped");
      return;
    }
    const graph::Dataset ds = graph::parse_tudataset(dir, "MUTAG");
    std::map<int, std::size_t> counts;
    for (const auto& g : ds.graphs) ++counts[g.label];
    std::size_t majority = 0;
    for (const auto& [label, n] : counts) majority = std::max(majority, n);
    const double acc = static_cast<double>(majority) / static_cast<double>(ds.graphs.size());
    CHECK(acc == doctest::Approx(125.0 / 188.0));
    CHECK(std::abs(acc - 0.665) < 0.001);
  }

  TEST_CASE("early stopping patience") {
    EarlyStopping s(25, 1000);
    CHECK(!s.update(1, 1.0));
    CHECK(!s.update(2, 0.9));
    int stop = 0;
    for (int epoch = 3; epoch <= 100; ++epoch) {
      if (s.update(epoch, 0.9 + (epoch % 2 == 0 ? 0.0 : 0.05))) {
        stop = epoch;
        break;
      }
    }
    CHECK(stop == 27);
    CHECK(s.best_epoch() == 2);
    CHECK(s.best_loss() == 0.9);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> loss(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
      const int patience = 1 + trial % 30;
      const int max_epochs = 1 + trial % 57;
      EarlyStopping e(patience, max_epochs);
      int epoch = 1;
      while (!e.update(epoch, loss(rng))) ++epoch;
      CHECK(epoch <= max_epochs);
      CHECK((epoch == max_epochs || epoch - e.best_epoch() == patience));
    }
    CHECK_THROWS_AS(EarlyStopping(0, 10), ConfigError);
  }

  TEST_CASE("checkpoint save, load and restore") {
    const graph::Dataset ds = tiny_dataset();
    const auto ops = prepare_operators(ds);
    const std::vector<Index> all = iota(ds.graphs.size());
    ModelConfig c = small_config();
    std::mt19937_64 init(1), shuffle(2);
    Model model(c, ds.feature_dim, ds.class_count, init);
    auto adam = diff::make_adam_state(model.parameters(), diff::AdamOptions{c.lr});
    train_epoch(model, ds, ops, all, adam, shuffle);
    const std::uint64_t h = model.hash();
    const Checkpoint cp = capture(model, 1);
    const fs::path path = fs::temp_directory_path() / "care_unit_checkpoint.json";
    save_checkpoint(cp, path);
    const Checkpoint back = load_checkpoint(path);
    train_epoch(model, ds, ops, all, adam, shuffle);
    CHECK(model.hash() != h);
    restore(model, back);
    CHECK(model.hash() == h);
    CHECK(back.epoch == 1);

    Checkpoint bad = cp;
    bad.values.front() = Matrix::Zero(1, 1);
    CHECK_THROWS(restore(model, bad));
    std::ofstream(path) << "{\"format\": \"other\"}";
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  }

  TEST_CASE("cross-validation is deterministic and its summary is consistent") {
    const graph::Dataset ds = tiny_dataset();
    ModelConfig c = small_config();
    c.max_epochs = 3;
    QuietWarnings quiet;
    const RunResult a = run_cv(ds, c);
    const RunResult b = run_cv(ds, c);
    CHECK(a.to_json() == b.to_json());
    REQUIRE(a.folds.size() == 10);
    std::vector<double> acc;
    for (const auto& f : a.folds) {
      acc.push_back(f.test_accuracy);
      CHECK(f.stop_epoch <= c.max_epochs);
      CHECK(f.best_epoch <= f.stop_epoch);
      CHECK(static_cast<int>(f.trace.size()) == f.stop_epoch);
      double best = std::numeric_limits<double>::infinity();
      for (const auto& r : f.trace) best = std::min(best, r.val_loss);
      CHECK(f.best_val_loss == best);
    }
    double mean = 0.0;
    for (double v : acc) mean += v;
    mean /= static_cast<double>(acc.size());
    double var = 0.0;
    for (double v : acc) var += (v - mean) * (v - mean);
    CHECK(std::abs(a.mean_accuracy - mean) < 1e-9);
    CHECK(std::abs(a.std_accuracy - std::sqrt(var / static_cast<double>(acc.size()))) < 1e-9);
    const auto j = a.to_json();
    CHECK(j.contains("fold_accuracies"));
    CHECK(j.contains("mean_epochs"));
    CHECK(!j.contains("wall_seconds"));

    c.seed = 4;
    CHECK(run_cv(ds, c).to_json() != a.to_json());
  }

  TEST_CASE("fold generators are independent streams") {
    auto a = fold_rng(1, 0, 0);
    auto b = fold_rng(1, 0, 1);
    auto c = fold_rng(1, 1, 0);
    auto a2 = fold_rng(1, 0, 0);
    const auto va = a();
    CHECK(va == a2());
    CHECK(va != b());
    CHECK(va != c());
  }

  TEST_CASE("composed training loss gradient") {
    for (std::uint64_t seed = 0; seed < 48; seed += 5) {
      CAPTURE(seed);
      CHECK(care::testing::composed_gradient_error(seed) < 1e-4);
    }
  }
}
