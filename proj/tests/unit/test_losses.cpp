#include "care/error.hpp"
#include "care/log.hpp"
#include "care/losses.hpp"
#include "care/refiner.hpp"

#include "doctest.h"
#include "gradcheck.hpp"

#include <cmath>

using namespace care;
using namespace care::loss;
using care::diff::Matrix;
using care::diff::Tape;
using care::testing::random_matrix;

namespace {

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Index>(v.size()));
  Index k = 0;
  for (double x : v) m(0, k++) = x;
  return m;
}

Tensor scalar(Tape& t, double v) { return t.constant(Matrix::Constant(1, 1, v)); }

/// Silences the warning channel for the lifetime of the guard.
struct QuietWarnings {
  WarningSink previous = set_warning_sink({});
  ~QuietWarnings() { set_warning_sink(previous); }
};

double cosine_oracle(const Matrix& u, const Matrix& v) {
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (Index k = 0; k < u.cols(); ++k) {
    dot += u(0, k) * v(0, k);
    nu += u(0, k) * u(0, k);
    nv += v(0, k) * v(0, k);
  }
  return dot / (std::sqrt(nu) * std::sqrt(nv) + 1e-12);
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("intra-class examples") {
    Tape t;
    const auto a = t.constant(row({1, 0}));
    const auto b = t.constant(row({0, 1}));
    std::vector<Member> same = {{a, a, 0}, {b, b, 1}};
    CHECK(intra_class_loss(same).scalar() == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<Member> orth = {{a, b, 0}, {b, a, 1}};
    CHECK(intra_class_loss(orth).scalar() == doctest::Approx(0.0));
    std::vector<Member> mixed = {{a, a, 0}, {b, a, 0}, {b, b, 1}};
    CHECK(intra_class_loss(mixed).scalar() == doctest::Approx(0.75).epsilon(1e-12));
    CHECK_THROWS_AS(intra_class_loss(std::span<const Member>{}), DomainError);
  }

  TEST_CASE("intra-class loss matches a nested-average oracle") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      Tape t;
      std::vector<Member> batch;
      std::vector<Matrix> hc = {random_matrix(1, 4, rng), random_matrix(1, 4, rng), random_matrix(1, 4, rng)};
      std::vector<std::vector<double>> sims(3);
      const int n = 1 + trial % 9;
      for (int k = 0; k < n; ++k) {
        const Index label = (k * 7 + trial) % 3;
        const Matrix sub = random_matrix(1, 4, rng);
        batch.push_back({t.constant(sub), t.constant(hc[label]), label});
        sims[label].push_back(cosine_oracle(hc[label], sub));
      }
      double outer = 0.0;
      int present = 0;
      for (const auto& s : sims) {
        if (s.empty()) continue;
        double inner = 0.0;
        for (double v : s) inner += v;
        outer += inner / static_cast<double>(s.size());
        ++present;
      }
      const double got = intra_class_loss(batch).scalar();
      CHECK(got == doctest::Approx(outer / present).epsilon(1e-12));
      CHECK(got >= -1.0);
      CHECK(got <= 1.0);
    }
  }

  TEST_CASE("inter-class examples") {
    Tape t;
    std::vector<Tensor> orth = {t.constant(row({1, 0})), t.constant(row({0, 1}))};
    CHECK(inter_class_loss(t, orth).scalar() == doctest::Approx(0.0));
    std::vector<Tensor> same = {t.constant(row({2, 3})), t.constant(row({2, 3}))};
    CHECK(inter_class_loss(t, same).scalar() == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<Tensor> three = {t.constant(row({1, 0})), t.constant(row({1, 0})), t.constant(row({0, 1}))};
    CHECK(inter_class_loss(t, three).scalar() == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    QuietWarnings quiet;
    const std::size_t before = warning_count();
    std::vector<Tensor> one = {t.constant(row({1, 0}))};
    CHECK(inter_class_loss(t, one).scalar() == 0.0);
    CHECK(warning_count() == before + 1);
  }

  TEST_CASE("class loss examples and bounds") {
    Tape t;
    CHECK(class_loss(scalar(t, 0.3), scalar(t, 0.3), 1.0).scalar() == doctest::Approx(1.0));
    CHECK(class_loss(scalar(t, 1.0), scalar(t, 0.0), 1.0).scalar() == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(std::exp(-1.0) == doctest::Approx(0.36788).epsilon(1e-5));
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> cosr(-1.0, 1.0), lam(0.0, 3.0);
    for (int trial = 0; trial < 1000; ++trial) {
      const double l1 = lam(rng);
      const double v = class_loss(scalar(t, cosr(rng)), scalar(t, cosr(rng)), l1).scalar();
      CHECK(v >= std::exp(-1.0 - l1) * (1 - 1e-12));
      CHECK(v <= std::exp(1.0 + l1) * (1 + 1e-12));
    }
    for (double inter = 0.9; inter > -1.0; inter -= 0.1) {
      const double hi = class_loss(scalar(t, 0.2), scalar(t, inter), 1.0).scalar();
      const double lo = class_loss(scalar(t, 0.2), scalar(t, inter - 0.1), 1.0).scalar();
      CHECK(lo < hi);
    }
  }

  TEST_CASE("total loss designs") {
    Tape t;
    ClassTerms terms{scalar(t, 0.4), scalar(t, 0.2), scalar(t, 1.0)};
    const auto l_cls = scalar(t, 0.7);
    LossConfig c;
    CHECK(total_loss(l_cls, terms, c).scalar() == doctest::Approx(1.7));
    c.lambda2 = 0.0;
    CHECK(total_loss(l_cls, terms, c).scalar() == 0.7);
    c.lambda2 = 2.0;
    c.design = Design::Cls;
    CHECK(total_loss(l_cls, terms, c).scalar() == 0.7);
    c.design = Design::Intra;
    CHECK(total_loss(l_cls, terms, c).scalar() == doctest::Approx(0.7 - 2.0 * std::exp(0.4)));
    c.design = Design::Inter;
    CHECK(total_loss(l_cls, terms, c).scalar() == doctest::Approx(0.7 + 2.0 * std::exp(0.2)));
    c.design = Design::Combine;
    c.mode = ClassLossMode::Off;
    CHECK(total_loss(l_cls, terms, c).scalar() == 0.7);
    c.mode = ClassLossMode::Cosine;
    CHECK(total_loss(l_cls, std::nullopt, c).scalar() == 0.7);
  }

  TEST_CASE("design cls is bit-identical to the cross-entropy") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      Tape t;
      const auto logits = t.variable(random_matrix(1, 3, rng));
      const auto ce = diff::softmax_cross_entropy(logits, trial % 3);
      ClassTerms terms{scalar(t, 0.5), scalar(t, -0.2), scalar(t, 3.0)};
      LossConfig c;
      c.design = Design::Cls;
      const auto total = total_loss(ce, terms, c);
      CHECK(total.scalar() == ce.scalar());
      t.backward(total);
      const Matrix g = logits.grad();
      Tape t2;
      const auto logits2 = t2.variable(logits.value());
      t2.backward(diff::softmax_cross_entropy(logits2, trial % 3));
      CHECK(g == logits2.grad());
    }
  }

  TEST_CASE("L2 class loss examples") {
    Tape t;
    const auto origin = t.constant(row({0, 0}));
    const auto far = t.constant(row({2, 0}));
    LossConfig c;
    c.mode = ClassLossMode::L2;
    std::vector<Member> on_centroids = {{origin, origin, 0}, {far, far, 1}};
    std::vector<Tensor> reps = {origin, far};
    const ClassTerms terms = class_terms(t, on_centroids, reps, c);
    CHECK(terms.intra.scalar() == 0.0);
    CHECK(terms.inter.scalar() == doctest::Approx(2.0));
    CHECK(terms.class_loss.scalar() == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
    CHECK(terms.class_loss.scalar() == doctest::Approx(0.13534).epsilon(1e-4));

    std::vector<Member> coincident = {{origin, origin, 0}, {origin, origin, 1}};
    std::vector<Tensor> same = {origin, origin};
    CHECK(class_terms(t, coincident, same, c).class_loss.scalar() == 1.0);

    double previous = 0.0;
    for (double d = 3.0; d > 0.0; d -= 0.25) {
      const auto p = t.constant(row({d, 0}));
      std::vector<Member> batch = {{origin, origin, 0}, {p, p, 1}};
      std::vector<Tensor> r = {origin, p};
      const double v = class_terms(t, batch, r, c).class_loss.scalar();
      CHECK(v > previous);
      previous = v;
    }
  }

  TEST_CASE("L2 max normalisation") {
    Tape t;
    const auto a = t.constant(row({0, 0}));
    const auto b = t.constant(row({3, 0}));
    const auto c3 = t.constant(row({0, 1}));
    std::vector<Tensor> reps = {a, b, c3};
    const double mean = l2_inter_loss(t, reps, L2Norm::Mean).scalar();
    const double max = l2_inter_loss(t, reps, L2Norm::Max).scalar();
    CHECK(mean == doctest::Approx((3.0 + 1.0 + std::sqrt(10.0)) / 3.0));
    CHECK(max == doctest::Approx((3.0 + 1.0 + std::sqrt(10.0)) / (3.0 * std::sqrt(10.0))));
    std::vector<Member> batch = {{b, a, 0}, {c3, a, 0}};
    CHECK(l2_intra_loss(batch, L2Norm::Max).scalar() == doctest::Approx((1.0 + 1.0 / 3.0) / 2.0));
  }

  TEST_CASE("configuration validation and names") {
    LossConfig c;
    CHECK(c.lambda1 == 1.0);
    CHECK(c.lambda2 == 1.0);
    CHECK_NOTHROW(c.validate());
    c.lambda1 = -0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.lambda1 = 1.0;
    c.lambda2 = std::nan("");
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.lambda2 = 1.0;
    c.mode = ClassLossMode::L2;
    c.design = Design::Intra;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.design = Design::Combine;
    CHECK_NOTHROW(c.validate());
    for (auto d : {Design::Cls, Design::Intra, Design::Inter, Design::Combine}) CHECK(parse_design(to_string(d)) == d);
    for (auto m : {ClassLossMode::Cosine, ClassLossMode::L2, ClassLossMode::Off}) {
      CHECK(parse_class_loss_mode(to_string(m)) == m);
    }
    CHECK_THROWS_AS(parse_design("both"), ConfigError);
    CHECK_THROWS_AS(parse_class_loss_mode("dot"), ConfigError);
  }

  TEST_CASE("gradient through class loss, refiner and encoder") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      const Index m = 3;
      diff::Parameter enc("enc", random_matrix(2, m, rng));
      ref::RefinerWeights w("r", m, rng);
      const std::vector<Matrix> x = {random_matrix(3, 2, rng), random_matrix(4, 2, rng)};
      const std::vector<Index> labels = {0, 1};
      ref::ClassState base(2, m);
      base.update_bag(0, random_matrix(1, m, rng));
      base.update_bag(1, random_matrix(1, m, rng));
      ref::refresh_class_representations(base, w);
      ref::ClassState state = base;
      LossConfig cfg;
      cfg.lambda1 = 0.5 + 0.1 * static_cast<double>(seed);
      auto f = [&](Tape& t, diff::ParameterBinding& b) {
        std::vector<Member> members;
        std::vector<Tensor> latest(2);
        for (std::size_t g = 0; g < x.size(); ++g) {
          const Tensor h = diff::tanh(diff::matmul(t.constant(x[g]), b(enc)));
          const Tensor hg = diff::mean_rows(h);
          const auto out = ref::refiner_step(hg, hg, labels[g], state, w, b);
          members.push_back({out.hg_sub, out.hc, labels[g]});
          latest[static_cast<std::size_t>(labels[g])] = out.hc;
        }
        const ClassTerms terms = class_terms(t, members, latest, cfg);
        return total_loss(scalar(t, 0.0), terms, cfg);
      };
      std::vector<diff::Parameter*> params = {&enc};
      for (auto* p : w.parameters()) params.push_back(p);
      const double e = care::testing::check_parameters(f, params, [&] { state = base; });
      CHECK(e < 1e-4);
      CHECK(enc.grad().norm() > 0.0);
    }
  }
}
