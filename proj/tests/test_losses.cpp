#include "doctest.h"

#include <cmath>
#include <limits>
#include <numbers>

#include "idenbat/losses.hpp"
#include "support.hpp"

using namespace idenbat;

namespace {

Var<double> filled(Shape s, double v) { return Var<double>(Tensor<double>(std::move(s), v)); }
Var<double> scalar(double v) { return filled({1}, v); }

GeneratorTerms<double> unit_terms(double v) {
  GeneratorTerms<double> t;
  t.adv = t.age1 = t.age2 = t.cyc = t.rec = scalar(v);
  t.iden = scalar(v);
  return t;
}

FeatureStack<double> onehot_stack(Index hot, double sign = 1) {
  Tensor<double> t({2, 3, 2});
  for (Index n = 0; n < 2; ++n) t[n * 6 + hot] = sign;
  return {Var<double>(t)};
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("feature cosine extremes") {
  std::mt19937_64 rng(1);
  const FeatureStack<double> v{Var<double>(testing::random_tensor({3, 2, 4, 4}, rng)),
                               Var<double>(testing::random_tensor({3, 4, 2, 2}, rng))};
  FeatureStack<double> neg;
  for (const auto& f : v) neg.push_back(scale(f, -1.0));
  CHECK(feature_cosine(v, v).item() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(feature_cosine(v, neg).item() == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(feature_cosine(onehot_stack(0), onehot_stack(4)).item() == 0.0);
  CHECK_THROWS_AS(feature_cosine(v, FeatureStack<double>{v[0]}), ShapeError);

  // Direct evaluation: mean over levels of the mean per-sample cosine.
  const FeatureStack<double> w{Var<double>(testing::random_tensor({3, 2, 4, 4}, rng)),
                               Var<double>(testing::random_tensor({3, 4, 2, 2}, rng))};
  double expected = 0;
  for (std::size_t l = 0; l < 2; ++l) {
    const Index per = v[l].value().sample_size();
    for (Index n = 0; n < 3; ++n) {
      const auto a = v[l].value().data().segment(n * per, per), b = w[l].value().data().segment(n * per, per);
      expected += (a * b).sum() / std::sqrt(a.square().sum() * b.square().sum()) / 6.0;
    }
  }
  CHECK(feature_cosine(v, w).item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("identity loss closed forms") {
  const auto a = onehot_stack(0), b = onehot_stack(1);
  CHECK(identity_loss(a, a, b).item() == doctest::Approx(-1.0));
  CHECK(identity_loss(a, b, a).item() == doctest::Approx(1.0));
  CHECK(identity_loss(a, b, onehot_stack(0, -1)).item() == doctest::Approx(1.0));
  CHECK(identity_loss(a, a, b, {false, true}).item() == doctest::Approx(0.0));
  CHECK(identity_loss(a, a, a, {true, false}).item() == doctest::Approx(-1.0));
  CHECK(identity_loss(a, a, a, {false, false}).item() == 0.0);

  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureStack<double> x{Var<double>(testing::random_tensor({2, 3, 4}, rng))};
    const FeatureStack<double> y{Var<double>(testing::random_tensor({2, 3, 4}, rng))};
    const FeatureStack<double> z{Var<double>(testing::random_tensor({2, 3, 4}, rng))};
    const double direct = -feature_cosine(x, y).item() + std::abs(feature_cosine(x, z).item());
    const double got = identity_loss(x, y, z).item();
    CHECK(got == doctest::Approx(direct).epsilon(1e-12));
    CHECK(got >= -2.0);
    CHECK(got <= 2.0);
  }
}

TEST_CASE("similarity term blocks gradient into its target branch") {
  std::mt19937_64 rng(3);
  Var<double> iden(testing::random_tensor({2, 6}, rng), true), hat(testing::random_tensor({2, 6}, rng), true);
  identity_loss<double>({iden}, {hat}, {Var<double>(testing::random_tensor({2, 6}, rng))}, {true, false}).backward();
  CHECK(!iden.has_grad());
  CHECK(hat.has_grad());
}

TEST_CASE("cycle and reconstruction losses") {
  CHECK(cycle_loss(filled({2, 1, 4, 4}, 0.3), filled({2, 1, 4, 4}, 0.3)).item() == 0.0);
  CHECK(cycle_loss(filled({2, 1, 4, 4}, 0.0), filled({2, 1, 4, 4}, 1.0)).item() == 1.0);
  Tensor<double> half({2, 1, 4, 4});
  for (Index i = 0; i < half.size(); i += 2) half[i] = 0.5;
  CHECK(cycle_loss(filled({2, 1, 4, 4}, 0.0), Var<double>(half)).item() == doctest::Approx(0.25));

  CHECK(rec_weight(60, 60, 0.5, 33) == 1.0);
  CHECK(rec_weight(60, 60, 0.0, 33) == 1.0);
  CHECK(rec_weight(50, 66.5, 0.5, 33) == doctest::Approx(0.5).epsilon(1e-12));
  const double far = rec_weight(48, 80, 0.5, 33);
  CHECK(far == doctest::Approx(0.5 * std::cos(std::numbers::pi * 32 / 33) + 0.5).epsilon(1e-12));
  CHECK(std::abs(far - 0.00226) <= 5e-6);
  for (double beta : {0.0, 0.1, 0.25, 0.5}) {
    double prev = 1.0;
    for (double gap = 0; gap <= 33; gap += 0.5) {
      const double w = rec_weight(48, 48 + gap, beta, 33);
      CHECK(w <= prev + 1e-15);
      CHECK(w >= 0.0);
      prev = w;
    }
  }

  const LossWeights lw;
  CHECK(rec_loss(filled({2, 1, 4, 4}, 0.5), filled({2, 1, 4, 4}, 0.5), {60, 60}, {70, 50}, lw).item() == 0.0);
  CHECK(rec_loss(filled({2, 1, 4, 4}, 0.5), filled({2, 1, 4, 4}, 0.7), {60, 61}, {60, 61}, lw).item() == doctest::Approx(0.04));
  // Weight 0.5 at a gap of r/2, MSE 0.02.
  const double d = std::sqrt(0.02);
  CHECK(rec_loss(filled({1, 1, 4, 4}, 0.2), filled({1, 1, 4, 4}, 0.2 + d), {50}, {66.5}, lw).item() == doctest::Approx(0.01));
}

TEST_CASE("least-squares adversarial losses") {
  const Shape s{2, 1, 4, 4};
  CHECK(adv_d_loss(filled(s, 1), filled(s, 0)).item() == 0.0);
  CHECK(adv_d_loss(filled(s, 0), filled(s, 1)).item() == 1.0);
  CHECK(adv_d_loss(filled(s, 0.5), filled(s, 0.5)).item() == doctest::Approx(0.25));
  CHECK(adv_g_loss(filled(s, 1)).item() == 0.0);
  CHECK(adv_g_loss(filled(s, 0)).item() == 1.0);
  CHECK(adv_g_loss(filled(s, 0.5)).item() == doctest::Approx(0.25));
}

TEST_CASE("total generator loss") {
  const LossWeights w;
  CHECK(total_generator_loss(unit_terms(1), w).item() == doctest::Approx(2.30));
  auto t = unit_terms(0);
  t.iden = scalar(-1);
  CHECK(total_generator_loss(t, w).item() == doctest::Approx(-1.0));
  LossWeights zero{0, 0, 0, 0, 0, 0.5, 33};
  CHECK(total_generator_loss(unit_terms(3), zero).item() == 0.0);
  auto no_iden = unit_terms(1);
  no_iden.iden.reset();
  CHECK(total_generator_loss(no_iden, w).item() == doctest::Approx(1.30));

  auto bad = unit_terms(1);
  bad.cyc = scalar(std::numeric_limits<double>::quiet_NaN());
  try {
    total_generator_loss(bad, w);
    FAIL("expected NonFiniteLoss");
  } catch (const NonFiniteLoss& e) {
    CHECK(e.term() == "L_cyc");
    CHECK(std::string(e.what()).find("L_cyc") != std::string::npos);
  }
  bad = unit_terms(1);
  bad.age2 = scalar(std::numeric_limits<double>::infinity());
  CHECK_THROWS_WITH_AS(total_generator_loss(bad, w), doctest::Contains("L_age2"), NonFiniteLoss);
  CHECK_THROWS((LossWeights{1, 1, 1, 1, 1, 0.7, 33}.validate()));
  CHECK_THROWS((LossWeights{-1, 1, 1, 1, 1, 0.5, 33}.validate()));
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(4);
  const auto rnd = [&](Shape s, double lo = -1, double hi = 1) {
    return Var<double>(testing::random_tensor(std::move(s), rng, lo, hi), true);
  };
  const LossWeights lw;

  auto x = rnd({2, 1, 4, 4}, 0, 1), y = rnd({2, 1, 4, 4}, 0, 1);
  CHECK(testing::gradcheck({x, y}, [](const auto& in) { return cycle_loss(in[0], in[1]); }).rel_error <= 1e-3);
  CHECK(testing::gradcheck({x, y}, [&](const auto& in) {
          return rec_loss(in[0], in[1], {50, 60}, {72, 61}, lw);
        }).rel_error <= 1e-3);

  auto real = rnd({2, 1, 3, 3}), fake = rnd({2, 1, 3, 3});
  CHECK(testing::gradcheck({real, fake}, [](const auto& in) { return adv_d_loss(in[0], in[1]); }).rel_error <= 1e-3);
  CHECK(testing::gradcheck({fake}, [](const auto& in) { return adv_g_loss(in[0]); }).rel_error <= 1e-3);

  auto a0 = rnd({2, 3, 4}), a1 = rnd({2, 2, 2}), b0 = rnd({2, 3, 4}), b1 = rnd({2, 2, 2});
  auto c0 = rnd({2, 3, 4}), c1 = rnd({2, 2, 2});
  // Only the live branches: the detached target receives no analytic gradient by design.
  const auto r = testing::gradcheck({b0, b1, c0, c1}, [&](const auto& in) {
    return identity_loss<double>({a0, a1}, {in[0], in[1]}, {in[2], in[3]});
  });
  CHECK(r.rel_error <= 1e-3);
  const auto r2 = testing::gradcheck({a0, a1}, [&](const auto& in) {
    return identity_loss<double>({in[0], in[1]}, {b0, b1}, {c0, c1}, {false, true});
  });
  CHECK(r2.rel_error <= 1e-3);
  CHECK(testing::gradcheck({a0, a1, b0, b1}, [](const auto& in) {
          return feature_cosine<double>({in[0], in[1]}, {in[2], in[3]});
        }).rel_error <= 1e-3);
}

TEST_CASE("loss values are non-negative where stated") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Var<double> x(testing::random_tensor({2, 1, 4, 4}, rng, 0, 1)), y(testing::random_tensor({2, 1, 4, 4}, rng, 0, 1));
    CHECK(cycle_loss(x, y).item() >= 0);
    CHECK(rec_loss(x, y, {48, 80}, {80, 48}, LossWeights{}).item() >= 0);
    CHECK(adv_d_loss(x, y).item() >= 0);
    CHECK(adv_g_loss(y).item() >= 0);
  }
}

}
