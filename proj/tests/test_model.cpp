#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "robustreg/model.hpp"

using namespace robustreg;

TEST_CASE("gaussian_design is deterministic in the seed") {
  RandomSource a(7, 0), b(7, 0);
  const Eigen::MatrixXd X1 = gaussian_design(2, 2, a);
  const Eigen::MatrixXd X2 = gaussian_design(2, 2, b);
  REQUIRE((X1.array() == X2.array()).all());
  CHECK_THROWS_AS(gaussian_design(0, 2, a), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_design(2, 0, a), std::invalid_argument);
}

TEST_CASE("gaussian_design column means calibrate against the normal CDF") {
  // binomial oracle: P(|mean of 1e4 normals| > 0.05) = 2*(1-Phi(5)) ~ 5.7e-7,
  // so over 100 seeds at least 99 must land inside
  int inside = 0;
  for (int seed = 0; seed < 100; ++seed) {
    RandomSource rng(static_cast<std::uint64_t>(seed), 0);
    const Eigen::MatrixXd X = gaussian_design(10000, 1, rng);
    if (std::abs(X.col(0).mean()) <= 0.05) ++inside;
  }
  CHECK(inside >= 99);
}

TEST_CASE("gaussian_design spectrum matches the eigenvalue oracle") {
  for (int seed = 0; seed < 50; ++seed) {
    RandomSource rng(static_cast<std::uint64_t>(1000 + seed), 0);
    const Eigen::MatrixXd X = gaussian_design(200, 5, rng);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X.transpose() * X / 200.0);
    REQUIRE(es.eigenvalues().minCoeff() >= 0.5);
    REQUIRE(es.eigenvalues().minCoeff() <= 1.5);
  }
}

TEST_CASE("make_noise basic constructions") {
  RandomSource rng(3, 0);
  NoiseSpec all_in;
  all_in.alpha = 1.0;
  all_in.inlier_law = InlierLaw::Zero;
  const auto z = make_noise(4, all_in, rng);
  CHECK(z.eta.isZero(0.0));
  CHECK(z.inlier_indices.size() == 4);

  NoiseSpec spike;
  spike.alpha = 0.5;
  spike.pattern = OutlierPattern::ConstantSpike;
  spike.pattern_param = 1e6;
  const auto s = make_noise(10, spike, rng);
  int small = 0, big = 0;
  for (int i = 0; i < 10; ++i) {
    if (std::abs(s.eta(i)) <= 1.0) ++small;
    if (std::abs(s.eta(i)) == 1e6) ++big;
  }
  CHECK(small == 5);
  CHECK(big == 5);
}

TEST_CASE("make_noise inlier count is exact") {
  RandomSource rng(5, 0);
  NoiseSpec spec;
  spec.alpha = 0.3;
  spec.pattern = OutlierPattern::ConstantSpike;
  spec.pattern_param = 1e6;
  const auto s = make_noise(100000, spec, rng);
  CHECK(s.inlier_indices.size() == 30000);
  int small = 0;
  for (Eigen::Index i = 0; i < s.eta.size(); ++i)
    if (std::abs(s.eta(i)) <= 1.0) ++small;
  CHECK(small >= 30000);
}

TEST_CASE("noise contract holds across patterns and laws") {
  RandomSource rng(8, 0);
  for (const auto pattern : {OutlierPattern::ConstantSpike, OutlierPattern::ScaledGaussian,
                             OutlierPattern::HeavyTail}) {
    for (const auto law : {InlierLaw::Zero, InlierLaw::UniformPm1, InlierLaw::Gaussian}) {
      NoiseSpec spec;
      spec.alpha = 0.4;
      spec.pattern = pattern;
      spec.pattern_param = pattern == OutlierPattern::HeavyTail ? 0.8 : 3.0;
      spec.inlier_law = law;
      spec.inlier_param = law == InlierLaw::Gaussian ? 0.5 : 0.0;
      const Eigen::Index n = 501;
      const auto s = make_noise(n, spec, rng);
      const auto m = static_cast<Eigen::Index>(std::ceil(spec.alpha * n));
      REQUIRE(static_cast<Eigen::Index>(s.inlier_indices.size()) == m);
      Eigen::Index small = 0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (std::abs(s.eta(i)) <= 1.0) ++small;
      REQUIRE(small >= m);
      for (const auto i : s.inlier_indices) REQUIRE(std::abs(s.eta(i)) <= 1.0);
    }
  }
}

TEST_CASE("fixed-prefix placement puts inliers first") {
  RandomSource rng(4, 0);
  NoiseSpec spec;
  spec.alpha = 0.25;
  spec.pattern = OutlierPattern::ConstantSpike;
  spec.pattern_param = 100.0;
  spec.placement = InlierPlacement::FixedPrefix;
  const auto s = make_noise(8, spec, rng);
  REQUIRE(s.inlier_indices == std::vector<Eigen::Index>{0, 1});
  CHECK(std::abs(s.eta(0)) <= 1.0);
  CHECK(std::abs(s.eta(1)) <= 1.0);
  for (int i = 2; i < 8; ++i) CHECK(std::abs(s.eta(i)) == 100.0);
}

TEST_CASE("heavy-tail outliers have magnitude at least one and both signs") {
  RandomSource rng(9, 0);
  NoiseSpec spec;
  spec.alpha = 0.01;
  spec.pattern = OutlierPattern::HeavyTail;
  spec.pattern_param = 1.0;
  const auto s = make_noise(2000, spec, rng);
  int pos = 0, neg = 0;
  for (Eigen::Index i = 0; i < s.eta.size(); ++i) {
    if (s.eta(i) == 0.0) continue;  // inlier slots
    REQUIRE(std::abs(s.eta(i)) >= 1.0);
    (s.eta(i) > 0 ? pos : neg)++;
  }
  CHECK(pos > 100);
  CHECK(neg > 100);
}

TEST_CASE("build_instance small cases") {
  {
    const Eigen::MatrixXd X = Eigen::MatrixXd::Identity(3, 3);
    const auto inst = build_instance(Eigen::VectorXd::Zero(3), X, Eigen::VectorXd::Zero(3));
    CHECK(inst.y.isZero(0.0));
  }
  {
    const Eigen::MatrixXd X = Eigen::MatrixXd::Identity(2, 2);
    Eigen::VectorXd beta(2);
    beta << 1, 2;
    const auto inst = build_instance(beta, X, Eigen::VectorXd::Zero(2));
    CHECK(inst.y(0) == 1.0);
    CHECK(inst.y(1) == 2.0);
  }
  {
    Eigen::MatrixXd X(2, 1);
    X << 1, 2;
    Eigen::VectorXd beta(1), eta(2);
    beta << 3;
    eta << 0.1, -0.1;
    const auto inst = build_instance(beta, X, eta);
    CHECK(inst.y(0) == Catch::Approx(3.1).margin(1e-15));
    CHECK(inst.y(1) == Catch::Approx(5.9).margin(1e-15));
  }
  Eigen::MatrixXd X(2, 2);
  X.setZero();
  CHECK_THROWS_AS(build_instance(Eigen::VectorXd::Zero(3), X, Eigen::VectorXd::Zero(2)),
                  std::invalid_argument);
}

TEST_CASE("instance validation rejects inconsistent truth") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Identity(2, 2);
  auto inst = build_instance(Eigen::VectorXd::Ones(2), X, Eigen::VectorXd::Zero(2));
  inst.validate();
  inst.y(0) += 1.0;
  CHECK_THROWS_AS(inst.validate(), std::invalid_argument);
}

TEST_CASE("symmetrize with unit signs and zero shifts is the identity") {
  Eigen::MatrixXd X(3, 2);
  X << 1, -2, 2, 1, -1, 1;
  Eigen::VectorXd beta(2), eta(3);
  beta << 2, -3;
  eta << 1, 0, -1;
  const auto inst = build_instance(beta, X, eta);
  const auto out = symmetrize_with(inst, Eigen::VectorXd::Ones(3), Eigen::VectorXd::Zero(3));
  REQUIRE((out.X.array() == inst.X.array()).all());
  REQUIRE((out.y.array() == inst.y.array()).all());
  REQUIRE((out.truth->eta.array() == inst.truth->eta.array()).all());
}

TEST_CASE("preprocess keeps the model identity bit-exact") {
  RandomSource rng(21, 0);
  const Eigen::MatrixXd X = gaussian_design(200, 3, rng);
  NoiseSpec spec;
  spec.alpha = 0.5;
  spec.pattern = OutlierPattern::ConstantSpike;
  spec.pattern_param = 1e6;
  const auto noise = make_noise(200, spec, rng);
  const auto inst = build_instance(random_beta(3, 5.0, rng), X, noise.eta);
  const auto out = preprocess_symmetrize(inst, rng);
  const Eigen::VectorXd resid = out.y - out.X * out.truth->beta_star;
  REQUIRE((resid.array() == out.truth->eta.array()).all());
  REQUIRE((out.truth->beta_star.array() == inst.truth->beta_star.array()).all());
}

TEST_CASE("preprocess symmetrizes the responses when beta is zero") {
  RandomSource rng(17, 0);
  const Eigen::Index n = 20001;
  const Eigen::MatrixXd X = gaussian_design(n, 1, rng);
  NoiseSpec spec;
  spec.alpha = 0.5;
  spec.pattern = OutlierPattern::ConstantSpike;
  spec.pattern_param = 1e6;
  const auto noise = make_noise(n, spec, rng);
  const auto inst = build_instance(Eigen::VectorXd::Zero(1), X, noise.eta);
  const auto out = preprocess_symmetrize(inst, rng);
  std::vector<double> ys(out.y.data(), out.y.data() + out.y.size());
  std::nth_element(ys.begin(), ys.begin() + n / 2, ys.end());
  // median concentration oracle: inlier density ~ alpha*phi(0) near zero
  CHECK(std::abs(ys[static_cast<std::size_t>(n / 2)]) < 0.1);
}

TEST_CASE("resample identity cases") {
  Eigen::MatrixXd X(3, 1);
  X << 1, 2, 4;
  Eigen::VectorXd beta(1), eta(3);
  beta << 2;
  eta << 1, -1, 0;
  const auto inst = build_instance(beta, X, eta);
  const auto same = resample_with(inst, {0, 1, 2}, Eigen::VectorXd::Ones(3));
  REQUIRE((same.X.array() == inst.X.array()).all());
  REQUIRE((same.y.array() == inst.y.array()).all());
  REQUIRE((same.truth->eta.array() == inst.truth->eta.array()).all());

  RegressionInstance one;
  one.X = X.topRows(1);
  one.y = inst.y.head(1);
  const auto kept = resample_with(one, {0}, Eigen::VectorXd::Ones(1));
  REQUIRE(kept.y(0) == one.y(0));
}

TEST_CASE("resample keeps shapes and the model identity") {
  RandomSource rng(31, 0);
  const Eigen::MatrixXd X = gaussian_design(50, 4, rng);
  NoiseSpec spec;
  spec.alpha = 0.6;
  spec.pattern = OutlierPattern::ScaledGaussian;
  spec.pattern_param = 10.0;
  const auto noise = make_noise(50, spec, rng);
  const auto inst = build_instance(random_beta(4, 2.0, rng), X, noise.eta);
  const auto out = resample_instance(inst, rng);
  REQUIRE(out.n() == 50);
  REQUIRE(out.d() == 4);
  const Eigen::VectorXd resid = out.y - out.X * out.truth->beta_star;
  REQUIRE((resid.array() == out.truth->eta.array()).all());
}

TEST_CASE("resample row frequencies match the binomial oracle") {
  RandomSource rng(101, 0);
  const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(10, 1);
  RegressionInstance inst;
  inst.X = X;
  inst.y = Eigen::VectorXd::LinSpaced(10, 0, 9);  // row i recognizable by |y|
  std::vector<long> counts(10, 0);
  const int reps = 10000;
  for (int r = 0; r < reps; ++r) {
    const auto out = resample_instance(inst, rng);
    for (Eigen::Index i = 0; i < out.n(); ++i)
      ++counts[static_cast<std::size_t>(std::lround(std::abs(out.y(i))))];
  }
  const double total = 10.0 * reps;
  const double expect = total / 10.0;
  const double sigma = std::sqrt(total * 0.1 * 0.9);
  for (const auto c : counts) {
    REQUIRE(std::abs(static_cast<double>(c) - expect) <= 3.0 * sigma);
  }
}

TEST_CASE("error_metrics") {
  RandomSource rng(55, 0);
  const Eigen::MatrixXd X = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd beta(2);
  beta << 1, -1;
  const auto inst = build_instance(beta, X, Eigen::VectorXd::Zero(2));
  const auto zero = error_metrics(beta, inst);
  CHECK(zero.err_param == 0.0);
  CHECK(zero.err_pred == 0.0);

  Eigen::VectorXd off = beta;
  off(0) += 1.0;
  const auto m = error_metrics(off, inst);
  CHECK(m.err_param == Catch::Approx(1.0));
  CHECK(m.err_pred == Catch::Approx(0.5));

  // orthogonal columns scaled to X^T X = n Id make both metrics agree
  Eigen::MatrixXd Xo(4, 2);
  Xo << 1, 1, 1, -1, -1, 1, -1, -1;  // columns orthogonal, norm^2 = 4 = n
  const auto inst2 = build_instance(beta, Xo, Eigen::VectorXd::Zero(4));
  const auto m2 = error_metrics(off, inst2);
  CHECK(m2.err_pred == Catch::Approx(m2.err_param).epsilon(1e-12));

  RegressionInstance no_truth;
  no_truth.X = X;
  no_truth.y = inst.y;
  CHECK_THROWS_AS(error_metrics(beta, no_truth), MissingTruthError);
}

TEST_CASE("random_beta norms and sparsity") {
  RandomSource rng(66, 0);
  const auto b = random_beta(12, 5.0, rng);
  CHECK(b.norm() == Catch::Approx(5.0).epsilon(1e-12));
  const auto s = random_beta(12, 2.0, rng, Eigen::Index{3});
  CHECK(s.norm() == Catch::Approx(2.0).epsilon(1e-12));
  int nnz = 0;
  for (Eigen::Index i = 0; i < 12; ++i)
    if (s(i) != 0.0) ++nnz;
  CHECK(nnz <= 3);
  CHECK(random_beta(4, 0.0, rng).isZero(0.0));
}
