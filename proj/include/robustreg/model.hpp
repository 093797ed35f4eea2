#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "robustreg/errors.hpp"
#include "robustreg/rng.hpp"

namespace robustreg {

struct Truth {
  Eigen::VectorXd beta_star;  // length d
  Eigen::VectorXd eta;        // length n
};

/// One regression problem: n samples, d covariates, responses y, and
/// optionally the ground truth that generated it. Immutable after
/// construction.
struct RegressionInstance {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::optional<Truth> truth;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index d() const { return X.cols(); }

  void validate() const {
    if (X.rows() < 1 || X.cols() < 1)
      throw std::invalid_argument("RegressionInstance: n >= 1 and d >= 1 required");
    if (y.size() != X.rows())
      throw std::invalid_argument("RegressionInstance: y length must equal row count");
    if (truth) {
      if (truth->beta_star.size() != X.cols() || truth->eta.size() != X.rows())
        throw std::invalid_argument("RegressionInstance: truth shape mismatch");
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double model = X.row(i).dot(truth->beta_star) + truth->eta(i);
        if (std::abs(y(i) - model) > 1e-9 * std::max(1.0, std::abs(y(i))))
          throw std::invalid_argument(
              "RegressionInstance: y does not match X*beta_star + eta");
      }
    }
  }
};

enum class OutlierPattern { ConstantSpike, ScaledGaussian, HeavyTail };
enum class InlierLaw { Zero, UniformPm1, Gaussian };
enum class InlierPlacement { Random, FixedPrefix };

/// Oblivious noise description: an alpha fraction of entries is guaranteed
/// to have magnitude at most 1, the rest follow the outlier pattern.
struct NoiseSpec {
  double alpha = 1.0;
  OutlierPattern pattern = OutlierPattern::ConstantSpike;
  double pattern_param = 0.0;  // spike magnitude / sigma / pareto shape
  InlierLaw inlier_law = InlierLaw::Zero;
  double inlier_param = 0.0;  // sigma of the inlier Gaussian
  InlierPlacement placement = InlierPlacement::Random;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0))
      throw std::invalid_argument("NoiseSpec: alpha must be in (0, 1]");
    if (pattern == OutlierPattern::HeavyTail && !(pattern_param > 0.0))
      throw std::invalid_argument("NoiseSpec: pareto shape must be positive");
    if (inlier_law == InlierLaw::Gaussian &&
        !(inlier_param > 0.0 && inlier_param <= 0.5))
      throw std::invalid_argument("NoiseSpec: inlier sigma must be in (0, 1/2]");
  }
};

struct NoiseSample {
  Eigen::VectorXd eta;
  std::vector<Eigen::Index> inlier_indices;  // ascending
};

/// n x d matrix of iid standard normals, filled row by row.
inline Eigen::MatrixXd gaussian_design(Eigen::Index n, Eigen::Index d,
                                       RandomSource& rng) {
  if (n < 1 || d < 1) throw std::invalid_argument("gaussian_design: n, d >= 1 required");
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = rng.normal();
  return X;
}

/// Noise vector with exactly ceil(alpha*n) inlier slots. Inlier draws are
/// clipped to [-1,1] so the magnitude guarantee holds deterministically.
inline NoiseSample make_noise(Eigen::Index n, const NoiseSpec& spec,
                              RandomSource& rng) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("make_noise: n >= 1 required");
  const auto m = static_cast<Eigen::Index>(
      std::ceil(spec.alpha * static_cast<double>(n)));

  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  if (spec.placement == InlierPlacement::Random) {
    // partial Fisher-Yates: the first m entries become the inlier set
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto j = i + static_cast<Eigen::Index>(
                             rng.uniform_below(static_cast<std::uint64_t>(n - i)));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
  }
  std::vector<Eigen::Index> inliers(perm.begin(), perm.begin() + m);
  std::sort(inliers.begin(), inliers.end());
  std::vector<bool> is_inlier(static_cast<std::size_t>(n), false);
  for (auto i : inliers) is_inlier[static_cast<std::size_t>(i)] = true;

  Eigen::VectorXd eta(n);
  for (auto i : inliers) {
    double v = 0.0;
    switch (spec.inlier_law) {
      case InlierLaw::Zero: v = 0.0; break;
      case InlierLaw::UniformPm1: v = 2.0 * rng.uniform01() - 1.0; break;
      case InlierLaw::Gaussian: v = spec.inlier_param * rng.normal(); break;
    }
    eta(i) = std::clamp(v, -1.0, 1.0);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (is_inlier[static_cast<std::size_t>(i)]) continue;
    double v = 0.0;
    switch (spec.pattern) {
      case OutlierPattern::ConstantSpike:
        v = rng.rademacher() * spec.pattern_param;
        break;
      case OutlierPattern::ScaledGaussian:
        v = spec.pattern_param * rng.normal();
        break;
      case OutlierPattern::HeavyTail: {
        // symmetric Pareto: sign * U^(-1/shape), support magnitude >= 1
        const double u = 1.0 - rng.uniform01();  // (0,1]
        v = rng.rademacher() * std::pow(u, -1.0 / spec.pattern_param);
        break;
      }
    }
    eta(i) = v;
  }
  return NoiseSample{std::move(eta), std::move(inliers)};
}

/// Assemble an instance from ground truth: y = X beta_star + eta.
inline RegressionInstance build_instance(const Eigen::VectorXd& beta_star,
                                         const Eigen::MatrixXd& X,
                                         const Eigen::VectorXd& eta) {
  if (X.cols() != beta_star.size() || X.rows() != eta.size())
    throw std::invalid_argument("build_instance: shape mismatch");
  if (X.rows() < 1 || X.cols() < 1)
    throw std::invalid_argument("build_instance: n >= 1 and d >= 1 required");
  RegressionInstance inst;
  inst.X = X;
  inst.y = X * beta_star + eta;
  inst.truth = Truth{beta_star, eta};
  return inst;
}

namespace detail {

// Retained eta is the float residual y' - X' beta_star, so the model
// identity holds bit-exactly on the transformed instance.
inline std::optional<Truth> transformed_truth(const RegressionInstance& out_shell,
                                              const std::optional<Truth>& truth) {
  if (!truth) return std::nullopt;
  Truth t;
  t.beta_star = truth->beta_star;
  t.eta = out_shell.y - out_shell.X * truth->beta_star;
  return t;
}

}  // namespace detail

/// Row-wise symmetrization: y'_i = sigma_i y_i + w_i, X'_i = sigma_i X_i
/// with the given sign and shift vectors.
inline RegressionInstance symmetrize_with(const RegressionInstance& inst,
                                          const Eigen::VectorXd& signs,
                                          const Eigen::VectorXd& w) {
  const auto n = inst.n();
  if (signs.size() != n || w.size() != n)
    throw std::invalid_argument("symmetrize_with: shape mismatch");
  RegressionInstance out;
  out.X = signs.asDiagonal() * inst.X;
  out.y = signs.cwiseProduct(inst.y) + w;
  out.truth = detail::transformed_truth(out, inst.truth);
  return out;
}

/// Symmetrization preprocessing: per row draw a Rademacher sign and a
/// standard normal shift. Makes the effective noise symmetric with positive
/// density near zero while preserving beta_star.
inline RegressionInstance preprocess_symmetrize(const RegressionInstance& inst,
                                                RandomSource& rng) {
  const auto n = inst.n();
  Eigen::VectorXd signs(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    signs(i) = rng.rademacher();
    w(i) = rng.normal();
  }
  return symmetrize_with(inst, signs, w);
}

/// Resampling with the given row indices and signs.
inline RegressionInstance resample_with(const RegressionInstance& inst,
                                        const std::vector<Eigen::Index>& indices,
                                        const Eigen::VectorXd& signs) {
  const auto n = static_cast<Eigen::Index>(indices.size());
  if (signs.size() != n || n < 1)
    throw std::invalid_argument("resample_with: shape mismatch");
  RegressionInstance out;
  out.X.resize(n, inst.d());
  out.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = indices[static_cast<std::size_t>(i)];
    out.X.row(i) = signs(i) * inst.X.row(src);
    out.y(i) = signs(i) * inst.y(src);
  }
  out.truth = detail::transformed_truth(out, inst.truth);
  return out;
}

/// n rows drawn uniformly with replacement, each flipped by an independent
/// Rademacher sign (indices first, then signs).
inline RegressionInstance resample_instance(const RegressionInstance& inst,
                                            RandomSource& rng) {
  const auto n = inst.n();
  std::vector<Eigen::Index> indices(static_cast<std::size_t>(n));
  for (auto& ix : indices)
    ix = static_cast<Eigen::Index>(rng.uniform_below(static_cast<std::uint64_t>(n)));
  Eigen::VectorXd signs(n);
  for (Eigen::Index i = 0; i < n; ++i) signs(i) = rng.rademacher();
  return resample_with(inst, indices, signs);
}

struct ErrorMetrics {
  double err_param = 0.0;  // ||beta_hat - beta_star||^2
  double err_pred = 0.0;   // (1/n) ||X (beta_hat - beta_star)||^2
};

inline ErrorMetrics error_metrics(const Eigen::VectorXd& beta_hat,
                                  const RegressionInstance& inst) {
  if (!inst.truth) throw MissingTruthError("error_metrics: instance has no truth");
  if (beta_hat.size() != inst.d())
    throw std::invalid_argument("error_metrics: beta_hat has wrong length");
  const Eigen::VectorXd diff = beta_hat - inst.truth->beta_star;
  ErrorMetrics m;
  m.err_param = diff.squaredNorm();
  m.err_pred = (inst.X * diff).squaredNorm() / static_cast<double>(inst.n());
  return m;
}

/// Unit vector uniform on the sphere (k-sparse variant picks a random
/// support first), scaled to the requested norm.
inline Eigen::VectorXd random_beta(Eigen::Index d, double norm, RandomSource& rng,
                                   std::optional<Eigen::Index> sparsity = {}) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
  if (norm == 0.0) return beta;
  if (sparsity && *sparsity < d) {
    const auto k = *sparsity;
    if (k < 1) throw std::invalid_argument("random_beta: sparsity must be >= 1");
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(d));
    for (Eigen::Index i = 0; i < d; ++i) perm[static_cast<std::size_t>(i)] = i;
    for (Eigen::Index i = 0; i < k; ++i) {
      const auto j = i + static_cast<Eigen::Index>(
                             rng.uniform_below(static_cast<std::uint64_t>(d - i)));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    Eigen::VectorXd g(k);
    double norm2 = 0.0;
    while (norm2 == 0.0) {
      for (Eigen::Index i = 0; i < k; ++i) g(i) = rng.normal();
      norm2 = g.squaredNorm();
    }
    g *= norm / std::sqrt(norm2);
    for (Eigen::Index i = 0; i < k; ++i) beta(perm[static_cast<std::size_t>(i)]) = g(i);
    return beta;
  }
  double norm2 = 0.0;
  while (norm2 == 0.0) {
    for (Eigen::Index j = 0; j < d; ++j) beta(j) = rng.normal();
    norm2 = beta.squaredNorm();
  }
  return beta * (norm / std::sqrt(norm2));
}

}  // namespace robustreg
