#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>

#include "robustreg/linalg.hpp"
#include "robustreg/model.hpp"
#include "robustreg/rng.hpp"

namespace robustreg {

/// Huber penalty family Phi_{h,scale}(t) = scale * (t^2/(2h) for |t| <= h,
/// |t| - h/2 otherwise). The defaults h = 2, scale = 2 give the penalty
/// t^2/2 inside [-2, 2] and 2|t| - 2 outside.
struct HuberParams {
  double h = 2.0;
  double scale = 2.0;
  double grad_tol = 1e-8;
  std::int64_t max_iters = 1000000;

  void validate() const {
    if (!(h > 0.0)) throw std::invalid_argument("HuberParams: h must be positive");
    if (!(scale > 0.0)) throw std::invalid_argument("HuberParams: scale must be positive");
    if (!(grad_tol > 0.0))
      throw std::invalid_argument("HuberParams: grad_tol must be positive");
    if (max_iters < 1) throw std::invalid_argument("HuberParams: max_iters must be >= 1");
  }
};

struct EstimatorResult {
  Eigen::VectorXd beta_hat;
  std::int64_t iterations = 0;
  double final_grad_norm = 0.0;
  double final_loss = 0.0;
  bool converged = false;
};

inline double huber_penalty(double t, const HuberParams& p = {}) {
  const double a = std::abs(t);
  if (a <= p.h) return p.scale * t * t / (2.0 * p.h);
  return p.scale * (a - p.h / 2.0);
}

/// Derivative of the penalty; with defaults this is sign(t) * min(|t|, 2).
inline double huber_penalty_deriv(double t, const HuberParams& p = {}) {
  if (std::abs(t) <= p.h) return p.scale * t / p.h;
  return t > 0.0 ? p.scale : -p.scale;
}

/// f(beta) = (1/n) sum_i Phi((X beta - y)_i)
inline double huber_loss(const RegressionInstance& inst, const Eigen::VectorXd& beta,
                         const HuberParams& p = {}) {
  if (beta.size() != inst.d()) throw std::invalid_argument("huber_loss: shape mismatch");
  const Eigen::VectorXd r = inst.X * beta - inst.y;
  double total = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) total += huber_penalty(r(i), p);
  return total / static_cast<double>(inst.n());
}

/// grad f(beta) = (1/n) sum_i Phi'((X beta - y)_i) x_i
inline Eigen::VectorXd huber_gradient(const RegressionInstance& inst,
                                      const Eigen::VectorXd& beta,
                                      const HuberParams& p = {}) {
  if (beta.size() != inst.d())
    throw std::invalid_argument("huber_gradient: shape mismatch");
  Eigen::VectorXd r = inst.X * beta - inst.y;
  for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = huber_penalty_deriv(r(i), p);
  return inst.X.transpose() * r / static_cast<double>(inst.n());
}

/// Gradient descent with fixed step 1/L, L = (scale/h) * lambda_max(X^T X)/n
/// from the quadratic-zone curvature bound. Loss is non-increasing; stops at
/// ||grad|| <= grad_tol or the iteration cap, returning the best iterate.
inline EstimatorResult minimize_huber(const RegressionInstance& inst,
                                      const HuberParams& p,
                                      const Eigen::VectorXd& beta0) {
  p.validate();
  if (beta0.size() != inst.d())
    throw std::invalid_argument("minimize_huber: beta0 has wrong length");
  const double lam = lambda_max_gram(inst.X);
  if (!(lam > 0.0))
    throw std::invalid_argument("minimize_huber: design has no positive curvature");
  const double step = 1.0 / (p.scale / p.h * lam);
  const auto n = inst.n();
  const double inv_n = 1.0 / static_cast<double>(n);

  EstimatorResult res;
  Eigen::VectorXd beta = beta0;
  Eigen::VectorXd best_beta = beta;
  double best_loss = std::numeric_limits<double>::infinity();
  Eigen::VectorXd resid(n), phi(n);
  std::int64_t it = 0;
  for (;;) {
    // one residual pass feeds both the loss and the gradient
    resid = inst.X * beta - inst.y;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      loss += huber_penalty(resid(i), p);
      phi(i) = huber_penalty_deriv(resid(i), p);
    }
    loss *= inv_n;
    const Eigen::VectorXd g = inv_n * (inst.X.transpose() * phi);
    const double gnorm = g.norm();
    if (loss <= best_loss) {
      best_loss = loss;
      best_beta = beta;
    }
    if (gnorm <= p.grad_tol) {
      res.beta_hat = beta;
      res.iterations = it;
      res.final_grad_norm = gnorm;
      res.final_loss = loss;
      res.converged = true;
      return res;
    }
    if (it >= p.max_iters) {
      res.beta_hat = best_beta;
      res.iterations = it;
      res.final_grad_norm = huber_gradient(inst, best_beta, p).norm();
      res.final_loss = best_loss;
      res.converged = false;
      return res;
    }
    beta -= step * g;
    ++it;
  }
}

inline EstimatorResult minimize_huber(const RegressionInstance& inst,
                                      const HuberParams& p = {}) {
  return minimize_huber(inst, p, Eigen::VectorXd::Zero(inst.d()));
}

/// ||grad f(beta_star)||. The gradient-bound diagnostics assume
/// X^T X = n Id; orthogonalize first when that matters.
inline double gradient_norm_at_truth(const RegressionInstance& inst,
                                     const HuberParams& p = {}) {
  if (!inst.truth) throw MissingTruthError("gradient_norm_at_truth: no truth");
  return huber_gradient(inst, inst.truth->beta_star, p).norm();
}

/// Smallest eigenvalue of the Hessian lower bound
/// M(u) = (1/n) sum_i [|<x_i,u>| <= 1][|eta_i| <= 1] x_i x_i^T.
inline double hessian_lower_bound_eig(const RegressionInstance& inst,
                                      const Eigen::VectorXd& u) {
  if (!inst.truth) throw MissingTruthError("hessian_lower_bound_eig: no truth");
  if (u.size() != inst.d())
    throw std::invalid_argument("hessian_lower_bound_eig: u has wrong length");
  const auto n = inst.n();
  const auto d = inst.d();
  const Eigen::VectorXd xu = inst.X * u;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(xu(i)) <= 1.0 && std::abs(inst.truth->eta(i)) <= 1.0)
      M.noalias() += inst.X.row(i).transpose() * inst.X.row(i);
  }
  M /= static_cast<double>(n);
  return lambda_min_sym(M);
}

struct ConvexityProbe {
  double min_ratio = 0.0;
};

/// Empirical local strong-convexity coefficient: the minimum over sampled
/// perturbations u (uniform directions, radii in (0, radius]) of
/// 2 [f(beta*+u) - f(beta*) - <grad f(beta*), u>] / ||u||^2. The numerator
/// is accumulated row by row as penalty Bregman terms; taking the difference
/// of two whole-loss evaluations would cancel catastrophically when large
/// outliers dominate the loss value.
inline ConvexityProbe local_convexity_probe(const RegressionInstance& inst,
                                            const HuberParams& p, double radius,
                                            std::int64_t samples,
                                            RandomSource& rng) {
  if (!inst.truth) throw MissingTruthError("local_convexity_probe: no truth");
  if (!(radius > 0.0))
    throw std::invalid_argument("local_convexity_probe: radius must be positive");
  if (samples < 1)
    throw std::invalid_argument("local_convexity_probe: samples must be >= 1");
  const auto n = inst.n();
  const auto d = inst.d();
  const Eigen::VectorXd resid0 = inst.X * inst.truth->beta_star - inst.y;

  double min_ratio = std::numeric_limits<double>::infinity();
  Eigen::VectorXd dir(d);
  for (std::int64_t k = 0; k < samples; ++k) {
    double norm2 = 0.0;
    while (norm2 == 0.0) {
      for (Eigen::Index j = 0; j < d; ++j) dir(j) = rng.normal();
      norm2 = dir.squaredNorm();
    }
    const double r = radius * (1.0 - rng.uniform01());  // (0, radius]
    const Eigen::VectorXd u = dir * (r / std::sqrt(norm2));
    const Eigen::VectorXd xu = inst.X * u;
    double bregman = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      bregman += huber_penalty(resid0(i) + xu(i), p) - huber_penalty(resid0(i), p) -
                 huber_penalty_deriv(resid0(i), p) * xu(i);
    }
    const double ratio = 2.0 * (bregman / static_cast<double>(n)) / u.squaredNorm();
    min_ratio = std::min(min_ratio, ratio);
  }
  return ConvexityProbe{min_ratio};
}

/// Error bound from local strong convexity: if the gradient at beta* is
/// small enough relative to radius * kappa, any loss minimizer lies within
/// 2 ||grad|| / kappa; otherwise no certificate.
inline std::optional<double> error_certificate(double grad_norm, double kappa,
                                               double radius) {
  if (!(kappa > 0.0) || !(radius > 0.0))
    throw std::invalid_argument("error_certificate: kappa and radius must be positive");
  if (grad_norm < 0.5 * radius * kappa) return 2.0 * grad_norm / kappa;
  return std::nullopt;
}

}  // namespace robustreg
