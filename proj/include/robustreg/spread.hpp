#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "robustreg/linalg.hpp"
#include "robustreg/median.hpp"
#include "robustreg/rng.hpp"

namespace robustreg {

enum class SpreadMethod { ExactD1, RandomizedSearch };

/// Witnessed upper bound on the spread constant rho of a column span:
/// the smallest ratio ||v restricted off its top-m entries|| / ||v|| found.
struct SpreadReport {
  Eigen::Index m = 0;
  double rho_lower_witnessed = 1.0;
  Eigen::VectorXd witness_v;
  std::vector<Eigen::Index> witness_set;
  SpreadMethod method = SpreadMethod::RandomizedSearch;
};

/// Retained squared-mass fraction of v = Xu after dropping entries with
/// r^2 v_i^2 > ||v||^2 / n. Assumes X^T X = n Id for the usual reading.
inline double kappa_r(const Eigen::MatrixXd& X, const Eigen::VectorXd& u, double r) {
  if (!(r > 0.0)) throw std::invalid_argument("kappa_r: r must be positive");
  if (u.size() != X.cols()) throw std::invalid_argument("kappa_r: u has wrong length");
  if (u.isZero(0.0)) throw std::invalid_argument("kappa_r: u must be nonzero");
  const Eigen::VectorXd v = X * u;
  const double total = v.squaredNorm();
  if (total == 0.0) throw std::invalid_argument("kappa_r: Xu is zero");
  const double cap = total / static_cast<double>(X.rows());
  double kept = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double s = v(i) * v(i);
    if (r * r * s <= cap) kept += s;
  }
  return kept / total;
}

namespace detail {

// Indices of the m largest-magnitude entries, ties by lower index.
inline std::vector<Eigen::Index> top_m_indices(const Eigen::VectorXd& v,
                                               Eigen::Index m) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::partial_sort(idx.begin(), idx.begin() + m, idx.end(),
                    [&](Eigen::Index a, Eigen::Index b) {
                      const double fa = std::abs(v(a)), fb = std::abs(v(b));
                      if (fa != fb) return fa > fb;
                      return a < b;
                    });
  idx.resize(static_cast<std::size_t>(m));
  return idx;
}

// ||v off the top-m set|| / ||v||, both sums taken in index order
inline double off_top_ratio(const Eigen::VectorXd& v,
                            const std::vector<Eigen::Index>& top) {
  std::vector<bool> dropped(static_cast<std::size_t>(v.size()), false);
  for (const auto i : top) dropped[static_cast<std::size_t>(i)] = true;
  double total = 0.0, kept = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double s = v(i) * v(i);
    total += s;
    if (!dropped[static_cast<std::size_t>(i)]) kept += s;
  }
  if (total == 0.0) return 1.0;
  return std::sqrt(kept / total);
}

}  // namespace detail

/// Search for a vector in the column span whose mass concentrates on few
/// coordinates. Exact for d = 1; otherwise projected gradient with random
/// restarts on the ratio with the top-m set recomputed each step. The
/// reported ratio is a witnessed upper bound on the true rho, never a
/// certificate.
inline SpreadReport spread_witness_search(const Eigen::MatrixXd& X, Eigen::Index m,
                                          RandomSource& rng, int restarts = 32) {
  const auto n = X.rows();
  const auto d = X.cols();
  if (m < 1 || m >= n) throw std::invalid_argument("spread_witness_search: need 1 <= m < n");

  SpreadReport report;
  report.m = m;

  if (d == 1) {
    report.method = SpreadMethod::ExactD1;
    report.witness_v = X.col(0);
    report.witness_set = detail::top_m_indices(report.witness_v, m);
    report.rho_lower_witnessed =
        detail::off_top_ratio(report.witness_v, report.witness_set);
    return report;
  }

  if (restarts < 1)
    throw std::invalid_argument("spread_witness_search: restarts must be >= 1");
  report.method = SpreadMethod::RandomizedSearch;
  const int iters = 500;
  const double op2 = lambda_max_gram(X) * static_cast<double>(n);  // ||X||_op^2
  const double step = op2 > 0.0 ? 1.0 / op2 : 1.0;
  const Eigen::MatrixXd Xt = X.transpose();

  double best = std::numeric_limits<double>::infinity();
  for (int rs = 0; rs < restarts; ++rs) {
    Eigen::VectorXd u(d);
    double norm2 = 0.0;
    while (norm2 == 0.0) {
      for (Eigen::Index j = 0; j < d; ++j) u(j) = rng.normal();
      norm2 = u.squaredNorm();
    }
    u /= std::sqrt(norm2);
    for (int it = 0; it < iters; ++it) {
      const Eigen::VectorXd v = X * u;
      const double total = v.squaredNorm();
      if (total == 0.0) break;
      const auto top = detail::top_m_indices(v, m);
      const double ratio = detail::off_top_ratio(v, top);
      if (ratio < best) {
        best = ratio;
        report.rho_lower_witnessed = ratio;
        report.witness_v = v;
        report.witness_set = top;
      }
      Eigen::VectorXd v_off = v;
      for (const auto i : top) v_off(i) = 0.0;
      const double obj = v_off.squaredNorm() / total;  // = ratio^2
      const Eigen::VectorXd grad = 2.0 / total * (Xt * v_off - obj * (Xt * v));
      u -= step * grad;
      const double un = u.norm();
      if (un == 0.0) break;
      u /= un;
    }
  }
  return report;
}

/// For a vector meeting the lemma premises (at most gamma1^2 of its mass on
/// A, at most gamma2^2 on any m coordinates), checks the L1-vs-L2 conclusion
/// sum_{i not in A} |v_i| >= ((1 - gamma1^2 - gamma2^2)/gamma2) sqrt(m) ||v||.
/// Premise violations raise, they do not return false.
inline bool l1_vs_l2_check(const Eigen::VectorXd& v,
                           const std::vector<Eigen::Index>& a_set, Eigen::Index m,
                           double gamma1, double gamma2) {
  const auto n = v.size();
  if (m < 1 || m > n) throw std::invalid_argument("l1_vs_l2_check: need 1 <= m <= n");
  if (!(gamma2 > 0.0) || gamma1 < 0.0)
    throw std::invalid_argument("l1_vs_l2_check: need gamma2 > 0 and gamma1 >= 0");
  const double total = v.squaredNorm();
  double a_mass = 0.0;
  std::vector<bool> in_a(static_cast<std::size_t>(n), false);
  for (const auto i : a_set) {
    if (i < 0 || i >= n) throw std::invalid_argument("l1_vs_l2_check: index out of range");
    if (!in_a[static_cast<std::size_t>(i)]) a_mass += v(i) * v(i);
    in_a[static_cast<std::size_t>(i)] = true;
  }
  if (a_mass > gamma1 * gamma1 * total)
    throw std::invalid_argument("l1_vs_l2_check: premise on A violated");
  const auto top = detail::top_m_indices(v, m);
  double top_mass = 0.0;
  for (const auto i : top) top_mass += v(i) * v(i);
  if (top_mass > gamma2 * gamma2 * total)
    throw std::invalid_argument("l1_vs_l2_check: m-subset premise violated");

  double l1_off_a = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!in_a[static_cast<std::size_t>(i)]) l1_off_a += std::abs(v(i));
  const double rhs = (1.0 - gamma1 * gamma1 - gamma2 * gamma2) / gamma2 *
                     std::sqrt(static_cast<double>(m)) * std::sqrt(total);
  return l1_off_a >= rhs;
}

/// Lower bound on max_{unit u, k-sparse unit v} v^T X u by alternating
/// maximization (closed-form updates) with random restarts.
inline double sparse_operator_norm(const Eigen::MatrixXd& X, Eigen::Index k,
                                   int trials, RandomSource& rng) {
  const auto n = X.rows();
  const auto d = X.cols();
  if (k < 1 || k > n) throw std::invalid_argument("sparse_operator_norm: need 1 <= k <= n");
  if (trials < 1) throw std::invalid_argument("sparse_operator_norm: trials must be >= 1");

  double best = 0.0;
  for (int rs = 0; rs < trials; ++rs) {
    Eigen::VectorXd u(d);
    double norm2 = 0.0;
    while (norm2 == 0.0) {
      for (Eigen::Index j = 0; j < d; ++j) u(j) = rng.normal();
      norm2 = u.squaredNorm();
    }
    u /= std::sqrt(norm2);
    double value = 0.0;
    for (int it = 0; it < 100; ++it) {
      Eigen::VectorXd v = topk_truncate(X * u, k);
      const double vn = v.norm();
      if (vn == 0.0) break;
      v /= vn;
      Eigen::VectorXd xu = X.transpose() * v;
      const double un = xu.norm();
      if (un == 0.0) break;
      u = xu / un;
      const double next = v.dot(X * u);
      if (std::abs(next - value) <= 1e-12 * std::max(1.0, next)) {
        value = next;
        break;
      }
      value = next;
    }
    best = std::max(best, value);
  }
  return best;
}

}  // namespace robustreg
