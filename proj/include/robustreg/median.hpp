#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "robustreg/errors.hpp"
#include "robustreg/linalg.hpp"
#include "robustreg/model.hpp"
#include "robustreg/rng.hpp"

namespace robustreg {

/// Knobs of the coordinate-wise-median estimator family.
struct MedianConfig {
  double magnitude_cutoff = 0.5;        // rows with |X'_ij| below this are skipped
  double delta_bound = 3.0;             // upper bound on 3(1 + ||beta*||)
  std::optional<Eigen::Index> sparsity_k;
  bool preprocess = true;

  void validate(Eigen::Index d) const {
    if (!(delta_bound >= 3.0))
      throw std::invalid_argument("MedianConfig: delta_bound must be >= 3");
    if (!(magnitude_cutoff > 0.0))
      throw std::invalid_argument("MedianConfig: magnitude_cutoff must be positive");
    if (sparsity_k && (*sparsity_k < 1 || *sparsity_k > d))
      throw std::invalid_argument("MedianConfig: sparsity_k must be in [1, d]");
  }
};

struct CovarianceEstimate {
  Eigen::MatrixXd sigma_hat;
  Eigen::Index source_sample_count = 0;
  double min_eigenvalue = 0.0;

  bool positive_definite(double floor = 1e-12) const {
    return min_eigenvalue > floor;
  }
};

namespace detail {

inline void insertion_sort(double* a, std::size_t n) {
  for (std::size_t i = 1; i < n; ++i) {
    const double x = a[i];
    std::size_t j = i;
    while (j > 0 && a[j - 1] > x) {
      a[j] = a[j - 1];
      --j;
    }
    a[j] = x;
  }
}

// Quickselect with median-of-medians pivoting: worst-case linear.
inline double select_kth_inplace(double* a, std::size_t n, std::size_t k) {
  for (;;) {
    if (n <= 5) {
      insertion_sort(a, n);
      return a[k];
    }
    // move each group-of-5 median to the front, then recurse for the pivot
    std::size_t groups = 0;
    for (std::size_t i = 0; i < n; i += 5) {
      const std::size_t len = std::min<std::size_t>(5, n - i);
      insertion_sort(a + i, len);
      std::swap(a[groups], a[i + (len - 1) / 2]);
      ++groups;
    }
    const double pivot = select_kth_inplace(a, groups, (groups - 1) / 2);
    // three-way partition: [< pivot | == pivot | > pivot]
    std::size_t lo = 0, mid = 0, hi = n;
    while (mid < hi) {
      if (a[mid] < pivot) {
        std::swap(a[lo], a[mid]);
        ++lo;
        ++mid;
      } else if (a[mid] > pivot) {
        --hi;
        std::swap(a[mid], a[hi]);
      } else {
        ++mid;
      }
    }
    if (k < lo) {
      n = lo;
    } else if (k < hi) {
      return pivot;
    } else {
      a += hi;
      k -= hi;
      n -= hi;
    }
  }
}

}  // namespace detail

/// k-th smallest (0-based), reordering the input.
inline double select_kth(std::vector<double>& values, std::size_t k) {
  if (values.empty() || k >= values.size())
    throw std::invalid_argument("select_kth: index out of range");
  return detail::select_kth_inplace(values.data(), values.size(), k);
}

/// Lower median: the ceil(n/2)-th smallest element. Reorders the input.
inline double select_median(std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("select_median: empty input");
  return select_kth(values, (values.size() - 1) / 2);
}

namespace detail {

// Median of y_i / X_ij over rows with |X_ij| >= cutoff.
inline double column_ratio_median(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                  Eigen::Index j, double cutoff) {
  std::vector<double> z;
  z.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double xij = X(i, j);
    if (std::abs(xij) >= cutoff) z.push_back(y(i) / xij);
  }
  if (z.empty())
    throw EstimationError("median estimation failed: no rows pass the magnitude "
                          "filter for coordinate " + std::to_string(j));
  return select_median(z);
}

}  // namespace detail

/// One-dimensional regression: optional symmetrization, filter rows with
/// |X'_i| >= cutoff, return the median of the response/design ratios.
inline double univariate_median(const RegressionInstance& inst, const MedianConfig& cfg,
                                RandomSource& rng) {
  cfg.validate(inst.d());
  if (inst.d() != 1) throw std::invalid_argument("univariate_median: d must be 1");
  if (cfg.preprocess) {
    const RegressionInstance work = preprocess_symmetrize(inst, rng);
    return detail::column_ratio_median(work.X, work.y, 0, cfg.magnitude_cutoff);
  }
  return detail::column_ratio_median(inst.X, inst.y, 0, cfg.magnitude_cutoff);
}

/// One shared symmetrization pass, then the univariate median against every
/// column (no re-preprocessing per coordinate).
inline Eigen::VectorXd multivariate_median_iteration(const RegressionInstance& inst,
                                                     const MedianConfig& cfg,
                                                     RandomSource& rng) {
  cfg.validate(inst.d());
  const RegressionInstance* work = &inst;
  RegressionInstance preprocessed;
  if (cfg.preprocess) {
    preprocessed = preprocess_symmetrize(inst, rng);
    work = &preprocessed;
  }
  Eigen::VectorXd beta(inst.d());
  for (Eigen::Index j = 0; j < inst.d(); ++j)
    beta(j) = detail::column_ratio_median(work->X, work->y, j, cfg.magnitude_cutoff);
  return beta;
}

/// Keep the k largest-magnitude coordinates (ties by lower index), zero the rest.
inline Eigen::VectorXd topk_truncate(const Eigen::VectorXd& v, Eigen::Index k) {
  if (k < 0) throw std::invalid_argument("topk_truncate: k must be >= 0");
  if (k >= v.size()) return v;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                    [&](Eigen::Index a, Eigen::Index b) {
                      const double fa = std::abs(v(a)), fb = std::abs(v(b));
                      if (fa != fb) return fa > fb;
                      return a < b;
                    });
  Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
  for (Eigen::Index i = 0; i < k; ++i)
    out(idx[static_cast<std::size_t>(i)]) = v(idx[static_cast<std::size_t>(i)]);
  return out;
}

/// Zero every coordinate with magnitude below the threshold.
inline Eigen::VectorXd threshold_truncate(const Eigen::VectorXd& v, double threshold) {
  Eigen::VectorXd out = v;
  for (Eigen::Index j = 0; j < v.size(); ++j)
    if (std::abs(v(j)) < threshold) out(j) = 0.0;
  return out;
}

/// Median iteration followed by hard truncation to the top k coordinates.
inline Eigen::VectorXd sparse_topk_iteration(const RegressionInstance& inst,
                                             const MedianConfig& cfg,
                                             RandomSource& rng) {
  cfg.validate(inst.d());
  if (!cfg.sparsity_k)
    throw std::invalid_argument("sparse_topk_iteration: sparsity_k required");
  return topk_truncate(multivariate_median_iteration(inst, cfg, rng), *cfg.sparsity_k);
}

/// Median iteration followed by zeroing coordinates below delta/(100 sqrt(k)).
inline Eigen::VectorXd sparse_threshold_iteration(const RegressionInstance& inst,
                                                  const MedianConfig& cfg,
                                                  RandomSource& rng) {
  cfg.validate(inst.d());
  if (!cfg.sparsity_k)
    throw std::invalid_argument("sparse_threshold_iteration: sparsity_k required");
  const double thr =
      cfg.delta_bound / (100.0 * std::sqrt(static_cast<double>(*cfg.sparsity_k)));
  return threshold_truncate(multivariate_median_iteration(inst, cfg, rng), thr);
}

struct BootstrapIterationTrace {
  int iteration = 0;
  Eigen::Index cell_size = 0;
  double increment_norm = 0.0;
};

struct BootstrapResult {
  Eigen::VectorXd beta_hat;
  std::vector<BootstrapIterationTrace> trace;
};

namespace detail {

inline std::vector<std::vector<Eigen::Index>> partition_cells(
    Eigen::Index n, const std::vector<Eigen::Index>& sizes, RandomSource& rng) {
  Eigen::Index total = 0;
  for (const auto s : sizes) {
    if (s < 1)
      throw std::invalid_argument(
          "bootstrap partition: a cell would be empty; increase n or lower the "
          "number of iterations (smaller delta)");
    total += s;
  }
  if (total > n)
    throw std::invalid_argument("bootstrap partition: cells exceed sample count");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const auto j = i + static_cast<Eigen::Index>(
                           rng.uniform_below(static_cast<std::uint64_t>(n - i)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  std::vector<std::vector<Eigen::Index>> cells;
  cells.reserve(sizes.size());
  std::size_t at = 0;
  for (const auto s : sizes) {
    cells.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(at),
                       perm.begin() + static_cast<std::ptrdiff_t>(at) +
                           static_cast<std::ptrdiff_t>(s));
    at += static_cast<std::size_t>(s);
  }
  return cells;
}

// Cell sizes for the single-schedule bootstraps: t-1 cells of
// floor(n/(2(t-1))) and one final cell of floor(n/2); leftovers unused.
inline std::vector<Eigen::Index> bootstrap_sizes(Eigen::Index n, int t) {
  std::vector<Eigen::Index> sizes;
  const Eigen::Index c = n / (2 * static_cast<Eigen::Index>(t - 1));
  for (int i = 0; i < t - 1; ++i) sizes.push_back(c);
  sizes.push_back(n / 2);
  return sizes;
}

inline RegressionInstance residual_subinstance(const RegressionInstance& inst,
                                               const std::vector<Eigen::Index>& rows,
                                               const Eigen::VectorXd& acc) {
  RegressionInstance sub;
  const auto m = static_cast<Eigen::Index>(rows.size());
  sub.X.resize(m, inst.d());
  sub.y.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto src = rows[static_cast<std::size_t>(i)];
    sub.X.row(i) = inst.X.row(src);
    sub.y(i) = inst.y(src) - inst.X.row(src).dot(acc);
  }
  return sub;
}

inline int iteration_count(double delta) {
  return static_cast<int>(std::ceil(std::log(delta)));
}

}  // namespace detail

/// Iterative re-estimation on fresh sample cells: ceil(ln delta) rounds of
/// the median iteration on the running residual, increments summed.
inline BootstrapResult bootstrap_median(const RegressionInstance& inst,
                                        const MedianConfig& cfg, RandomSource& rng) {
  cfg.validate(inst.d());
  const int t = detail::iteration_count(cfg.delta_bound);
  const auto cells =
      detail::partition_cells(inst.n(), detail::bootstrap_sizes(inst.n(), t), rng);
  BootstrapResult res;
  res.beta_hat = Eigen::VectorXd::Zero(inst.d());
  for (int i = 0; i < t; ++i) {
    const auto sub = detail::residual_subinstance(inst, cells[static_cast<std::size_t>(i)],
                                                  res.beta_hat);
    const Eigen::VectorXd inc = multivariate_median_iteration(sub, cfg, rng);
    res.beta_hat += inc;
    res.trace.push_back({i + 1, sub.n(), inc.norm()});
  }
  return res;
}

/// Sparse bootstrap: threshold iterations with a halving delta schedule,
/// then one final top-k iteration.
inline BootstrapResult sparse_bootstrap(const RegressionInstance& inst,
                                        const MedianConfig& cfg, RandomSource& rng) {
  cfg.validate(inst.d());
  if (!cfg.sparsity_k)
    throw std::invalid_argument("sparse_bootstrap: sparsity_k required");
  const Eigen::Index k = *cfg.sparsity_k;
  const int t = detail::iteration_count(cfg.delta_bound);
  const auto cells =
      detail::partition_cells(inst.n(), detail::bootstrap_sizes(inst.n(), t), rng);
  BootstrapResult res;
  res.beta_hat = Eigen::VectorXd::Zero(inst.d());
  double delta = cfg.delta_bound;
  for (int i = 0; i < t; ++i) {
    const auto sub = detail::residual_subinstance(inst, cells[static_cast<std::size_t>(i)],
                                                  res.beta_hat);
    Eigen::VectorXd inc = multivariate_median_iteration(sub, cfg, rng);
    if (i < t - 1) {
      inc = threshold_truncate(inc, delta / (100.0 * std::sqrt(static_cast<double>(k))));
      delta /= 2.0;
    } else {
      inc = topk_truncate(inc, k);
    }
    res.beta_hat += inc;
    res.trace.push_back({i + 1, sub.n(), inc.norm()});
  }
  return res;
}

/// Whiten the design with sigma_hat^{-1/2}, estimate there, map back.
inline Eigen::VectorXd nonspherical_iteration(const RegressionInstance& inst,
                                              const MedianConfig& cfg,
                                              const CovarianceEstimate& sigma_hat,
                                              RandomSource& rng) {
  cfg.validate(inst.d());
  if (sigma_hat.sigma_hat.rows() != inst.d() || sigma_hat.sigma_hat.cols() != inst.d())
    throw std::invalid_argument("nonspherical_iteration: sigma_hat shape mismatch");
  const Eigen::MatrixXd W = inverse_sqrt_psd(sigma_hat.sigma_hat);
  RegressionInstance whitened;
  whitened.X = inst.X * W;
  whitened.y = inst.y;
  const Eigen::VectorXd beta_white = multivariate_median_iteration(whitened, cfg, rng);
  return W * beta_white;
}

/// Non-spherical bootstrap: ceil(ln delta) cells of floor(n/(2 t1)) followed
/// by ceil(ln n) cells of floor(n/(2 t2)), whitened iterations on residuals.
inline BootstrapResult nonspherical_bootstrap(const RegressionInstance& inst,
                                              const MedianConfig& cfg,
                                              const CovarianceEstimate& sigma_hat,
                                              RandomSource& rng) {
  cfg.validate(inst.d());
  if (sigma_hat.sigma_hat.rows() != inst.d() || sigma_hat.sigma_hat.cols() != inst.d())
    throw std::invalid_argument("nonspherical_bootstrap: sigma_hat shape mismatch");
  const Eigen::MatrixXd W = inverse_sqrt_psd(sigma_hat.sigma_hat);
  const int t1 = detail::iteration_count(cfg.delta_bound);
  const int t2 = detail::iteration_count(static_cast<double>(inst.n()));
  std::vector<Eigen::Index> sizes;
  for (int i = 0; i < t1; ++i) sizes.push_back(inst.n() / (2 * t1));
  for (int i = 0; i < t2; ++i) sizes.push_back(inst.n() / (2 * t2));
  const auto cells = detail::partition_cells(inst.n(), sizes, rng);

  BootstrapResult res;
  res.beta_hat = Eigen::VectorXd::Zero(inst.d());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto sub = detail::residual_subinstance(inst, cells[i], res.beta_hat);
    sub.X = sub.X * W;
    const Eigen::VectorXd inc_white = multivariate_median_iteration(sub, cfg, rng);
    const Eigen::VectorXd inc = W * inc_white;
    res.beta_hat += inc;
    res.trace.push_back({static_cast<int>(i) + 1,
                         static_cast<Eigen::Index>(cells[i].size()), inc.norm()});
  }
  return res;
}

/// Sample covariance of the first half of the rows: (2/n) sum x_i x_i^T.
/// Fitting must then use the second half only.
inline CovarianceEstimate estimate_covariance(const Eigen::MatrixXd& X) {
  const auto n = X.rows();
  const auto d = X.cols();
  const auto half = n / 2;
  if (half < d)
    throw std::invalid_argument("estimate_covariance: need floor(n/2) >= d rows");
  Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(d, d);
  lower.selfadjointView<Eigen::Lower>().rankUpdate(X.topRows(half).transpose(),
                                                   2.0 / static_cast<double>(n));
  Eigen::MatrixXd sigma = lower.selfadjointView<Eigen::Lower>();
  CovarianceEstimate est;
  est.sigma_hat = sigma;
  est.source_sample_count = half;
  est.min_eigenvalue = lambda_min_sym(sigma);
  return est;
}

/// Rough norm bound from an ordinary-least-squares fit on the first half:
/// 3 (1 + ||beta_ols|| + sqrt(d) ||residual|| / n_half), clamped below at 3.
inline double estimate_norm_bound(const RegressionInstance& inst) {
  const auto half = inst.n() / 2;
  if (half < 1) throw std::invalid_argument("estimate_norm_bound: too few rows");
  const Eigen::MatrixXd Xh = inst.X.topRows(half);
  const Eigen::VectorXd yh = inst.y.head(half);
  const Eigen::VectorXd beta_ols = ols_solve(Xh, yh);
  const double resid = (yh - Xh * beta_ols).norm();
  const double delta =
      3.0 * (1.0 + beta_ols.norm() +
             std::sqrt(static_cast<double>(inst.d())) * resid / static_cast<double>(half));
  return std::max(3.0, delta);
}

}  // namespace robustreg
