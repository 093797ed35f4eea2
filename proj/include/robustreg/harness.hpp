#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "robustreg/huber.hpp"
#include "robustreg/median.hpp"
#include "robustreg/model.hpp"
#include "robustreg/rng.hpp"

namespace robustreg {

enum class EstimatorKind {
  Huber,
  MedianIter,
  MedianBootstrap,
  SparseBootstrap,
  NonsphericalBootstrap,
  OlsBaseline,
};

inline std::string estimator_tag(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Huber: return "huber";
    case EstimatorKind::MedianIter: return "median";
    case EstimatorKind::MedianBootstrap: return "median-boot";
    case EstimatorKind::SparseBootstrap: return "sparse-boot";
    case EstimatorKind::NonsphericalBootstrap: return "nonspherical";
    case EstimatorKind::OlsBaseline: return "ols";
  }
  return "unknown";
}

/// A full Monte-Carlo sweep: for each n in the grid, `trials` independent
/// instances are generated and fitted. Everything is derived from
/// master_seed, so reruns are reproducible record for record.
struct ExperimentConfig {
  std::vector<Eigen::Index> n_grid;
  Eigen::Index d = 1;
  double alpha = 1.0;
  NoiseSpec noise;
  EstimatorKind estimator = EstimatorKind::Huber;
  Eigen::Index sparsity_k = 0;  // SparseBootstrap only
  HuberParams huber;
  double delta = 0.0;  // 0 => learn via estimate_norm_bound, fit on second half
  int trials = 1;
  std::uint64_t master_seed = 0;
  bool orthogonalize = false;
  double beta_norm = 5.0;
  bool deterministic_output = true;  // serialize runtime_ms as 0

  void validate() const {
    if (n_grid.empty()) throw std::invalid_argument("ExperimentConfig: empty n grid");
    for (const auto n : n_grid)
      if (n < 1) throw std::invalid_argument("ExperimentConfig: n must be >= 1");
    if (d < 1) throw std::invalid_argument("ExperimentConfig: d must be >= 1");
    if (trials < 1) throw std::invalid_argument("ExperimentConfig: trials must be >= 1");
    if (estimator == EstimatorKind::SparseBootstrap && (sparsity_k < 1 || sparsity_k > d))
      throw std::invalid_argument("ExperimentConfig: sparsity_k must be in [1, d]");
    if (delta != 0.0 && delta < 3.0)
      throw std::invalid_argument("ExperimentConfig: delta must be >= 3 (or 0 for auto)");
    NoiseSpec check = noise;
    check.alpha = alpha;
    check.validate();
    huber.validate();
  }
};

struct TrialRecord {
  Eigen::Index n = 0;
  Eigen::Index d = 0;
  double alpha = 0.0;
  std::string estimator;
  int trial = 0;
  double err_param = 0.0;
  double err_pred = 0.0;
  double runtime_ms = 0.0;
  bool converged = false;
  std::uint64_t seed = 0;
};

/// Worker cap: ROBUST_REGRESS_THREADS when set, machine parallelism otherwise.
inline int harness_thread_cap() {
  if (const char* env = std::getenv("ROBUST_REGRESS_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace detail {

inline void parallel_for_index(std::size_t count, int threads,
                               const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  const int workers =
      std::max(1, std::min<int>(threads, static_cast<int>(count)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

inline RegressionInstance second_half_instance(const RegressionInstance& inst) {
  const auto half = inst.n() / 2;
  const auto rest = inst.n() - half;
  if (rest < 1) throw std::invalid_argument("second_half_instance: too few rows");
  RegressionInstance out;
  out.X = inst.X.bottomRows(rest);
  out.y = inst.y.tail(rest);
  if (inst.truth)
    out.truth = Truth{inst.truth->beta_star, inst.truth->eta.tail(rest)};
  return out;
}

struct FitOutcome {
  Eigen::VectorXd beta_hat;
  bool converged = true;
};

inline FitOutcome run_estimator(const ExperimentConfig& cfg,
                                const RegressionInstance& inst, RandomSource rng) {
  switch (cfg.estimator) {
    case EstimatorKind::Huber: {
      const EstimatorResult res = minimize_huber(inst, cfg.huber);
      return {res.beta_hat, res.converged};
    }
    case EstimatorKind::OlsBaseline:
      return {ols_solve(inst.X, inst.y), true};
    case EstimatorKind::MedianIter: {
      MedianConfig mc;
      return {multivariate_median_iteration(inst, mc, rng), true};
    }
    case EstimatorKind::MedianBootstrap:
    case EstimatorKind::SparseBootstrap:
    case EstimatorKind::NonsphericalBootstrap: {
      MedianConfig mc;
      const bool auto_delta = cfg.delta == 0.0;
      mc.delta_bound = auto_delta ? estimate_norm_bound(inst) : cfg.delta;
      // with a learned bound the fit must not reuse the rows that produced it
      const RegressionInstance fit_inst =
          auto_delta ? second_half_instance(inst) : inst;
      if (cfg.estimator == EstimatorKind::MedianBootstrap)
        return {bootstrap_median(fit_inst, mc, rng).beta_hat, true};
      if (cfg.estimator == EstimatorKind::SparseBootstrap) {
        mc.sparsity_k = cfg.sparsity_k;
        return {sparse_bootstrap(fit_inst, mc, rng).beta_hat, true};
      }
      const CovarianceEstimate sigma = estimate_covariance(inst.X);
      if (!sigma.positive_definite())
        throw EstimationError("covariance estimate is not positive definite");
      const RegressionInstance ns_inst =
          auto_delta ? fit_inst : second_half_instance(inst);
      return {nonspherical_bootstrap(ns_inst, mc, sigma, rng).beta_hat, true};
    }
  }
  throw std::logic_error("run_estimator: unreachable");
}

}  // namespace detail

/// Deterministically generate and fit one trial of a sweep.
inline TrialRecord run_single_trial(const ExperimentConfig& cfg, std::size_t grid_index,
                                    int trial) {
  const Eigen::Index n = cfg.n_grid.at(grid_index);
  const std::uint64_t seed =
      derive_seed(cfg.master_seed, static_cast<std::uint64_t>(grid_index),
                  static_cast<std::uint64_t>(trial));
  TrialRecord rec;
  rec.n = n;
  rec.d = cfg.d;
  rec.alpha = cfg.alpha;
  rec.estimator = estimator_tag(cfg.estimator);
  rec.trial = trial;
  rec.seed = seed;

  RandomSource data_rng(seed, 0);
  NoiseSpec spec = cfg.noise;
  spec.alpha = cfg.alpha;
  const Eigen::MatrixXd X = gaussian_design(n, cfg.d, data_rng);
  const NoiseSample noise = make_noise(n, spec, data_rng);
  std::optional<Eigen::Index> sparsity;
  if (cfg.estimator == EstimatorKind::SparseBootstrap) sparsity = cfg.sparsity_k;
  const Eigen::VectorXd beta_star = random_beta(cfg.d, cfg.beta_norm, data_rng, sparsity);
  RegressionInstance inst = build_instance(beta_star, X, noise.eta);
  if (cfg.orthogonalize) {
    const Orthogonalized ortho = orthogonalize_columns(inst.X);
    RegressionInstance rotated;
    rotated.X = ortho.Xo;
    rotated.y = inst.y;
    const Eigen::VectorXd beta_rot = ortho.T.partialPivLu().solve(beta_star);
    rotated.truth = Truth{beta_rot, rotated.y - rotated.X * beta_rot};
    inst = std::move(rotated);
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto fit = detail::run_estimator(cfg, inst, RandomSource(seed, 1));
    const ErrorMetrics m = error_metrics(fit.beta_hat, inst);
    rec.err_param = m.err_param;
    rec.err_pred = m.err_pred;
    rec.converged = fit.converged;
  } catch (const std::exception&) {
    rec.err_param = std::numeric_limits<double>::infinity();
    rec.err_pred = std::numeric_limits<double>::infinity();
    rec.converged = false;
  }
  const auto t1 = std::chrono::steady_clock::now();
  rec.runtime_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return rec;
}

/// Run the whole sweep. Trials execute in parallel up to the thread cap but
/// records are returned in (grid, trial) order and depend only on the config.
inline std::vector<TrialRecord> run_trials(const ExperimentConfig& cfg,
                                           int threads = harness_thread_cap()) {
  cfg.validate();
  const std::size_t total = cfg.n_grid.size() * static_cast<std::size_t>(cfg.trials);
  std::vector<TrialRecord> records(total);
  detail::parallel_for_index(total, threads, [&](std::size_t i) {
    const std::size_t gi = i / static_cast<std::size_t>(cfg.trials);
    const int trial = static_cast<int>(i % static_cast<std::size_t>(cfg.trials));
    records[i] = run_single_trial(cfg, gi, trial);
  });
  return records;
}

struct AggregateRow {
  Eigen::Index n = 0;
  Eigen::Index d = 0;
  double alpha = 0.0;
  std::string estimator;
  std::string metric;
  double mean = 0.0;
  double median = 0.0;
  double q05 = 0.0;
  double q95 = 0.0;
};

namespace detail {

// lower-interpolation quantile on a sorted vector; p = 0.5 agrees with the
// lower-median convention of select_median
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const auto idx = static_cast<std::size_t>(
      std::floor(p * static_cast<double>(sorted.size() - 1)));
  return sorted[idx];
}

}  // namespace detail

/// Per-grid-point order statistics of each error metric.
inline std::vector<AggregateRow> aggregate(const std::vector<TrialRecord>& records) {
  if (records.empty()) throw std::invalid_argument("aggregate: no records");
  std::vector<AggregateRow> rows;
  // groups appear in first-record order; run_trials emits grid order
  auto key_of = [](const TrialRecord& r) {
    return std::to_string(r.n) + "|" + std::to_string(r.d) + "|" +
           std::to_string(r.alpha) + "|" + r.estimator;
  };
  std::vector<std::string> keys;
  std::vector<std::vector<const TrialRecord*>> members;
  for (const auto& r : records) {
    const std::string k = key_of(r);
    std::size_t gi = keys.size();
    for (std::size_t i = 0; i < keys.size(); ++i)
      if (keys[i] == k) {
        gi = i;
        break;
      }
    if (gi == keys.size()) {
      keys.push_back(k);
      members.emplace_back();
    }
    members[gi].push_back(&r);
  }
  for (const auto& group : members) {
    for (const char* metric : {"err_param", "err_pred"}) {
      std::vector<double> vals;
      vals.reserve(group.size());
      for (const auto* r : group)
        vals.push_back(std::string(metric) == "err_param" ? r->err_param : r->err_pred);
      std::sort(vals.begin(), vals.end());
      AggregateRow row;
      row.n = group.front()->n;
      row.d = group.front()->d;
      row.alpha = group.front()->alpha;
      row.estimator = group.front()->estimator;
      row.metric = metric;
      double sum = 0.0;
      for (const double v : vals) sum += v;
      row.mean = sum / static_cast<double>(vals.size());
      row.median = detail::quantile_sorted(vals, 0.5);
      row.q05 = detail::quantile_sorted(vals, 0.05);
      row.q95 = detail::quantile_sorted(vals, 0.95);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

/// Least-squares slope of log(err) against log(n).
inline double scaling_fit(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3)
    throw std::invalid_argument("scaling_fit: need at least 3 points");
  double mx = 0.0, my = 0.0;
  for (const auto& [n, err] : points) {
    if (!(n > 0.0) || !(err > 0.0))
      throw std::invalid_argument("scaling_fit: points must be positive");
    mx += std::log(n);
    my += std::log(err);
  }
  mx /= static_cast<double>(points.size());
  my /= static_cast<double>(points.size());
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [n, err] : points) {
    const double dx = std::log(n) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(err) - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("scaling_fit: degenerate n values");
  return sxy / sxx;
}

}  // namespace robustreg
