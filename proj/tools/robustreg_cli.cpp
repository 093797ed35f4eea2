#include <CLI11.hpp>

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "robustreg/harness.hpp"
#include "robustreg/huber.hpp"
#include "robustreg/io.hpp"
#include "robustreg/median.hpp"
#include "robustreg/model.hpp"
#include "robustreg/spread.hpp"

namespace {

using namespace robustreg;

struct GenArgs {
  Eigen::Index n = 0;
  Eigen::Index d = 0;
  double alpha = 1.0;
  std::string noise;
  std::string inliers = "zero";
  std::uint64_t seed = 0;
  double beta_norm = 5.0;
  Eigen::Index beta_k = 0;
  std::string out;
  std::string truth_out;
};

struct FitArgs {
  std::string in;
  std::string truth;
  std::string estimator = "huber";
  double h = 2.0;
  double scale = 2.0;
  std::string delta;
  std::uint64_t seed = 0;
  std::string out;
};

struct BenchArgs {
  std::string config;
  std::string out_dir;
};

struct SpreadArgs {
  std::string in;
  Eigen::Index m = 0;
  int restarts = 32;
  std::uint64_t seed = 0;
  std::string out;
};

int run_gen(const GenArgs& a) {
  NoiseSpec spec = parse_noise_spec(a.noise, a.alpha);
  double sigma = 0.0;
  spec.inlier_law = parse_inlier_law(a.inliers, sigma);
  spec.inlier_param = sigma;
  RandomSource rng(a.seed, 0);
  const Eigen::MatrixXd X = gaussian_design(a.n, a.d, rng);
  const NoiseSample noise = make_noise(a.n, spec, rng);
  std::optional<Eigen::Index> k;
  if (a.beta_k > 0) k = a.beta_k;
  const Eigen::VectorXd beta = random_beta(a.d, a.beta_norm, rng, k);
  const RegressionInstance inst = build_instance(beta, X, noise.eta);

  std::ostringstream body;
  write_instance_csv(inst, body);
  write_file(a.out, body.str());
  if (!a.truth_out.empty()) {
    std::ostringstream tbody;
    write_truth_csv(*inst.truth, tbody);
    write_file(a.truth_out, tbody.str());
  }
  std::cout << "wrote " << inst.n() << "x" << inst.d() << " instance to " << a.out
            << "\n";
  return 0;
}

int run_fit(const FitArgs& a) {
  std::istringstream in_stream(read_file(a.in));
  RegressionInstance inst = read_instance_csv(in_stream);
  if (!a.truth.empty()) {
    std::istringstream truth_stream(read_file(a.truth));
    inst.truth = read_truth_csv(truth_stream);
    inst.validate();
  }

  Eigen::Index sparse_k = 0;
  const EstimatorKind kind = parse_estimator(a.estimator, sparse_k);

  const bool needs_delta = kind == EstimatorKind::MedianBootstrap ||
                           kind == EstimatorKind::SparseBootstrap ||
                           kind == EstimatorKind::NonsphericalBootstrap;
  double delta = 0.0;
  bool auto_delta = false;
  if (needs_delta) {
    if (a.delta.empty())
      throw std::invalid_argument("this estimator needs --delta VALUE or --delta auto");
    if (a.delta == "auto") {
      auto_delta = true;
    } else {
      delta = std::stod(a.delta);
    }
  }

  RandomSource rng(a.seed, 1);
  nlohmann::json out;
  EstimatorResult result;
  bool estimation_failed = false;

  if (kind == EstimatorKind::Huber) {
    HuberParams params;
    params.h = a.h;
    params.scale = a.scale;
    result = minimize_huber(inst, params);
    estimation_failed = !result.converged;
    out = to_json(result);
  } else if (kind == EstimatorKind::OlsBaseline) {
    result.beta_hat = ols_solve(inst.X, inst.y);
    result.converged = true;
    result.final_loss = huber_loss(inst, result.beta_hat);
    result.final_grad_norm = huber_gradient(inst, result.beta_hat).norm();
    out = to_json(result);
  } else {
    MedianConfig mc;
    std::vector<BootstrapIterationTrace> trace;
    RegressionInstance fit_inst = inst;
    if (needs_delta) {
      mc.delta_bound = auto_delta ? estimate_norm_bound(inst) : delta;
      // a learned bound must not be reused on the rows that produced it
      if (auto_delta) fit_inst = detail::second_half_instance(inst);
    }
    if (kind == EstimatorKind::MedianIter) {
      result.beta_hat = multivariate_median_iteration(fit_inst, mc, rng);
      result.iterations = 1;
    } else if (kind == EstimatorKind::MedianBootstrap) {
      auto boot = bootstrap_median(fit_inst, mc, rng);
      result.beta_hat = boot.beta_hat;
      result.iterations = static_cast<std::int64_t>(boot.trace.size());
      trace = std::move(boot.trace);
    } else if (kind == EstimatorKind::SparseBootstrap) {
      mc.sparsity_k = sparse_k;
      auto boot = sparse_bootstrap(fit_inst, mc, rng);
      result.beta_hat = boot.beta_hat;
      result.iterations = static_cast<std::int64_t>(boot.trace.size());
      trace = std::move(boot.trace);
    } else {
      const CovarianceEstimate sigma = estimate_covariance(inst.X);
      if (!sigma.positive_definite())
        throw EstimationError("covariance estimate is not positive definite");
      if (!auto_delta) fit_inst = detail::second_half_instance(inst);
      auto boot = nonspherical_bootstrap(fit_inst, mc, sigma, rng);
      result.beta_hat = boot.beta_hat;
      result.iterations = static_cast<std::int64_t>(boot.trace.size());
      trace = std::move(boot.trace);
    }
    result.converged = true;
    result.final_loss = huber_loss(inst, result.beta_hat);
    result.final_grad_norm = huber_gradient(inst, result.beta_hat).norm();
    out = to_json(result);
    if (!trace.empty()) out["trace"] = to_json(trace);
  }

  if (inst.truth) {
    const ErrorMetrics m = error_metrics(result.beta_hat, inst);
    out["err_param"] = m.err_param;
    out["err_pred"] = m.err_pred;
    std::cout << "estimator=" << a.estimator << " converged=" << result.converged
              << " err_param=" << fmt17(m.err_param) << "\n";
  } else {
    std::cout << "estimator=" << a.estimator << " converged=" << result.converged
              << "\n";
  }
  write_file(a.out, out.dump(2) + "\n");
  if (estimation_failed) {
    std::cerr << "error: estimation: optimizer did not reach the gradient tolerance\n";
    return 2;
  }
  return 0;
}

int run_bench(const BenchArgs& a) {
  std::istringstream cfg_stream(read_file(a.config));
  const ExperimentConfig cfg = experiment_config_from_kv(parse_key_value_config(cfg_stream));
  const auto records = run_trials(cfg);
  const auto rows = aggregate(records);
  std::filesystem::create_directories(a.out_dir);
  write_file((std::filesystem::path(a.out_dir) / "trials.jsonl").string(),
             trial_records_to_jsonl(records, cfg.deterministic_output));
  write_file((std::filesystem::path(a.out_dir) / "aggregate.csv").string(),
             aggregate_to_csv(rows));
  std::cout << "wrote " << records.size() << " trial records to " << a.out_dir << "\n";
  return 0;
}

int run_spread(const SpreadArgs& a) {
  std::istringstream in_stream(read_file(a.in));
  const RegressionInstance inst = read_instance_csv(in_stream);
  RandomSource rng(a.seed, 0);
  const SpreadReport report = spread_witness_search(inst.X, a.m, rng, a.restarts);
  write_file(a.out, to_json(report).dump(2) + "\n");
  std::cout << "m=" << report.m << " rho_upper_bound=" << fmt17(report.rho_lower_witnessed)
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust linear regression toolkit", "robustreg"};
  app.set_help_flag("--help", "Print help and exit");
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand(
      "gen", "Generate a synthetic regression instance as CSV");
  gen_cmd->set_help_flag("--help", "Print help and exit");
  gen_cmd->add_option("--n", gen.n, "Number of samples")->required();
  gen_cmd->add_option("--d", gen.d, "Number of covariates")->required();
  gen_cmd->add_option("--alpha", gen.alpha, "Inlier fraction in (0,1]")->required();
  gen_cmd->add_option("--noise", gen.noise,
                      "Outlier pattern: spike:MAG | gauss:SIGMA | pareto:SHAPE")
      ->required();
  gen_cmd->add_option("--inliers", gen.inliers,
                      "Inlier law: zero | uniform | gauss:SIGMA (default zero)");
  gen_cmd->add_option("--seed", gen.seed, "Master seed (default 0)");
  gen_cmd->add_option("--beta-norm", gen.beta_norm,
                      "Norm of the generated parameter vector (default 5)");
  gen_cmd->add_option("--beta-k", gen.beta_k,
                      "Make the parameter vector k-sparse (default dense)");
  gen_cmd->add_option("--out", gen.out, "Output instance CSV path")->required();
  gen_cmd->add_option("--truth-out", gen.truth_out,
                      "Optional sidecar CSV with beta_star and eta");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit an estimator to an instance CSV");
  fit_cmd->set_help_flag("--help", "Print help and exit");
  fit_cmd->add_option("--in", fit.in, "Input instance CSV path")->required();
  fit_cmd->add_option("--truth", fit.truth,
                      "Optional truth sidecar CSV; enables error metrics");
  fit_cmd->add_option(
      "--estimator", fit.estimator,
      "huber | median | median-boot | sparse-boot:K | nonspherical | ols "
      "(default huber)");
  fit_cmd->add_option("--h", fit.h, "Huber transition point (default 2)");
  fit_cmd->add_option("--scale", fit.scale, "Huber loss multiplier (default 2)");
  fit_cmd->add_option("--delta", fit.delta,
                      "Norm bound for median bootstraps: VALUE or auto");
  fit_cmd->add_option("--seed", fit.seed, "Seed for the estimator randomness");
  fit_cmd->add_option("--out", fit.out, "Output result JSON path")->required();

  BenchArgs bench;
  auto* bench_cmd =
      app.add_subcommand("bench", "Run a Monte-Carlo sweep from a config file");
  bench_cmd->set_help_flag("--help", "Print help and exit");
  bench_cmd->add_option("--config", bench.config,
                        "Config file (key = value lines, # comments)")
      ->required();
  bench_cmd->add_option("--out", bench.out_dir, "Output directory")->required();

  SpreadArgs spread;
  auto* spread_cmd = app.add_subcommand(
      "spread-check", "Search for poorly spread directions of a design");
  spread_cmd->set_help_flag("--help", "Print help and exit");
  spread_cmd->add_option("--in", spread.in, "Input instance CSV path")->required();
  spread_cmd->add_option("--m", spread.m, "Number of coordinates an adversary may erase")
      ->required();
  spread_cmd->add_option("--restarts", spread.restarts,
                         "Random restarts for the search (default 32)");
  spread_cmd->add_option("--seed", spread.seed, "Seed for the search randomness");
  spread_cmd->add_option("--out", spread.out, "Output report JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 1;
  }

  try {
    if (gen_cmd->parsed()) return run_gen(gen);
    if (fit_cmd->parsed()) return run_fit(fit);
    if (bench_cmd->parsed()) return run_bench(bench);
    if (spread_cmd->parsed()) return run_spread(spread);
    std::cerr << "error: usage: no subcommand given\n";
    return 1;
  } catch (const robustreg::IoError& e) {
    std::cerr << "error: io: " << e.what() << "\n";
    return 1;
  } catch (const robustreg::MissingTruthError& e) {
    std::cerr << "error: state: " << e.what() << "\n";
    return 1;
  } catch (const robustreg::EstimationError& e) {
    std::cerr << "error: estimation: " << e.what() << "\n";
    return 2;
  } catch (const robustreg::SingularMatrixError& e) {
    std::cerr << "error: estimation: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 2;
  }
}
