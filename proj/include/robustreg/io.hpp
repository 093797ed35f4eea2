#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "robustreg/harness.hpp"
#include "robustreg/huber.hpp"
#include "robustreg/median.hpp"
#include "robustreg/model.hpp"
#include "robustreg/spread.hpp"

namespace robustreg {

/// A file could not be read, written, or parsed.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// 17 significant digits: enough to round-trip any double exactly.
inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (const char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end)
    throw IoError("could not parse number '" + s + "' in " + context);
  return v;
}

}  // namespace detail

/// Instance CSV: header `y,x1,...,xd`, one sample per row, 17 significant
/// digits throughout.
inline void write_instance_csv(const RegressionInstance& inst, std::ostream& os) {
  os << "y";
  for (Eigen::Index j = 0; j < inst.d(); ++j) os << ",x" << (j + 1);
  os << "\n";
  for (Eigen::Index i = 0; i < inst.n(); ++i) {
    os << fmt17(inst.y(i));
    for (Eigen::Index j = 0; j < inst.d(); ++j) os << "," << fmt17(inst.X(i, j));
    os << "\n";
  }
}

inline RegressionInstance read_instance_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("instance file is empty");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "y")
    throw IoError("instance header must be y,x1,...,xd");
  const auto d = static_cast<Eigen::Index>(header.size()) - 1;
  for (Eigen::Index j = 0; j < d; ++j)
    if (header[static_cast<std::size_t>(j + 1)] != "x" + std::to_string(j + 1))
      throw IoError("instance header must be y,x1,...,xd");
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (static_cast<Eigen::Index>(fields.size()) != d + 1)
      throw IoError("instance row has wrong field count");
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(detail::parse_double(f, "instance file"));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("instance file has no data rows");
  RegressionInstance inst;
  const auto n = static_cast<Eigen::Index>(rows.size());
  inst.X.resize(n, d);
  inst.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    inst.y(i) = rows[static_cast<std::size_t>(i)][0];
    for (Eigen::Index j = 0; j < d; ++j)
      inst.X(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j + 1)];
  }
  return inst;
}

/// Truth sidecar CSV: header `beta_star,eta`; column one holds the d beta
/// entries, column two the n noise entries, blank cells once a column is
/// exhausted.
inline void write_truth_csv(const Truth& truth, std::ostream& os) {
  os << "beta_star,eta\n";
  const auto rows = std::max(truth.beta_star.size(), truth.eta.size());
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (i < truth.beta_star.size()) os << fmt17(truth.beta_star(i));
    os << ",";
    if (i < truth.eta.size()) os << fmt17(truth.eta(i));
    os << "\n";
  }
}

inline Truth read_truth_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw IoError("truth file is empty");
  const auto header = detail::split_csv_line(line);
  if (header.size() != 2 || header[0] != "beta_star" || header[1] != "eta")
    throw IoError("truth header must be beta_star,eta");
  std::vector<double> beta, eta;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 2) throw IoError("truth row has wrong field count");
    if (!fields[0].empty()) beta.push_back(detail::parse_double(fields[0], "truth file"));
    if (!fields[1].empty()) eta.push_back(detail::parse_double(fields[1], "truth file"));
  }
  Truth t;
  t.beta_star = Eigen::Map<const Eigen::VectorXd>(beta.data(),
                                                  static_cast<Eigen::Index>(beta.size()));
  t.eta = Eigen::Map<const Eigen::VectorXd>(eta.data(),
                                            static_cast<Eigen::Index>(eta.size()));
  return t;
}

inline nlohmann::json to_json(const EstimatorResult& res) {
  nlohmann::json j;
  j["beta_hat"] = std::vector<double>(res.beta_hat.data(),
                                      res.beta_hat.data() + res.beta_hat.size());
  j["iterations"] = res.iterations;
  j["final_grad_norm"] = res.final_grad_norm;
  j["final_loss"] = res.final_loss;
  j["converged"] = res.converged;
  return j;
}

inline nlohmann::json to_json(const std::vector<BootstrapIterationTrace>& trace) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : trace) {
    nlohmann::json j;
    j["iteration"] = t.iteration;
    j["cell_size"] = t.cell_size;
    j["increment_norm"] = t.increment_norm;
    arr.push_back(std::move(j));
  }
  return arr;
}

inline nlohmann::json to_json(const SpreadReport& report) {
  nlohmann::json j;
  j["m"] = report.m;
  j["rho_lower_witnessed"] = report.rho_lower_witnessed;
  j["witness_v"] = std::vector<double>(
      report.witness_v.data(), report.witness_v.data() + report.witness_v.size());
  j["witness_set"] = report.witness_set;
  j["method"] = report.method == SpreadMethod::ExactD1 ? "exact_d1" : "randomized_search";
  return j;
}

inline nlohmann::json to_json(const TrialRecord& rec, bool deterministic_output) {
  nlohmann::json j;
  j["n"] = rec.n;
  j["d"] = rec.d;
  j["alpha"] = rec.alpha;
  j["estimator"] = rec.estimator;
  j["trial"] = rec.trial;
  j["err_param"] = rec.err_param;
  j["err_pred"] = rec.err_pred;
  j["runtime_ms"] = deterministic_output ? 0.0 : rec.runtime_ms;
  j["converged"] = rec.converged;
  j["seed"] = rec.seed;
  return j;
}

/// One TrialRecord per line.
inline std::string trial_records_to_jsonl(const std::vector<TrialRecord>& records,
                                          bool deterministic_output) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r, deterministic_output).dump();
    out += "\n";
  }
  return out;
}

/// Aggregated CSV with header n,d,alpha,estimator,metric,mean,median,q05,q95.
inline std::string aggregate_to_csv(const std::vector<AggregateRow>& rows) {
  std::string out = "n,d,alpha,estimator,metric,mean,median,q05,q95\n";
  for (const auto& r : rows) {
    out += std::to_string(r.n) + "," + std::to_string(r.d) + "," + fmt17(r.alpha) +
           "," + r.estimator + "," + r.metric + "," + fmt17(r.mean) + "," +
           fmt17(r.median) + "," + fmt17(r.q05) + "," + fmt17(r.q95) + "\n";
  }
  return out;
}

/// Flat key = value config format, one pair per line, # starts a comment.
inline std::map<std::string, std::string> parse_key_value_config(std::istream& is) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError("config line " + std::to_string(lineno) + " is not key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw IoError("config line " + std::to_string(lineno) + " has no key");
    if (kv.count(key)) throw IoError("config key '" + key + "' repeated");
    kv[key] = value;
  }
  return kv;
}

/// Noise syntax shared by the CLI and config files: spike:MAG | gauss:SIGMA |
/// pareto:SHAPE.
inline NoiseSpec parse_noise_spec(const std::string& text, double alpha) {
  const auto colon = text.find(':');
  if (colon == std::string::npos)
    throw IoError("noise must look like spike:MAG, gauss:SIGMA or pareto:SHAPE");
  const std::string kind = text.substr(0, colon);
  const double param = detail::parse_double(text.substr(colon + 1), "noise spec");
  NoiseSpec spec;
  spec.alpha = alpha;
  spec.pattern_param = param;
  if (kind == "spike") spec.pattern = OutlierPattern::ConstantSpike;
  else if (kind == "gauss") spec.pattern = OutlierPattern::ScaledGaussian;
  else if (kind == "pareto") spec.pattern = OutlierPattern::HeavyTail;
  else throw IoError("unknown noise pattern '" + kind + "'");
  return spec;
}

inline InlierLaw parse_inlier_law(const std::string& text, double& sigma_out) {
  if (text == "zero") return InlierLaw::Zero;
  if (text == "uniform") return InlierLaw::UniformPm1;
  if (text.rfind("gauss:", 0) == 0) {
    sigma_out = detail::parse_double(text.substr(6), "inlier law");
    return InlierLaw::Gaussian;
  }
  throw IoError("unknown inlier law '" + text + "'");
}

inline EstimatorKind parse_estimator(const std::string& text, Eigen::Index& k_out) {
  if (text == "huber") return EstimatorKind::Huber;
  if (text == "median") return EstimatorKind::MedianIter;
  if (text == "median-boot") return EstimatorKind::MedianBootstrap;
  if (text == "nonspherical") return EstimatorKind::NonsphericalBootstrap;
  if (text == "ols") return EstimatorKind::OlsBaseline;
  if (text.rfind("sparse-boot:", 0) == 0) {
    k_out = static_cast<Eigen::Index>(
        detail::parse_double(text.substr(12), "estimator sparsity"));
    return EstimatorKind::SparseBootstrap;
  }
  throw IoError("unknown estimator '" + text + "'");
}

/// Build an ExperimentConfig from the flat config format; unknown keys are
/// rejected.
inline ExperimentConfig experiment_config_from_kv(
    const std::map<std::string, std::string>& kv) {
  static const std::vector<std::string> known = {
      "n_grid", "d", "alpha", "noise", "inlier_law", "estimator",
      "trials", "master_seed", "orthogonalize", "beta_norm", "delta",
      "huber_h", "huber_scale", "grad_tol", "max_iters", "deterministic_output"};
  for (const auto& [key, value] : kv) {
    (void)value;
    bool ok = false;
    for (const auto& k : known)
      if (k == key) ok = true;
    if (!ok) throw IoError("unknown config key '" + key + "'");
  }
  auto require = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw IoError("config key '" + key + "' is required");
    return it->second;
  };
  auto get = [&](const std::string& key,
                 const std::string& fallback) -> std::string {
    const auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
  };
  auto parse_bool = [](const std::string& s, const std::string& key) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw IoError("config key '" + key + "' must be true or false");
  };

  ExperimentConfig cfg;
  {
    std::stringstream ss(require("n_grid"));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const auto b = tok.find_first_not_of(" \t");
      const auto e = tok.find_last_not_of(" \t");
      if (b == std::string::npos) continue;
      cfg.n_grid.push_back(static_cast<Eigen::Index>(
          detail::parse_double(tok.substr(b, e - b + 1), "n_grid")));
    }
  }
  cfg.d = static_cast<Eigen::Index>(detail::parse_double(require("d"), "d"));
  cfg.alpha = detail::parse_double(require("alpha"), "alpha");
  cfg.noise = parse_noise_spec(require("noise"), cfg.alpha);
  if (kv.count("inlier_law")) {
    double sigma = 0.0;
    cfg.noise.inlier_law = parse_inlier_law(kv.at("inlier_law"), sigma);
    cfg.noise.inlier_param = sigma;
  }
  cfg.estimator = parse_estimator(require("estimator"), cfg.sparsity_k);
  cfg.trials = static_cast<int>(detail::parse_double(require("trials"), "trials"));
  cfg.master_seed = static_cast<std::uint64_t>(
      detail::parse_double(get("master_seed", "0"), "master_seed"));
  cfg.orthogonalize = parse_bool(get("orthogonalize", "false"), "orthogonalize");
  cfg.beta_norm = detail::parse_double(get("beta_norm", "5"), "beta_norm");
  const std::string delta = get("delta", "auto");
  cfg.delta = delta == "auto" ? 0.0 : detail::parse_double(delta, "delta");
  cfg.huber.h = detail::parse_double(get("huber_h", "2"), "huber_h");
  cfg.huber.scale = detail::parse_double(get("huber_scale", "2"), "huber_scale");
  cfg.huber.grad_tol = detail::parse_double(get("grad_tol", "1e-8"), "grad_tol");
  cfg.huber.max_iters = static_cast<std::int64_t>(
      detail::parse_double(get("max_iters", "1000000"), "max_iters"));
  cfg.deterministic_output =
      parse_bool(get("deterministic_output", "true"), "deterministic_output");
  return cfg;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write '" + path + "'");
  f << content;
  if (!f) throw IoError("write to '" + path + "' failed");
}

}  // namespace robustreg
