#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "filtreg/data.hpp"
#include "filtreg/errors.hpp"
#include "filtreg/kernels.hpp"
#include "filtreg/numerics.hpp"
#include "filtreg/regression.hpp"
#include "filtreg/shape.hpp"

namespace filtreg {

// Uniform stream with a fixed mapping from the engine's output, so draws do
// not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 eng_;
};

// Regression curve of the simulation design: a flat-bottomed double bump with
// g(0) = g(0.5) = g(1) = 0.5 and peaks of 1.5 near x = 0.146 and x = 0.854.
inline double true_g(double x) {
  return 4.5 - 64.0 * x * x * (1.0 - x) * (1.0 - x) - 16.0 * (x - 0.5) * (x - 0.5);
}

// Beta(1, beta) quantile function: F(v) = 1 - (1-v)^beta on [0,1].
inline double beta1_inverse(double beta, double u) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta1_inverse: shape must be positive");
  if (!(u >= 0.0 && u < 1.0)) throw std::invalid_argument("beta1_inverse: u outside [0,1)");
  return 1.0 - std::pow(1.0 - u, 1.0 / beta);
}

struct DgpDraw {
  Sample sample;
  double censoring_fraction = 0.0;
};

// Simulation design: X uniform on [0,1], Y = g(X) eps with eps uniform on
// [0.5, 1.5], censoring time Beta(1,3) with probability P(W < 0.5) for
// W ~ Beta(1, 0.75) and +inf otherwise; observed are (X, Y ^ U, 1{Y < U}).
// Four uniforms are consumed per subject regardless of the censoring branch,
// so the stream layout is stable.
inline DgpDraw sample_dgp(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("sample_dgp: n must be positive");
  Rng rng(seed);
  std::vector<double> xs(n), ys(n), us(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform01();
    const double eps = 0.5 + rng.uniform01();
    const double w = beta1_inverse(0.75, rng.uniform01());
    const double v = beta1_inverse(3.0, rng.uniform01());
    xs[i] = x;
    ys[i] = true_g(x) * eps;
    us[i] = w < 0.5 ? v : std::numeric_limits<double>::infinity();
  }
  DgpDraw out{Sample::from_right_censored(xs, ys, us), 0.0};
  std::size_t censored = 0;
  for (const EventRecord& r : out.sample.records())
    if (!r.event) ++censored;
  out.censoring_fraction = static_cast<double>(censored) / static_cast<double>(n);
  return out;
}

// Rule-of-thumb bandwidth 1.06 min(sd, IQR/1.34) n^(-1/5).
inline double silverman_bandwidth(std::span<const double> values) {
  if (values.size() < 2) throw std::invalid_argument("silverman_bandwidth: need at least two values");
  const double sd = sample_sd(values);
  std::vector<double> v(values.begin(), values.end());
  const double iqr = percentile(v, 0.75) - percentile(v, 0.25);
  const double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0))
    throw std::invalid_argument("silverman_bandwidth: sample has no spread");
  return 1.06 * spread * std::pow(static_cast<double>(values.size()), -0.2);
}

struct BandwidthRule {
  bool fixed = false;
  double value = 0.0;

  double resolve(std::span<const double> values) const {
    return fixed ? value : silverman_bandwidth(values);
  }
};

struct StudyConfig {
  std::size_t n = 250;
  std::size_t reps = 15;
  std::size_t grid_size = 200;
  std::uint64_t seed = 1;
  std::vector<Method> methods{Method::local_constant, Method::two_step};
  std::string kernel = "quartic";
  BandwidthRule bandwidth;       // covariate direction
  BandwidthRule time_bandwidth;  // time direction (pointwise hazards only)
  double truncation_quantile = 0.95;
  // shape / two-step block
  double bracket_lo = 0.5;
  double bracket_hi = 1.5;
  std::size_t ygrid_size = 200;
  std::size_t xgrid_size = 100;
  std::size_t ugrid_size = 100;
  double taper_width = 0.1;
  double exposure_floor = 1e-6;
  double weight_q_lo = 0.1;
  double weight_q_hi = 0.9;
  double x_lo = 0.0;
  double x_hi = 1.0;
};

namespace detail {

inline BandwidthRule bandwidth_from_json(const nlohmann::json& j, const std::string& key) {
  BandwidthRule out;
  if (!j.is_object() || !j.contains("rule"))
    throw std::invalid_argument("config: " + key + " must be an object with a 'rule' field");
  const std::string rule = j.at("rule").get<std::string>();
  if (rule == "silverman") {
    if (j.size() != 1) throw std::invalid_argument("config: " + key + ": unexpected fields");
    return out;
  }
  if (rule == "fixed") {
    if (j.size() != 2 || !j.contains("value"))
      throw std::invalid_argument("config: " + key + ": fixed rule needs exactly a 'value' field");
    out.fixed = true;
    out.value = j.at("value").get<double>();
    if (!(out.value > 0.0)) throw std::invalid_argument("config: " + key + ": value must be positive");
    return out;
  }
  throw std::invalid_argument("config: " + key + ": unknown rule '" + rule + "'");
}

inline nlohmann::ordered_json bandwidth_to_json(const BandwidthRule& r) {
  nlohmann::ordered_json j;
  j["rule"] = r.fixed ? "fixed" : "silverman";
  if (r.fixed) j["value"] = r.value;
  return j;
}

}  // namespace detail

inline StudyConfig study_config_from_json(const nlohmann::json& j) {
  static const char* known[] = {"schema_version", "n",       "reps",           "grid_size",
                                "seed",           "methods", "kernel",         "bandwidth",
                                "time_bandwidth", "truncation_quantile",       "shape"};
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* name : known)
      if (item.key() == name) ok = true;
    if (!ok) throw std::invalid_argument("config: unknown field '" + item.key() + "'");
  }
  if (!j.contains("schema_version") || !j.at("schema_version").is_number_integer() ||
      j.at("schema_version").get<int>() != 1)
    throw std::invalid_argument("config: schema_version must be present and equal to 1");

  StudyConfig cfg;
  if (j.contains("n")) cfg.n = j.at("n").get<std::size_t>();
  if (j.contains("reps")) cfg.reps = j.at("reps").get<std::size_t>();
  if (j.contains("grid_size")) cfg.grid_size = j.at("grid_size").get<std::size_t>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (cfg.n < 10 || cfg.reps < 1 || cfg.grid_size < 2)
    throw std::invalid_argument("config: need n >= 10, reps >= 1, grid_size >= 2");
  if (j.contains("kernel")) cfg.kernel = j.at("kernel").get<std::string>();
  kernel_by_name(cfg.kernel);  // validates
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& m : j.at("methods")) {
      const std::string name = m.get<std::string>();
      if (name == "local-constant") cfg.methods.push_back(Method::local_constant);
      else if (name == "two-step") cfg.methods.push_back(Method::two_step);
      else
        throw std::invalid_argument("config: methods must be a subset of "
                                    "{local-constant, two-step}; got '" + name + "'");
    }
    if (cfg.methods.empty()) throw std::invalid_argument("config: methods must be nonempty");
  }
  if (j.contains("bandwidth")) cfg.bandwidth = detail::bandwidth_from_json(j.at("bandwidth"), "bandwidth");
  if (j.contains("time_bandwidth"))
    cfg.time_bandwidth = detail::bandwidth_from_json(j.at("time_bandwidth"), "time_bandwidth");
  if (j.contains("truncation_quantile")) {
    cfg.truncation_quantile = j.at("truncation_quantile").get<double>();
    if (!(cfg.truncation_quantile > 0.0 && cfg.truncation_quantile <= 1.0))
      throw std::invalid_argument("config: truncation_quantile must lie in (0,1]");
  }
  if (j.contains("shape")) {
    const auto& sj = j.at("shape");
    static const char* shape_known[] = {"bracket",     "ygrid_size",       "xgrid_size",
                                        "ugrid_size",  "taper_width",      "exposure_floor",
                                        "weight_quantiles", "x_range"};
    for (const auto& item : sj.items()) {
      bool ok = false;
      for (const char* name : shape_known)
        if (item.key() == name) ok = true;
      if (!ok) throw std::invalid_argument("config: unknown shape field '" + item.key() + "'");
    }
    if (sj.contains("bracket")) {
      const auto br = sj.at("bracket");
      if (!br.is_array() || br.size() != 2)
        throw std::invalid_argument("config: shape.bracket must be [lo, hi]");
      cfg.bracket_lo = br[0].get<double>();
      cfg.bracket_hi = br[1].get<double>();
      if (!(cfg.bracket_lo > 0.0 && cfg.bracket_lo < cfg.bracket_hi))
        throw std::invalid_argument("config: shape.bracket must satisfy 0 < lo < hi");
    }
    if (sj.contains("ygrid_size")) cfg.ygrid_size = sj.at("ygrid_size").get<std::size_t>();
    if (sj.contains("xgrid_size")) cfg.xgrid_size = sj.at("xgrid_size").get<std::size_t>();
    if (sj.contains("ugrid_size")) cfg.ugrid_size = sj.at("ugrid_size").get<std::size_t>();
    if (cfg.ygrid_size < 2 || cfg.xgrid_size < 2 || cfg.ugrid_size < 2)
      throw std::invalid_argument("config: shape grid sizes must be at least 2");
    if (sj.contains("taper_width")) {
      cfg.taper_width = sj.at("taper_width").get<double>();
      if (!(cfg.taper_width >= 0.0 && cfg.taper_width <= 0.5))
        throw std::invalid_argument("config: shape.taper_width must lie in [0, 0.5]");
    }
    if (sj.contains("exposure_floor")) {
      cfg.exposure_floor = sj.at("exposure_floor").get<double>();
      if (!(cfg.exposure_floor >= 0.0))
        throw std::invalid_argument("config: shape.exposure_floor must be nonnegative");
    }
    if (sj.contains("weight_quantiles")) {
      const auto wq = sj.at("weight_quantiles");
      if (!wq.is_array() || wq.size() != 2)
        throw std::invalid_argument("config: shape.weight_quantiles must be [q_lo, q_hi]");
      cfg.weight_q_lo = wq[0].get<double>();
      cfg.weight_q_hi = wq[1].get<double>();
      if (!(0.0 < cfg.weight_q_lo && cfg.weight_q_lo < cfg.weight_q_hi && cfg.weight_q_hi < 1.0))
        throw std::invalid_argument("config: shape.weight_quantiles must satisfy 0 < lo < hi < 1");
    }
    if (sj.contains("x_range")) {
      const auto xr = sj.at("x_range");
      if (!xr.is_array() || xr.size() != 2)
        throw std::invalid_argument("config: shape.x_range must be [lo, hi]");
      cfg.x_lo = xr[0].get<double>();
      cfg.x_hi = xr[1].get<double>();
      if (!(cfg.x_lo < cfg.x_hi))
        throw std::invalid_argument("config: shape.x_range must satisfy lo < hi");
    }
  }
  return cfg;
}

inline nlohmann::ordered_json study_config_to_json(const StudyConfig& cfg) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["n"] = cfg.n;
  j["reps"] = cfg.reps;
  j["grid_size"] = cfg.grid_size;
  j["seed"] = cfg.seed;
  nlohmann::ordered_json methods = nlohmann::ordered_json::array();
  for (Method m : cfg.methods) methods.push_back(method_name(m));
  j["methods"] = methods;
  j["kernel"] = cfg.kernel;
  j["bandwidth"] = detail::bandwidth_to_json(cfg.bandwidth);
  j["time_bandwidth"] = detail::bandwidth_to_json(cfg.time_bandwidth);
  j["truncation_quantile"] = cfg.truncation_quantile;
  nlohmann::ordered_json shape;
  shape["bracket"] = {cfg.bracket_lo, cfg.bracket_hi};
  shape["ygrid_size"] = cfg.ygrid_size;
  shape["xgrid_size"] = cfg.xgrid_size;
  shape["ugrid_size"] = cfg.ugrid_size;
  shape["taper_width"] = cfg.taper_width;
  shape["exposure_floor"] = cfg.exposure_floor;
  shape["weight_quantiles"] = {cfg.weight_q_lo, cfg.weight_q_hi};
  shape["x_range"] = {cfg.x_lo, cfg.x_hi};
  j["shape"] = shape;
  return j;
}

struct MethodSummary {
  Method method = Method::local_constant;
  std::vector<std::vector<double>> estimates;     // [rep][grid point], NaN = undefined
  std::vector<std::vector<double>> standardized;  // same layout, (e - mean)/std
  std::vector<double> mean, stdev, iqr_over_1p3;  // per grid point
  std::vector<std::size_t> defined;               // per grid point
};

struct StudyResult {
  StudyConfig config;
  std::vector<double> grid;
  std::vector<double> censoring_fraction;  // per replication
  std::vector<MethodSummary> methods;

  bool complete() const {
    for (const MethodSummary& m : methods)
      for (const auto& rep : m.estimates)
        for (double v : rep)
          if (std::isnan(v)) return false;
    return config.reps >= 2;
  }
};

// Runs the full replication study. Each replication owns its RNG stream
// (seed + index), replications fill disjoint slots, and aggregation walks
// them in index order, so the result is reproducible bit for bit no matter
// how many worker threads are used.
inline StudyResult run_study(const StudyConfig& cfg) {
  if (cfg.n < 10 || cfg.reps < 1 || cfg.grid_size < 2 || cfg.methods.empty())
    throw std::invalid_argument("run_study: need n >= 10, reps >= 1, grid_size >= 2, methods nonempty");
  const Kernel& K = kernel_by_name(cfg.kernel);
  StudyResult res;
  res.config = cfg;
  res.grid = linspace(0.0, 1.0, cfg.grid_size);
  res.censoring_fraction.assign(cfg.reps, std::numeric_limits<double>::quiet_NaN());
  res.methods.resize(cfg.methods.size());
  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    res.methods[m].method = cfg.methods[m];
    res.methods[m].estimates.assign(
        cfg.reps, std::vector<double>(cfg.grid_size, std::numeric_limits<double>::quiet_NaN()));
  }

  parallel_for(cfg.reps, [&](std::size_t rep) {
    const DgpDraw draw = sample_dgp(cfg.n, cfg.seed + rep);
    res.censoring_fraction[rep] = draw.censoring_fraction;
    std::vector<double> xs(cfg.n), exits(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) {
      xs[i] = draw.sample.records()[i].x;
      exits[i] = draw.sample.records()[i].exit;
    }
    double b = 0.0, t_max = 0.0;
    try {
      b = cfg.bandwidth.resolve(xs);
      t_max = percentile(exits, cfg.truncation_quantile);
    } catch (const std::exception&) {
      return;  // the whole replication stays undefined
    }
    for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
      try {
        CurveEstimate curve;
        if (cfg.methods[m] == Method::local_constant) {
          curve = estimate_curve(draw.sample, Method::local_constant, K, b, res.grid, t_max);
        } else {
          const double h = cfg.time_bandwidth.resolve(exits);
          const WeightFunction wf =
              make_weight_function(draw.sample, K, b, cfg.x_lo, cfg.x_hi, cfg.weight_q_lo,
                                   cfg.weight_q_hi, cfg.taper_width, cfg.exposure_floor,
                                   cfg.xgrid_size);
          TwoStepConfig tc;
          tc.bracket_lo = cfg.bracket_lo;
          tc.bracket_hi = cfg.bracket_hi;
          tc.ygrid_size = cfg.ygrid_size;
          tc.xgrid_size = cfg.xgrid_size;
          tc.ugrid_size = cfg.ugrid_size;
          tc.truncation = t_max;
          curve = two_step(draw.sample, K, K, b, h, wf, res.grid, tc);
        }
        res.methods[m].estimates[rep] = std::move(curve.values);
      } catch (const std::exception&) {
        // method stays undefined for this replication
      }
    }
  });

  bool any_rep_usable = false;
  for (std::size_t r = 0; r < cfg.reps && !any_rep_usable; ++r)
    for (const MethodSummary& ms : res.methods)
      for (double v : ms.estimates[r])
        if (!std::isnan(v)) {
          any_rep_usable = true;
          break;
        }
  if (!any_rep_usable) throw Error("run_study: every replication failed");

  for (MethodSummary& ms : res.methods) {
    const std::size_t g = cfg.grid_size;
    ms.mean.assign(g, std::numeric_limits<double>::quiet_NaN());
    ms.stdev.assign(g, std::numeric_limits<double>::quiet_NaN());
    ms.iqr_over_1p3.assign(g, std::numeric_limits<double>::quiet_NaN());
    ms.defined.assign(g, 0);
    ms.standardized.assign(cfg.reps,
                           std::vector<double>(g, std::numeric_limits<double>::quiet_NaN()));
    for (std::size_t j = 0; j < g; ++j) {
      std::vector<double> vals;
      for (std::size_t r = 0; r < cfg.reps; ++r) {
        const double v = ms.estimates[r][j];
        if (!std::isnan(v)) vals.push_back(v);
      }
      ms.defined[j] = vals.size();
      if (vals.empty()) continue;
      ms.mean[j] = sample_mean(vals);
      if (vals.size() >= 2) {
        ms.stdev[j] = sample_sd(vals);
        ms.iqr_over_1p3[j] = (percentile(vals, 0.75) - percentile(vals, 0.25)) / 1.3;
        if (ms.stdev[j] > 0.0)
          for (std::size_t r = 0; r < cfg.reps; ++r)
            if (!std::isnan(ms.estimates[r][j]))
              ms.standardized[r][j] = (ms.estimates[r][j] - ms.mean[j]) / ms.stdev[j];
      }
    }
  }
  return res;
}

namespace detail {

inline std::string column_suffix(Method m) {
  std::string s = method_name(m);
  std::replace(s.begin(), s.end(), '-', '_');
  return s;
}

inline void write_qq_csv(const std::string& path, const MethodSummary& ms) {
  std::vector<double> pooled;
  for (const auto& rep : ms.standardized)
    for (double v : rep)
      if (!std::isnan(v)) pooled.push_back(v);
  std::sort(pooled.begin(), pooled.end());
  std::ofstream os(path);
  os << "theoretical,sample\n";
  const double n = static_cast<double>(pooled.size());
  for (std::size_t i = 0; i < pooled.size(); ++i)
    os << fmt_double(normal_quantile((static_cast<double>(i) + 0.5) / n)) << ','
       << fmt_double(pooled[i]) << '\n';
}

}  // namespace detail

// Writes the figure datasets (mean curve, the two QQ tables, the spread
// table) plus summary.json; returns the paths written.
inline std::vector<std::string> write_study_outputs(const StudyResult& res,
                                                    const std::string& outdir) {
  namespace fs = std::filesystem;
  fs::create_directories(outdir);
  std::vector<std::string> written;

  const MethodSummary* efficient = nullptr;
  const MethodSummary* inefficient = nullptr;
  for (const MethodSummary& ms : res.methods) {
    if (ms.method == Method::two_step) efficient = &ms;
    if (ms.method == Method::local_constant) inefficient = &ms;
  }

  {
    const std::string path = (fs::path(outdir) / "mean_curve.csv").string();
    std::ofstream os(path);
    os << "x,true_g";
    for (const MethodSummary& ms : res.methods) os << ",mean_" << detail::column_suffix(ms.method);
    os << '\n';
    for (std::size_t j = 0; j < res.grid.size(); ++j) {
      os << fmt_double(res.grid[j]) << ',' << fmt_double(true_g(res.grid[j]));
      for (const MethodSummary& ms : res.methods) os << ',' << fmt_double(ms.mean[j]);
      os << '\n';
    }
    written.push_back(path);
  }
  if (efficient) {
    const std::string path = (fs::path(outdir) / "qq_efficient.csv").string();
    detail::write_qq_csv(path, *efficient);
    written.push_back(path);
  }
  if (inefficient) {
    const std::string path = (fs::path(outdir) / "qq_inefficient.csv").string();
    detail::write_qq_csv(path, *inefficient);
    written.push_back(path);
  }
  {
    const MethodSummary* spread = efficient ? efficient : &res.methods.front();
    const std::string path = (fs::path(outdir) / "spread.csv").string();
    std::ofstream os(path);
    os << "x,method,std,iqr_over_1p3\n";
    for (std::size_t j = 0; j < res.grid.size(); ++j)
      os << fmt_double(res.grid[j]) << ',' << method_name(spread->method) << ','
         << fmt_double(spread->stdev[j]) << ',' << fmt_double(spread->iqr_over_1p3[j]) << '\n';
    written.push_back(path);
  }
  {
    const std::string path = (fs::path(outdir) / "summary.json").string();
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["config"] = study_config_to_json(res.config);
    j["censoring_fraction"] = res.censoring_fraction;
    j["mean_censoring_fraction"] = sample_mean(res.censoring_fraction);
    j["std_ddof"] = 1;
    nlohmann::ordered_json defined;
    for (const MethodSummary& ms : res.methods) {
      std::size_t total = 0;
      for (std::size_t c : ms.defined) total += c;
      nlohmann::ordered_json entry;
      entry["defined_points"] = total;
      entry["possible_points"] = res.grid.size() * res.config.reps;
      defined[method_name(ms.method)] = entry;
    }
    j["coverage"] = defined;
    std::ofstream os(path);
    os << j.dump(2) << '\n';
    written.push_back(path);
  }
  return written;
}

}  // namespace filtreg
