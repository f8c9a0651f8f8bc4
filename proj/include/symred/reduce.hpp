#pragma once

// Statistical checks of the reduction: orbit projection of matrix ensembles,
// two-sample law comparison at fixed times, and short-time estimates of
// generators and drifts.

#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "symred/geom.hpp"
#include "symred/sde.hpp"
#include "symred/stats.hpp"

namespace symred {

// Applies eigen_project to every retained sample of a matrix-BM ensemble
// (HermitianBasis coordinates); the result lives in the A_{n-1} chamber.
inline PathEnsemble project_ensemble(const PathEnsemble& matrix_ens, int n, double wall_eps = kDefaultWallEps,
                                     unsigned threads = 0) {
  const HermitianBasis basis(n);
  if (matrix_ens.dim != static_cast<std::size_t>(basis.dim()))
    throw std::invalid_argument("project_ensemble: ensemble dimension does not match n");
  PathEnsemble out = matrix_ens;
  out.label = matrix_ens.label + "_projected";
  out.dim = static_cast<std::size_t>(n);
  out.values.assign(out.n_paths * out.n_records() * out.dim, 0.0);
  const std::size_t nr = out.n_records();
  parallel_for(out.n_paths, threads, [&](std::size_t p) {
    for (std::size_t r = 0; r < nr; ++r) {
      Eigen::VectorXd ev;
      try {
        ev = eigen_project(hermitian_sample(matrix_ens, basis, p, r), wall_eps);
      } catch (const DomainError& e) {
        throw DomainError(std::string(e.what()) + " [path " + std::to_string(p) + ", t=" +
                          std::to_string(matrix_ens.times[r]) + "]");
      }
      std::copy(ev.data(), ev.data() + n, out.values.data() + (p * nr + r) * out.dim);
    }
  });
  return out;
}

struct CoordinateComparison {
  KsResult ks;
  MCEstimate mean_a, mean_b;
  double var_a = 0.0, var_b = 0.0;
  double var_se_a = 0.0, var_se_b = 0.0;

  [[nodiscard]] double mean_z() const {
    return std::abs(mean_a.mean - mean_b.mean) /
           std::sqrt(mean_a.std_error * mean_a.std_error + mean_b.std_error * mean_b.std_error);
  }
  [[nodiscard]] double var_z() const {
    return std::abs(var_a - var_b) / std::sqrt(var_se_a * var_se_a + var_se_b * var_se_b);
  }
};

struct CovarianceResidual {
  std::size_t i = 0, j = 0;
  double cov_a = 0.0, cov_b = 0.0;
  double stderr_combined = 0.0;
};

struct LawComparison {
  double time = 0.0;
  std::vector<CoordinateComparison> coords;
  std::vector<CovarianceResidual> covariances;

  [[nodiscard]] double min_p_value() const {
    double p = 1.0;
    for (const auto& c : coords) p = std::min(p, c.ks.p_value);
    return p;
  }
  // Largest |difference| / combined stderr over means and variances.
  [[nodiscard]] double max_moment_z() const {
    double z = 0.0;
    for (const auto& c : coords) z = std::max({z, c.mean_z(), c.var_z()});
    return z;
  }
};

namespace detail {

inline CovarianceResidual covariance_residual(std::span<const double> ai, std::span<const double> aj,
                                              std::span<const double> bi, std::span<const double> bj,
                                              std::size_t i, std::size_t j) {
  auto products = [](std::span<const double> x, std::span<const double> y) {
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      mx += x[k];
      my += y[k];
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(y.size());
    std::vector<double> out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - mx) * (y[k] - my);
    return mc_estimate(out);
  };
  const MCEstimate ca = products(ai, aj);
  const MCEstimate cb = products(bi, bj);
  return {i, j, ca.mean, cb.mean, std::sqrt(ca.std_error * ca.std_error + cb.std_error * cb.std_error)};
}

}  // namespace detail

inline LawComparison compare_laws(const PathEnsemble& a, const PathEnsemble& b, double at_time) {
  if (a.dim != b.dim) throw std::invalid_argument("compare_laws: dimension mismatch");
  const std::size_t ra = a.record_index(at_time);
  const std::size_t rb = b.record_index(at_time);
  LawComparison out;
  out.time = at_time;
  std::vector<std::vector<double>> ca, cb;
  for (std::size_t i = 0; i < a.dim; ++i) {
    ca.push_back(a.column(ra, i));
    cb.push_back(b.column(rb, i));
    CoordinateComparison c;
    c.ks = ks_two_sample(ca.back(), cb.back());
    c.mean_a = mc_estimate(ca.back(), a.master_seed);
    c.mean_b = mc_estimate(cb.back(), b.master_seed);
    c.var_a = sample_variance(ca.back());
    c.var_b = sample_variance(cb.back());
    c.var_se_a = sample_variance_stderr(ca.back());
    c.var_se_b = sample_variance_stderr(cb.back());
    out.coords.push_back(c);
  }
  for (std::size_t i = 0; i < a.dim; ++i)
    for (std::size_t j = i + 1; j < a.dim; ++j)
      out.covariances.push_back(detail::covariance_residual(ca[i], ca[j], cb[i], cb[j], i, j));
  return out;
}

inline void to_json(nlohmann::json& j, const LawComparison& c) {
  nlohmann::json coords = nlohmann::json::array();
  for (std::size_t i = 0; i < c.coords.size(); ++i) {
    const auto& k = c.coords[i];
    coords.push_back({{"coordinate", i},
                      {"ks", k.ks},
                      {"mean_a", k.mean_a},
                      {"mean_b", k.mean_b},
                      {"var_a", k.var_a},
                      {"var_b", k.var_b},
                      {"var_stderr_a", k.var_se_a},
                      {"var_stderr_b", k.var_se_b}});
  }
  nlohmann::json cov = nlohmann::json::array();
  for (const auto& r : c.covariances)
    cov.push_back({{"i", r.i}, {"j", r.j}, {"cov_a", r.cov_a}, {"cov_b", r.cov_b}, {"stderr", r.stderr_combined}});
  j = nlohmann::json{{"time", c.time}, {"coordinates", coords}, {"covariances", cov}};
}

inline void print_table(std::ostream& os, const LawComparison& c) {
  os << "law comparison at t=" << c.time << '\n';
  os << "  coord      KS D     p-value     mean A      mean B      var A       var B\n";
  os << std::fixed;
  for (std::size_t i = 0; i < c.coords.size(); ++i) {
    const auto& k = c.coords[i];
    os << "  " << std::setw(5) << i << std::setprecision(4) << std::setw(10) << k.ks.statistic << std::setw(12)
       << k.ks.p_value << std::setw(12) << k.mean_a.mean << std::setw(12) << k.mean_b.mean << std::setw(12) << k.var_a
       << std::setw(12) << k.var_b << '\n';
  }
  os << std::defaultfloat;
}

// ---------------------------------------------------------------------------
// Generator and drift estimation

using ScalarFunction = std::function<double(std::span<const double>)>;

struct GeneratorEstimate {
  MCEstimate slope_t;       // (E f(X_t) - f(x0)) / t
  MCEstimate slope_half;    // same at t/2
  MCEstimate richardson;    // 2 * slope_half - slope_t, per path
  double wall_fraction = 0.0;
};

inline void to_json(nlohmann::json& j, const GeneratorEstimate& g) {
  j = nlohmann::json{{"slope_t", g.slope_t},
                     {"slope_half", g.slope_half},
                     {"richardson", g.richardson},
                     {"wall_fraction", g.wall_fraction}};
}

// Short-time slope estimate of (A f)(x0) from an ensemble started at x0 whose
// grid holds t and t/2. Both slopes come from the same paths, so the
// Richardson combination is formed per path.
inline GeneratorEstimate generator_estimate(const PathEnsemble& ens, const ScalarFunction& f, double t) {
  const std::size_t rt = ens.record_index(t);
  const std::size_t rh = ens.record_index(0.5 * t);
  const double wall = static_cast<double>(ens.rejected.size()) / static_cast<double>(ens.n_paths);
  if (wall > 0.01) throw std::runtime_error("generator_estimate: wall events on more than 1% of paths");
  const double f0 = f(ens.at(0, 0));
  std::vector<double> st, sh, rich;
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    if (!ens.is_alive(p, rt)) continue;
    const double a = (f(ens.at(p, rt)) - f0) / t;
    const double b = (f(ens.at(p, rh)) - f0) / (0.5 * t);
    st.push_back(a);
    sh.push_back(b);
    rich.push_back(2.0 * b - a);
  }
  return {mc_estimate(st, ens.master_seed), mc_estimate(sh, ens.master_seed), mc_estimate(rich, ens.master_seed), wall};
}

// Pathwise time reversal of the retained records: record r of the result is
// record (n-1-r) of the input, re-timed from zero.
inline PathEnsemble time_reverse(const PathEnsemble& ens) {
  PathEnsemble out = ens;
  out.label = ens.label + "_reversed";
  const std::size_t nr = ens.n_records();
  const double t_end = ens.times.back();
  for (std::size_t r = 0; r < nr; ++r) {
    out.times[r] = t_end - ens.times[nr - 1 - r];
    out.record_steps[r] = ens.record_steps.back() - ens.record_steps[nr - 1 - r];
  }
  for (std::size_t p = 0; p < ens.n_paths; ++p)
    for (std::size_t r = 0; r < nr; ++r) {
      const auto src = ens.at(p, nr - 1 - r);
      std::copy(src.begin(), src.end(), out.values.data() + (p * nr + r) * ens.dim);
      out.alive[p * nr + r] = ens.alive[p * nr + nr - 1 - r];
    }
  return out;
}

struct DriftEstimate {
  Eigen::VectorXd at_point;
  std::vector<MCEstimate> drift;
  std::size_t bin_count = 0;
};

// Local-constant regression of increments over [at_time, at_time + window]
// on the bin of paths whose state at at_time lies within `bandwidth` of the
// ensemble mean point. bandwidth <= 0 selects a quarter of the RMS spread.
inline DriftEstimate drift_estimate(const PathEnsemble& ens, double at_time, double window, double bandwidth = 0.0) {
  const std::size_t r0 = ens.record_index(at_time);
  const std::size_t r1 = ens.record_index(at_time + window);
  if (ens.record_steps[r1] < ens.record_steps[r0] + 2) throw std::invalid_argument("drift_estimate: window must cover >= 2 steps");
  const Eigen::Index d = static_cast<Eigen::Index>(ens.dim);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  std::size_t count = 0;
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    if (!ens.is_alive(p, r0) || !ens.is_alive(p, r1)) continue;
    mean += Eigen::Map<const Eigen::VectorXd>(ens.at(p, r0).data(), d);
    ++count;
  }
  if (count < 2) throw std::runtime_error("drift_estimate: empty ensemble");
  mean /= static_cast<double>(count);
  if (!(bandwidth > 0.0)) {
    double ss = 0.0;
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
      if (!ens.is_alive(p, r0) || !ens.is_alive(p, r1)) continue;
      ss += (Eigen::Map<const Eigen::VectorXd>(ens.at(p, r0).data(), d) - mean).squaredNorm();
    }
    bandwidth = 0.25 * std::sqrt(ss / static_cast<double>(count));
  }
  const double dt = ens.times[r1] - ens.times[r0];
  std::vector<std::vector<double>> incr(ens.dim);
  for (std::size_t p = 0; p < ens.n_paths; ++p) {
    if (!ens.is_alive(p, r0) || !ens.is_alive(p, r1)) continue;
    const auto x0 = Eigen::Map<const Eigen::VectorXd>(ens.at(p, r0).data(), d);
    if ((x0 - mean).norm() > bandwidth) continue;
    const auto x1 = ens.at(p, r1);
    for (std::size_t i = 0; i < ens.dim; ++i) incr[i].push_back((x1[i] - x0(static_cast<Eigen::Index>(i))) / dt);
  }
  if (incr.front().size() < 2) throw std::runtime_error("drift_estimate: empty bin");
  DriftEstimate out;
  out.at_point = mean;
  out.bin_count = incr.front().size();
  for (const auto& v : incr) out.drift.push_back(mc_estimate(v, ens.master_seed));
  return out;
}

}  // namespace symred
