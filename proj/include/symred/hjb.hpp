#pragma once

// Feynman-Kac estimators over the radial processes, stationary-solution
// checks, Calogero-Moser coupling adjudication and the ground-state residual.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "symred/grid.hpp"
#include "symred/parallel.hpp"
#include "symred/rootsys.hpp"
#include "symred/sde.hpp"
#include "symred/stats.hpp"

namespace symred {

struct McSettings {
  std::size_t n_paths = 10000;
  double dt = 1e-3;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

using ChamberFunction = std::function<double(const Eigen::VectorXd&)>;

namespace detail {

// Grid steps of the requested times (sorted copy not required; each must be a
// multiple of dt).
inline std::vector<std::size_t> time_steps(const std::vector<double>& times, double dt) {
  std::vector<std::size_t> steps;
  for (double t : times) {
    if (t == 0.0) {
      steps.push_back(0);
      continue;
    }
    steps.push_back(step_count(t, dt));
  }
  return steps;
}

}  // namespace detail

// sqrt(delta(x)) * E[f(X_t)] for the forward radial process started at x, at
// every requested time. All x share the random stream of mc.seed.
inline std::vector<MCEstimate> psi_plus_surface(const RootSystem& rs, const ChamberFunction& f, const Eigen::VectorXd& x,
                                                const std::vector<double>& times, const McSettings& mc) {
  detail::require_chamber(rs, x, "psi_plus_estimate");
  if (times.empty()) throw std::invalid_argument("psi_plus_estimate: no times");
  const SdeProblem p = radial_sde(rs, RadialDirection::forward);
  const auto steps = detail::time_steps(times, mc.dt);
  const std::size_t n_steps = *std::max_element(steps.begin(), steps.end());
  const double scale = std::sqrt(delta(rs, x));
  const std::vector<double> start(x.data(), x.data() + x.size());

  std::vector<std::vector<double>> samples(times.size(), std::vector<double>(mc.n_paths, 0.0));
  parallel_for(mc.n_paths, mc.threads, [&](std::size_t path) {
    RngStream rng = path_stream(mc.seed, path);
    Eigen::VectorXd y(x.size());
    simulate_path(p, start, n_steps, mc.dt, rng, path, [&](std::size_t k, double, std::span<const double> xs) {
      for (std::size_t i = 0; i < steps.size(); ++i) {
        if (steps[i] != k) continue;
        std::copy(xs.begin(), xs.end(), y.data());
        samples[i][path] = scale * f(y);
      }
    });
  });
  std::vector<MCEstimate> out;
  for (auto& s : samples) out.push_back(mc_estimate(s, mc.seed));
  return out;
}

inline MCEstimate psi_plus_estimate(const RootSystem& rs, const ChamberFunction& f, const Eigen::VectorXd& x, double t,
                                    const McSettings& mc) {
  return psi_plus_surface(rs, f, x, {t}, mc).front();
}

inline constexpr double kWeightOverflow = 1e12;

struct PsiTildeResult {
  std::vector<MCEstimate> estimates;  // one per requested time
  std::size_t absorbed = 0;           // paths killed at a wall before the last time
  std::size_t overflow_events = 0;    // paths whose weight exceeded kWeightOverflow
  double max_weight = 0.0;
};

inline void to_json(nlohmann::json& j, const PsiTildeResult& r) {
  j = nlohmann::json{{"estimates", r.estimates},
                     {"absorbed", r.absorbed},
                     {"overflow_events", r.overflow_events},
                     {"max_weight", r.max_weight}};
}

// delta^{-1/2}(x) E[exp(-f(Y_t)) exp(1/2 int_0^t sum_a c_a / a(Y_s)^2 ds)] with Y
// the reversed radial process; paths absorbed at a wall contribute 0 from
// then on. The time integral uses the trapezoidal rule on the dt grid.
inline PsiTildeResult psi_tilde_surface(const RootSystem& rs, const ChamberFunction& f, const SpinLevel& s,
                                        const Eigen::VectorXd& x, const std::vector<double>& times,
                                        const McSettings& mc) {
  detail::require_chamber(rs, x, "psi_tilde_estimate");
  s.validate(rs);
  if (times.empty()) throw std::invalid_argument("psi_tilde_estimate: no times");
  const SdeProblem p = radial_sde(rs, RadialDirection::reversed);
  const auto steps = detail::time_steps(times, mc.dt);
  const std::size_t n_steps = *std::max_element(steps.begin(), steps.end());
  const double scale = std::exp(-0.5 * log_delta(rs, x));
  const std::vector<double> start(x.data(), x.data() + x.size());
  const bool spin = !s.is_zero();

  std::vector<std::vector<double>> samples(times.size(), std::vector<double>(mc.n_paths, 0.0));
  std::vector<double> weights(mc.n_paths, 1.0);
  std::vector<unsigned char> killed(mc.n_paths, 0);
  parallel_for(mc.n_paths, mc.threads, [&](std::size_t path) {
    RngStream rng = path_stream(mc.seed, path);
    Eigen::VectorXd y(x.size());
    double integral = 0.0;
    double prev_rate = 0.0;
    double max_w = 1.0;
    const PathStatus st = simulate_path(p, start, n_steps, mc.dt, rng, path,
                                        [&](std::size_t k, double, std::span<const double> xs) {
      std::copy(xs.begin(), xs.end(), y.data());
      if (spin) {
        const double rate = 2.0 * spin_potential(rs, y, s);  // sum_a c_a / a(y)^2
        if (k > 0) integral += 0.25 * mc.dt * (prev_rate + rate);
        prev_rate = rate;
      }
      const double w = std::exp(integral);
      max_w = std::max(max_w, w);
      for (std::size_t i = 0; i < steps.size(); ++i)
        if (steps[i] == k) samples[i][path] = scale * std::exp(-f(y)) * w;
    });
    weights[path] = max_w;
    killed[path] = st.absorbed ? 1 : 0;
  });

  PsiTildeResult r;
  for (auto& v : samples) r.estimates.push_back(mc_estimate(v, mc.seed));
  for (std::size_t i = 0; i < mc.n_paths; ++i) {
    r.absorbed += killed[i];
    if (weights[i] > kWeightOverflow) ++r.overflow_events;
    r.max_weight = std::max(r.max_weight, weights[i]);
  }
  return r;
}

inline MCEstimate psi_tilde_estimate(const RootSystem& rs, const ChamberFunction& f, const SpinLevel& s,
                                     const Eigen::VectorXd& x, double t, const McSettings& mc) {
  return psi_tilde_surface(rs, f, s, x, {t}, mc).estimates.front();
}

struct StationaryRow {
  Eigen::VectorXd x;
  double t = 0.0;
  double estimate = 0.0;  // psi+ exp(-gamma t / 2)
  double std_error = 0.0;
  double target = 0.0;    // sqrt(delta) f
  double deviation = 0.0;
};

struct StationaryReport {
  std::vector<StationaryRow> rows;
  double max_deviation = 0.0;
  double max_excess = 0.0;  // max of deviation - 3 stderr
};

inline void to_json(nlohmann::json& j, const StationaryReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"x", std::vector<double>(row.x.data(), row.x.data() + row.x.size())},
                    {"t", row.t},
                    {"estimate", row.estimate},
                    {"stderr", row.std_error},
                    {"target", row.target},
                    {"deviation", row.deviation}});
  j = nlohmann::json{{"rows", rows}, {"max_deviation", r.max_deviation}, {"max_excess", r.max_excess}};
}

// Compares psi+(t,x) exp(-gamma t/2) with sqrt(delta(x)) f(x) on a node set.
inline StationaryReport stationary_check(const RootSystem& rs, const ChamberFunction& f, double gamma,
                                         const std::vector<Eigen::VectorXd>& x_nodes, const std::vector<double>& t_nodes,
                                         const McSettings& mc) {
  StationaryReport rep;
  rep.max_excess = -std::numeric_limits<double>::infinity();
  for (const auto& x : x_nodes) {
    const auto est = psi_plus_surface(rs, f, x, t_nodes, mc);
    const double target = std::sqrt(delta(rs, x)) * f(x);
    for (std::size_t i = 0; i < t_nodes.size(); ++i) {
      StationaryRow row;
      row.x = x;
      row.t = t_nodes[i];
      const double g = std::exp(-0.5 * gamma * t_nodes[i]);
      row.estimate = est[i].mean * g;
      row.std_error = est[i].std_error * g;
      row.target = target;
      row.deviation = std::abs(row.estimate - target);
      rep.max_deviation = std::max(rep.max_deviation, row.deviation);
      rep.max_excess = std::max(rep.max_excess, row.deviation - 3.0 * row.std_error);
      rep.rows.push_back(std::move(row));
    }
  }
  return rep;
}

// Central finite-difference value of 1/2 delta^{-1/2} Laplacian delta^{1/2}
// along an orthonormal basis of the root span. Ratios to the centre value are
// formed in log space so large or tiny delta do not lose precision.
inline double fd_potential(const RootSystem& rs, const Eigen::VectorXd& x, double h = 1e-4) {
  const double l0 = log_delta(rs, x);
  const Eigen::MatrixXd basis = rs.span_basis();
  double lap = 0.0;
  for (Eigen::Index k = 0; k < basis.cols(); ++k) {
    const double lp = log_delta(rs, x + h * basis.col(k));
    const double lm = log_delta(rs, x - h * basis.col(k));
    lap += (std::expm1(0.5 * (lp - l0)) + std::expm1(0.5 * (lm - l0))) / (h * h);
  }
  return 0.5 * lap;
}

struct AdjudicationCase {
  RootSystem rs;
  std::vector<Eigen::VectorXd> points;
};

struct AdjudicationRow {
  std::string system;
  Eigen::VectorXd x;
  double oracle = 0.0;
  double finite_difference = 0.0;
  double paper = 0.0;
  double op83 = 0.0;
  bool paper_match = false;
  bool op83_match = false;
};

struct AdjudicationReport {
  double tolerance = 1e-8;
  std::vector<AdjudicationRow> rows;
  bool paper_matches = true;  // every row
  bool op83_matches = true;

  // Verdict restricted to one system label.
  [[nodiscard]] bool matches(const std::string& system, CouplingConvention c) const {
    bool any = false, all = true;
    for (const auto& r : rows) {
      if (r.system != system) continue;
      any = true;
      all = all && (c == CouplingConvention::paper ? r.paper_match : r.op83_match);
    }
    return any && all;
  }
};

inline void to_json(nlohmann::json& j, const AdjudicationReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"system", row.system},
                    {"x", std::vector<double>(row.x.data(), row.x.data() + row.x.size())},
                    {"oracle", row.oracle},
                    {"finite_difference", row.finite_difference},
                    {"paper", row.paper},
                    {"op83", row.op83},
                    {"paper_match", row.paper_match},
                    {"op83_match", row.op83_match}});
  j = nlohmann::json{{"tolerance", r.tolerance},
                     {"rows", rows},
                     {"verdict", {{"paper", r.paper_matches ? "matches" : "mismatch"},
                                  {"op83", r.op83_matches ? "matches" : "mismatch"}}}};
}

inline void print_table(std::ostream& os, const AdjudicationReport& r) {
  os << std::left << std::setw(16) << "system" << std::setw(28) << "x" << std::right << std::setw(14) << "oracle"
     << std::setw(14) << "paper" << std::setw(14) << "op83" << "  paper op83\n";
  for (const auto& row : r.rows) {
    std::ostringstream xs;
    xs << std::setprecision(3) << '(';
    for (Eigen::Index i = 0; i < row.x.size(); ++i) xs << (i ? "," : "") << row.x(i);
    xs << ')';
    os << std::left << std::setw(16) << row.system << std::setw(28) << xs.str() << std::right << std::scientific
       << std::setprecision(5) << std::setw(14) << row.oracle << std::setw(14) << row.paper << std::setw(14) << row.op83
       << std::defaultfloat << "  " << std::setw(5) << (row.paper_match ? "ok" : "FAIL") << ' ' << std::setw(4)
       << (row.op83_match ? "ok" : "FAIL") << '\n';
  }
  os << "verdict: paper " << (r.paper_matches ? "matches" : "mismatch") << ", op83 "
     << (r.op83_matches ? "matches" : "mismatch") << '\n';
}

// Evaluates both coupling conventions against the potential defined by
// 1/2 delta^{-1/2} Laplacian delta^{1/2} (closed form, with the
// finite-difference value reported alongside). Match means
// |value - oracle| <= tol (1 + |oracle|).
inline AdjudicationReport cm_adjudicate_coupling(const std::vector<AdjudicationCase>& cases, double tol = 1e-8) {
  AdjudicationReport rep;
  rep.tolerance = tol;
  for (const auto& c : cases) {
    for (const auto& x : c.points) {
      AdjudicationRow row;
      row.system = c.rs.name;
      row.x = x;
      row.oracle = potential_from_delta_closed(c.rs, x);
      row.finite_difference = fd_potential(c.rs, x);
      row.paper = cm_potential_closed(c.rs, x, CouplingConvention::paper);
      row.op83 = cm_potential_closed(c.rs, x, CouplingConvention::op83);
      const double scale = tol * (1.0 + std::abs(row.oracle));
      row.paper_match = std::abs(row.paper - row.oracle) <= scale;
      row.op83_match = std::abs(row.op83 - row.oracle) <= scale;
      rep.paper_matches = rep.paper_matches && row.paper_match;
      rep.op83_matches = rep.op83_matches && row.op83_match;
      rep.rows.push_back(std::move(row));
    }
  }
  return rep;
}

// sup over nodes of |(-1/2 Laplacian_h + V) sqrt(delta)| / sup sqrt(delta), with
// the five-point (or 2r+1-point) Laplacian using exact neighbour values.
inline double cm_ground_state_check(const RootSystem& rs, const TensorGrid& grid) {
  grid.check_inside(rs);
  const double h = grid.h;
  double sup_res = 0.0, sup_g = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Eigen::VectorXd x = grid.node(i);
    const double g = std::exp(0.5 * log_delta(rs, x));
    double lap = 0.0;
    for (std::size_t k = 0; k < grid.rank(); ++k) {
      const Eigen::VectorXd e = h * grid.axes.col(static_cast<Eigen::Index>(k));
      lap += (std::exp(0.5 * log_delta(rs, x + e)) - 2.0 * g + std::exp(0.5 * log_delta(rs, x - e))) / (h * h);
    }
    sup_res = std::max(sup_res, std::abs(-0.5 * lap + potential_from_delta_closed(rs, x) * g));
    sup_g = std::max(sup_g, g);
  }
  return sup_res / sup_g;
}

}  // namespace symred
