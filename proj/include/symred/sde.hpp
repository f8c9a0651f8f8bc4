#pragma once

// Reproducible stochastic integration. Every path owns a SplitMix64 stream
// derived from (master_seed, path_index), so an ensemble is a pure function
// of its inputs no matter how paths are scheduled across threads.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "symred/geom.hpp"
#include "symred/parallel.hpp"
#include "symred/rng.hpp"
#include "symred/rootsys.hpp"

namespace symred {

enum class Interpretation { ito, stratonovich };
enum class WallPolicy { substep, reject_path };

class WallCollisionError : public std::runtime_error {
 public:
  WallCollisionError(std::size_t path, double time)
      : std::runtime_error("wall collision: substepping exhausted on path " + std::to_string(path) +
                           " at t=" + format_time(time)),
        path_(path),
        time_(time) {}
  [[nodiscard]] std::size_t path() const { return path_; }
  [[nodiscard]] double time() const { return time_; }

 private:
  static std::string format_time(double t) {
    std::ostringstream os;
    os << std::setprecision(10) << t;
    return os.str();
  }
  std::size_t path_;
  double time_;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using VectorField = std::function<void(std::span<const double>, std::span<double>)>;

struct SdeProblem {
  std::string label;
  std::size_t dim = 0;
  std::size_t noise_dim = 0;
  VectorField drift;
  // Writes the dim x noise_dim matrix of diffusion columns, column-major.
  VectorField diffusion;
  bool constant_diffusion = false;
  Interpretation interpretation = Interpretation::ito;
  // guard(x, h): x is an admissible state after a step of size h.
  std::function<bool(std::span<const double>, double)> domain_guard;
  WallPolicy wall_policy = WallPolicy::substep;
  std::function<void(std::span<double>)> constraint_projector;

  void validate() const {
    if (dim == 0) throw std::invalid_argument("SdeProblem '" + label + "': dim must be positive");
    if (!drift) throw std::invalid_argument("SdeProblem '" + label + "': missing drift");
    if (noise_dim > 0 && !diffusion) throw std::invalid_argument("SdeProblem '" + label + "': missing diffusion");
  }
};

inline constexpr int kMaxSubstepLevels = 20;

struct PathStatus {
  bool absorbed = false;
  double event_time = 0.0;
  std::size_t substep_events = 0;
};

namespace detail {

// One-path integrator with reusable buffers.
class PathIntegrator {
 public:
  explicit PathIntegrator(const SdeProblem& p)
      : p_(p),
        a0_(p.dim),
        a1_(p.dim),
        b0_(p.dim * p.noise_dim),
        b1_(p.dim * p.noise_dim),
        pred_(p.dim),
        out_(p.dim) {
    if (p_.constant_diffusion && p_.noise_dim > 0) {
      std::vector<double> zero(p_.dim, 0.0);
      p_.diffusion(zero, b0_);
    }
  }

  // Single unsubdivided step; false when the guard rejects the predictor or the result.
  bool try_step(std::span<const double> x, double h, std::span<const double> dw, std::span<double> out) {
    const std::size_t d = p_.dim;
    const std::size_t k = p_.noise_dim;
    p_.drift(x, a0_);
    if (!p_.constant_diffusion && k > 0) p_.diffusion(x, b0_);
    for (std::size_t i = 0; i < d; ++i) {
      double v = x[i] + a0_[i] * h;
      for (std::size_t j = 0; j < k; ++j) v += b0_[j * d + i] * dw[j];
      pred_[i] = v;
    }
    if (p_.interpretation == Interpretation::ito) {
      std::copy(pred_.begin(), pred_.end(), out.begin());
    } else {
      if (p_.constraint_projector) p_.constraint_projector(pred_);
      if (p_.domain_guard && !p_.domain_guard(pred_, h)) return false;
      p_.drift(pred_, a1_);
      const bool varying = !p_.constant_diffusion && k > 0;
      if (varying) p_.diffusion(pred_, b1_);
      for (std::size_t i = 0; i < d; ++i) {
        double v = x[i] + 0.5 * (a0_[i] + a1_[i]) * h;
        for (std::size_t j = 0; j < k; ++j) {
          const double col = varying ? 0.5 * (b0_[j * d + i] + b1_[j * d + i]) : b0_[j * d + i];
          v += col * dw[j];
        }
        out[i] = v;
      }
    }
    if (p_.constraint_projector) p_.constraint_projector(out);
    for (std::size_t i = 0; i < d; ++i)
      if (!std::isfinite(out[i])) throw NumericError("non-finite state in '" + p_.label + "'");
    return !p_.domain_guard || p_.domain_guard(out, h);
  }

  // Advances x over [t, t+h] with increment dw, halving the step with
  // Brownian-bridge refinement of dw while the guard fails.
  bool step(std::span<double> x, double h, std::span<const double> dw, RngStream& rng, int level,
            PathStatus& status) {
    if (try_step(x, h, dw, out_)) {
      std::copy(out_.begin(), out_.end(), x.begin());
      return true;
    }
    if (p_.wall_policy == WallPolicy::reject_path || level >= kMaxSubstepLevels) return false;
    ++status.substep_events;
    const std::size_t k = p_.noise_dim;
    std::vector<double> dw1(k), dw2(k);
    const double bridge_sd = std::sqrt(h / 4.0);
    for (std::size_t j = 0; j < k; ++j) {
      dw1[j] = 0.5 * dw[j] + bridge_sd * next_gaussian(rng);
      dw2[j] = dw[j] - dw1[j];
    }
    std::vector<double> saved(x.begin(), x.end());
    if (!step(x, 0.5 * h, dw1, rng, level + 1, status) || !step(x, 0.5 * h, dw2, rng, level + 1, status)) {
      std::copy(saved.begin(), saved.end(), x.begin());
      return false;
    }
    return true;
  }

 private:
  const SdeProblem& p_;
  std::vector<double> a0_, a1_, b0_, b1_, pred_, out_;
};

}  // namespace detail

// Integrates one path on the grid t_k = k*dt, k = 0..n_steps, calling
// visit(k, t_k, x) at every grid time the path reaches. A rejected path
// (wall_policy = reject_path) stops at its last admissible state.
template <class Visitor>
PathStatus simulate_path(const SdeProblem& p, std::span<const double> x0, std::size_t n_steps, double dt,
                         RngStream& rng, std::size_t path_index, Visitor&& visit) {
  detail::PathIntegrator integrator(p);
  std::vector<double> x(x0.begin(), x0.end());
  std::vector<double> dw(p.noise_dim);
  const double sd = std::sqrt(dt);
  PathStatus status;
  visit(std::size_t{0}, 0.0, std::span<const double>(x));
  for (std::size_t k = 1; k <= n_steps; ++k) {
    for (auto& w : dw) w = sd * next_gaussian(rng);
    const double t0 = static_cast<double>(k - 1) * dt;
    if (!integrator.step(x, dt, dw, rng, 0, status)) {
      if (p.wall_policy == WallPolicy::substep) throw WallCollisionError(path_index, t0);
      status.absorbed = true;
      status.event_time = t0;
      return status;
    }
    visit(k, static_cast<double>(k) * dt, std::span<const double>(x));
  }
  return status;
}

inline std::size_t step_count(double t_final, double dt) {
  if (!(dt > 0.0) || !(t_final > 0.0)) throw std::invalid_argument("t and dt must be positive");
  const double r = t_final / dt;
  const auto n = static_cast<std::size_t>(std::llround(r));
  if (n == 0 || std::abs(r - static_cast<double>(n)) > 1e-9 * r)
    throw std::invalid_argument("t_final must be an integer multiple of dt");
  return n;
}

struct PathEvent {
  std::size_t path = 0;
  double time = 0.0;
};

// n_paths x n_records x dim samples; records are taken every `record_every`
// integration steps (and always at the final time).
struct PathEnsemble {
  std::string label;
  std::size_t n_paths = 0;
  std::size_t n_steps = 0;
  std::size_t dim = 0;
  double dt = 0.0;
  std::uint64_t master_seed = 0;
  std::vector<std::size_t> record_steps;
  std::vector<double> times;
  std::vector<double> values;
  std::vector<PathEvent> rejected;    // absorbed paths, by path index
  std::vector<unsigned char> alive;   // n_paths x n_records
  std::size_t substepped_paths = 0;

  [[nodiscard]] std::size_t n_records() const { return times.size(); }

  [[nodiscard]] std::span<const double> at(std::size_t path, std::size_t record) const {
    return {values.data() + (path * n_records() + record) * dim, dim};
  }
  [[nodiscard]] bool is_alive(std::size_t path, std::size_t record) const {
    return alive[path * n_records() + record] != 0;
  }

  [[nodiscard]] std::size_t record_index(double t) const {
    for (std::size_t r = 0; r < times.size(); ++r)
      if (std::abs(times[r] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return r;
    throw std::invalid_argument("time " + std::to_string(t) + " is not on the ensemble grid");
  }

  // Coordinate `coord` at record `record` over all paths alive there.
  [[nodiscard]] std::vector<double> column(std::size_t record, std::size_t coord) const {
    std::vector<double> out;
    out.reserve(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p)
      if (is_alive(p, record)) out.push_back(at(p, record)[coord]);
    return out;
  }

  void validate() const {
    if (times.empty() || times.front() != 0.0) throw std::invalid_argument("PathEnsemble: grid must start at 0");
    for (std::size_t r = 1; r < times.size(); ++r)
      if (!(times[r] > times[r - 1])) throw std::invalid_argument("PathEnsemble: times not increasing");
    for (double v : values)
      if (!std::isfinite(v)) throw std::invalid_argument("PathEnsemble: non-finite value");
  }
};

struct EnsembleOptions {
  std::size_t record_every = 1;
  unsigned threads = 0;
};

inline std::vector<std::size_t> record_schedule(std::size_t n_steps, std::size_t every) {
  if (every == 0) throw std::invalid_argument("record_every must be positive");
  std::vector<std::size_t> steps;
  for (std::size_t k = 0; k <= n_steps; k += every) steps.push_back(k);
  if (steps.back() != n_steps) steps.push_back(n_steps);
  return steps;
}

inline PathEnsemble make_ensemble_shell(std::string label, std::size_t n_paths, std::size_t n_steps, std::size_t dim,
                                        double dt, std::uint64_t seed, std::size_t record_every) {
  PathEnsemble e;
  e.label = std::move(label);
  e.n_paths = n_paths;
  e.n_steps = n_steps;
  e.dim = dim;
  e.dt = dt;
  e.master_seed = seed;
  e.record_steps = record_schedule(n_steps, record_every);
  for (std::size_t s : e.record_steps) e.times.push_back(static_cast<double>(s) * dt);
  e.values.assign(n_paths * e.times.size() * dim, 0.0);
  e.alive.assign(n_paths * e.times.size(), 0);
  return e;
}

inline PathEnsemble simulate_ensemble(const SdeProblem& p, const Eigen::VectorXd& x0, double t_final, double dt,
                                      std::size_t n_paths, std::uint64_t master_seed, EnsembleOptions opt = {}) {
  p.validate();
  if (static_cast<std::size_t>(x0.size()) != p.dim) throw std::invalid_argument("simulate_ensemble: x0 dimension mismatch");
  if (n_paths == 0) throw std::invalid_argument("simulate_ensemble: n_paths must be positive");
  std::vector<double> start(x0.data(), x0.data() + x0.size());
  if (p.constraint_projector) {
    std::vector<double> projected = start;
    p.constraint_projector(projected);
    for (std::size_t i = 0; i < start.size(); ++i)
      if (std::abs(projected[i] - start[i]) > 1e-12 * (1.0 + std::abs(start[i])))
        throw std::invalid_argument("simulate_ensemble: x0 violates the problem constraint");
  }
  if (p.domain_guard && !p.domain_guard(start, dt)) throw DomainError("simulate_ensemble: x0 fails the domain guard");

  const std::size_t n_steps = step_count(t_final, dt);
  PathEnsemble ens = make_ensemble_shell(p.label, n_paths, n_steps, p.dim, dt, master_seed, opt.record_every);
  const std::size_t nr = ens.n_records();
  std::vector<PathStatus> statuses(n_paths);

  parallel_for(n_paths, opt.threads, [&](std::size_t path) {
    RngStream rng = path_stream(master_seed, path);
    std::size_t next = 0;
    double* base = ens.values.data() + path * nr * p.dim;
    unsigned char* alive = ens.alive.data() + path * nr;
    statuses[path] = simulate_path(p, start, n_steps, dt, rng, path,
                                   [&](std::size_t k, double, std::span<const double> x) {
                                     if (next < nr && ens.record_steps[next] == k) {
                                       std::copy(x.begin(), x.end(), base + next * p.dim);
                                       alive[next] = 1;
                                       ++next;
                                     }
                                   });
    // Absorbed paths keep their last admissible state, flagged not alive.
    for (std::size_t r = next; r < nr; ++r) {
      const double* last = base + (next - 1) * p.dim;
      std::copy(last, last + p.dim, base + r * p.dim);
    }
  });

  for (std::size_t path = 0; path < n_paths; ++path) {
    if (statuses[path].absorbed) ens.rejected.push_back({path, statuses[path].event_time});
    if (statuses[path].substep_events > 0) ++ens.substepped_paths;
  }
  return ens;
}

// ---------------------------------------------------------------------------
// Problem builders

enum class RadialDirection { forward, reversed };

// Guard used during simulation: alpha(x) > kappa * |alpha| * sqrt(h) for every
// positive root, so the admissible distance to a wall shrinks with the step.
inline constexpr double kWallGuardFactor = 1e-2;

// Reversed processes are killed once alpha(x) <= |alpha| sqrt(dt).
inline constexpr double kKillZoneFactor = 1.0;

inline std::function<bool(std::span<const double>, double)> chamber_guard(const RootSystem& rs,
                                                                          std::size_t offset = 0,
                                                                          double factor = kWallGuardFactor) {
  std::vector<Eigen::VectorXd> roots = rs.positive_roots;
  std::vector<double> norms;
  for (const auto& a : roots) norms.push_back(a.norm());
  return [roots, norms, offset, factor](std::span<const double> x, double h) {
    const double scale = factor * std::sqrt(h);
    for (std::size_t i = 0; i < roots.size(); ++i) {
      double ax = 0.0;
      for (Eigen::Index k = 0; k < roots[i].size(); ++k) ax += roots[i](k) * x[offset + static_cast<std::size_t>(k)];
      if (!(ax > scale * norms[i])) return false;
    }
    return true;
  };
}

// Projection of the first `span_dim` coordinates onto the span of the roots,
// or an empty function when the roots span the ambient space.
inline std::function<void(std::span<double>)> span_constraint(const RootSystem& rs) {
  if (rs.rank == rs.ambient_dim()) return {};
  const Eigen::MatrixXd proj = span_projector(rs);
  return [proj](std::span<double> x) {
    const Eigen::Index d = proj.rows();
    Eigen::Map<Eigen::VectorXd> v(x.data(), d);
    const Eigen::VectorXd pv = proj * v;
    v = pv;
  };
}

// dX = +-1/2 grad log delta(X) dt + dW with W a Brownian motion on the span
// of the roots. Forward paths substep at walls; reversed paths are absorbed on
// entering the kill zone alpha(x) <= |alpha| sqrt(dt).
inline SdeProblem radial_sde(const RootSystem& rs, RadialDirection direction) {
  rs.validate();
  const auto d = static_cast<std::size_t>(rs.ambient_dim());
  const double sign = direction == RadialDirection::forward ? 0.5 : -0.5;
  const Eigen::MatrixXd columns = rs.span_basis();

  SdeProblem p;
  p.label = std::string("radial_") + (direction == RadialDirection::forward ? "forward" : "reversed") + "_" + rs.name;
  p.dim = d;
  p.noise_dim = static_cast<std::size_t>(rs.rank);
  p.drift = [rs, sign](std::span<const double> x, std::span<double> out) {
    detail::grad_log_delta_unchecked(rs, x, out);
    for (auto& v : out) v *= sign;
  };
  p.diffusion = [columns](std::span<const double>, std::span<double> out) {
    std::copy(columns.data(), columns.data() + columns.size(), out.begin());
  };
  p.constant_diffusion = true;
  p.interpretation = Interpretation::stratonovich;
  if (direction == RadialDirection::forward) {
    p.domain_guard = chamber_guard(rs);
    p.wall_policy = WallPolicy::substep;
  } else {
    p.domain_guard = chamber_guard(rs, 0, kKillZoneFactor);
    p.wall_policy = WallPolicy::reject_path;
  }
  p.constraint_projector = span_constraint(rs);
  return p;
}

// Brownian motion on the traceless Hermitian n x n matrices, in the
// coordinates of HermitianBasis(n).
inline SdeProblem matrix_bm_problem(int n) {
  const HermitianBasis basis(n);
  const auto d = static_cast<std::size_t>(basis.dim());
  SdeProblem p;
  p.label = "matrix_bm_n" + std::to_string(n);
  p.dim = d;
  p.noise_dim = d;
  p.drift = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
  p.diffusion = [d](std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t a = 0; a < d; ++a) out[a * d + a] = 1.0;
  };
  p.constant_diffusion = true;
  p.interpretation = Interpretation::ito;
  return p;
}

inline PathEnsemble matrix_bm(int n, const HermitianPoint& q0, double t, double dt, std::size_t n_paths,
                              std::uint64_t seed, EnsembleOptions opt = {}) {
  q0.validate();
  if (q0.n() != n) throw std::invalid_argument("matrix_bm: q0 has the wrong size");
  const HermitianBasis basis(n);
  return simulate_ensemble(matrix_bm_problem(n), basis.to_coords(q0.entries), t, dt, n_paths, seed, opt);
}

// Hermitian matrix of a matrix-BM ensemble sample.
inline HermitianPoint hermitian_sample(const PathEnsemble& ens, const HermitianBasis& basis, std::size_t path,
                                       std::size_t record) {
  const auto x = ens.at(path, record);
  const Eigen::VectorXd coords = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(basis.dim()));
  return HermitianPoint{basis.to_matrix(coords)};
}

// Hamiltonian diffusion on T*Q for Q the traceless Hermitian matrices with the
// constant orthonormal frame: H^0 = 0 and X_{H^a} = (L_a, 0). State is
// (q coords, p coords).
inline PathEnsemble flat_hamiltonian_diffusion(int n, const HermitianPoint& q0, const Eigen::MatrixXcd& p0, double t,
                                               double dt, std::size_t n_paths, std::uint64_t seed,
                                               EnsembleOptions opt = {}) {
  q0.validate();
  HermitianPoint{p0}.validate();
  const HermitianBasis basis(n);
  const auto d = static_cast<std::size_t>(basis.dim());
  SdeProblem p;
  p.label = "flat_hamiltonian_n" + std::to_string(n);
  p.dim = 2 * d;
  p.noise_dim = d;
  p.drift = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
  p.diffusion = [d](std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t a = 0; a < d; ++a) out[a * 2 * d + a] = 1.0;
  };
  p.constant_diffusion = true;
  p.interpretation = Interpretation::stratonovich;
  Eigen::VectorXd x0(2 * static_cast<Eigen::Index>(d));
  x0 << basis.to_coords(q0.entries), basis.to_coords(p0);
  return simulate_ensemble(p, x0, t, dt, n_paths, seed, opt);
}

// Reduced Hamiltonian diffusion on T*B at a spin level: state (x, u) with
//   dx = 1/2 grad log delta(x) dt + dW                    (W on the root span)
//   du = -grad_x h0(x,u) dt - sum_alpha grad_x <lambda, Y_alpha(x)> dW^alpha
// where h0 = 1/2 <u, grad log delta(x)> and <lambda, Y_alpha(x)> = sqrt(c_alpha)/alpha(x).
inline SdeProblem reduced_hamiltonian_problem(const RootSystem& rs, const SpinLevel& s) {
  rs.validate();
  s.validate(rs);
  const auto d = static_cast<std::size_t>(rs.ambient_dim());
  const auto rank = static_cast<std::size_t>(rs.rank);
  const std::size_t nroots = rs.size();
  const Eigen::MatrixXd base_cols = rs.span_basis();
  std::vector<double> sqrt_c;
  for (double c : s.coefficients) sqrt_c.push_back(std::sqrt(c));

  SdeProblem p;
  p.label = "reduced_hamiltonian_" + rs.name;
  p.dim = 2 * d;
  p.noise_dim = rank + nroots;
  p.drift = [rs, d](std::span<const double> z, std::span<double> out) {
    detail::grad_log_delta_unchecked(rs, z.first(d), out.first(d));
    for (std::size_t k = 0; k < d; ++k) out[k] *= 0.5;
    // -grad_x (1/2 <u, grad log delta>) = 1/2 sum w_alpha alpha <alpha,u> / alpha(x)^2
    for (std::size_t k = 0; k < d; ++k) out[d + k] = 0.0;
    for (std::size_t i = 0; i < rs.size(); ++i) {
      const auto& a = rs.positive_roots[i];
      double ax = 0.0, au = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        ax += a(static_cast<Eigen::Index>(k)) * z[k];
        au += a(static_cast<Eigen::Index>(k)) * z[d + k];
      }
      const double w = 0.5 * detail::log_weight(rs, i) * au / (ax * ax);
      for (std::size_t k = 0; k < d; ++k) out[d + k] += w * a(static_cast<Eigen::Index>(k));
    }
  };
  p.diffusion = [rs, d, rank, base_cols, sqrt_c](std::span<const double> z, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    const std::size_t rows = 2 * d;
    for (std::size_t j = 0; j < rank; ++j)
      for (std::size_t k = 0; k < d; ++k)
        out[j * rows + k] = base_cols(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
    // -grad_x (sqrt(c)/alpha(x)) = sqrt(c) alpha / alpha(x)^2
    for (std::size_t i = 0; i < rs.size(); ++i) {
      const auto& a = rs.positive_roots[i];
      double ax = 0.0;
      for (std::size_t k = 0; k < d; ++k) ax += a(static_cast<Eigen::Index>(k)) * z[k];
      const double w = sqrt_c[i] / (ax * ax);
      for (std::size_t k = 0; k < d; ++k) out[(rank + i) * rows + d + k] = w * a(static_cast<Eigen::Index>(k));
    }
  };
  p.constant_diffusion = false;
  p.interpretation = Interpretation::stratonovich;
  p.domain_guard = chamber_guard(rs);
  p.wall_policy = WallPolicy::substep;
  if (auto proj = span_constraint(rs)) {
    p.constraint_projector = [proj, d](std::span<double> z) {
      proj(z.first(d));
      proj(z.subspan(d, d));
    };
  }
  return p;
}

inline PathEnsemble reduced_hamiltonian_diffusion(const RootSystem& rs, const SpinLevel& s, const Eigen::VectorXd& x0,
                                                  const Eigen::VectorXd& u0, double t, double dt, std::size_t n_paths,
                                                  std::uint64_t seed, EnsembleOptions opt = {}) {
  detail::require_chamber(rs, x0, "reduced_hamiltonian_diffusion");
  if (u0.size() != x0.size()) throw std::invalid_argument("reduced_hamiltonian_diffusion: u0 dimension mismatch");
  Eigen::VectorXd z0(2 * x0.size());
  z0 << x0, u0;
  return simulate_ensemble(reduced_hamiltonian_problem(rs, s), z0, t, dt, n_paths, seed, opt);
}

// Frame-bundle Brownian motion on S^2: each step draws w ~ N(0, I_2) and
// moves the frame horizontally by arclength |w| sqrt(dt). Records base points.
inline PathEnsemble frame_bundle_bm_sphere(const FrameState& u0, double t, double dt, std::size_t n_paths,
                                           std::uint64_t seed, EnsembleOptions opt = {}) {
  u0.validate();
  const std::size_t n_steps = step_count(t, dt);
  PathEnsemble ens = make_ensemble_shell("frame_bundle_bm_sphere", n_paths, n_steps, 3, dt, seed, opt.record_every);
  const std::size_t nr = ens.n_records();
  const double ds = std::sqrt(dt);
  std::fill(ens.alive.begin(), ens.alive.end(), 1);
  parallel_for(n_paths, opt.threads, [&](std::size_t path) {
    RngStream rng = path_stream(seed, path);
    FrameState u = u0;
    std::size_t next = 0;
    double* base = ens.values.data() + path * nr * 3;
    for (std::size_t k = 0; k <= n_steps; ++k) {
      if (k > 0) {
        const double w1 = next_gaussian(rng);
        const double w2 = next_gaussian(rng);
        u = sphere_horizontal_step(u, Eigen::Vector2d(w1, w2), ds);
      }
      if (next < nr && ens.record_steps[next] == k) {
        if (std::abs(u.base.norm() - 1.0) > 1e-9) throw NumericError("frame_bundle_bm_sphere: base left the sphere");
        std::copy(u.base.data(), u.base.data() + 3, base + next * 3);
        ++next;
      }
    }
  });
  return ens;
}

// ---------------------------------------------------------------------------
// Export

inline void write_csv(const PathEnsemble& e, std::ostream& os) {
  os << "path,step,time";
  for (std::size_t i = 0; i < e.dim; ++i) os << ",x_" << (i + 1);
  os << '\n' << std::setprecision(17);
  for (std::size_t p = 0; p < e.n_paths; ++p)
    for (std::size_t r = 0; r < e.n_records(); ++r) {
      if (!e.is_alive(p, r)) continue;
      os << p << ',' << e.record_steps[r] << ',' << e.times[r];
      for (double v : e.at(p, r)) os << ',' << v;
      os << '\n';
    }
}

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b.data(), 4);
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b.data(), 8);
}
inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  put_u64(os, bits);
}
inline std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> b{};
  is.read(reinterpret_cast<char*>(b.data()), 8);
  if (!is) throw std::runtime_error("WDEN: truncated stream");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}
inline std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  is.read(reinterpret_cast<char*>(b.data()), 4);
  if (!is) throw std::runtime_error("WDEN: truncated stream");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}
inline double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double v = 0.0;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace detail

inline constexpr std::uint32_t kWdenVersion = 1;

// Layout (little-endian): "WDEN", u32 version, u64 n_paths, u64 n_records,
// u64 dim, u64 master_seed, f64 dt, n_records x f64 times, then
// n_paths x n_records x dim f64 values.
inline void write_wden(const PathEnsemble& e, std::ostream& os) {
  os.write("WDEN", 4);
  detail::put_u32(os, kWdenVersion);
  detail::put_u64(os, e.n_paths);
  detail::put_u64(os, e.n_records());
  detail::put_u64(os, e.dim);
  detail::put_u64(os, e.master_seed);
  detail::put_f64(os, e.dt);
  for (double t : e.times) detail::put_f64(os, t);
  for (double v : e.values) detail::put_f64(os, v);
}

inline PathEnsemble read_wden(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  if (!is || std::string(magic.data(), 4) != "WDEN") throw std::runtime_error("WDEN: bad magic");
  if (detail::get_u32(is) != kWdenVersion) throw std::runtime_error("WDEN: unsupported version");
  PathEnsemble e;
  e.n_paths = detail::get_u64(is);
  const std::uint64_t nr = detail::get_u64(is);
  e.dim = detail::get_u64(is);
  e.master_seed = detail::get_u64(is);
  e.dt = detail::get_f64(is);
  for (std::uint64_t r = 0; r < nr; ++r) e.times.push_back(detail::get_f64(is));
  for (double t : e.times) e.record_steps.push_back(static_cast<std::size_t>(std::llround(t / e.dt)));
  e.n_steps = e.record_steps.empty() ? 0 : e.record_steps.back();
  e.values.resize(e.n_paths * nr * e.dim);
  for (auto& v : e.values) v = detail::get_f64(is);
  e.alive.assign(e.n_paths * nr, 1);
  return e;
}

}  // namespace symred
