#pragma once

// Finite-difference machinery on boxes inside a Weyl chamber: uniform tensor
// grids in orthonormal coordinates of the root span, second-order operators
// L = k Laplacian + b.grad + q with Dirichlet boundaries, a sparse
// eigensolver for the lowest modes, Crank-Nicolson evolution and space-time
// PDE residuals.

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "symred/jacobi.hpp"
#include "symred/rng.hpp"
#include "symred/rootsys.hpp"

namespace symred {

// Interior nodes y_k = lo_k + (i+1) h, i = 0..n_k-1, along orthonormal axes;
// the Dirichlet boundary sits at lo_k and lo_k + (n_k+1) h.
struct TensorGrid {
  Eigen::VectorXd origin;          // ambient point with reduced coordinates 0
  Eigen::MatrixXd axes;            // ambient_dim x rank, orthonormal columns
  std::vector<double> lo;
  std::vector<std::size_t> n;
  double h = 0.0;

  [[nodiscard]] std::size_t rank() const { return n.size(); }
  [[nodiscard]] std::size_t size() const {
    std::size_t s = 1;
    for (auto k : n) s *= k;
    return s;
  }

  [[nodiscard]] std::vector<std::size_t> multi_index(std::size_t idx) const {
    std::vector<std::size_t> mi(rank());
    for (std::size_t k = 0; k < rank(); ++k) {
      mi[k] = idx % n[k];
      idx /= n[k];
    }
    return mi;
  }
  [[nodiscard]] std::size_t linear_index(const std::vector<std::size_t>& mi) const {
    std::size_t idx = 0, stride = 1;
    for (std::size_t k = 0; k < rank(); ++k) {
      idx += mi[k] * stride;
      stride *= n[k];
    }
    return idx;
  }
  [[nodiscard]] std::size_t stride(std::size_t axis) const {
    std::size_t s = 1;
    for (std::size_t k = 0; k < axis; ++k) s *= n[k];
    return s;
  }

  // Ambient point at (possibly fractional or boundary) grid offsets.
  [[nodiscard]] Eigen::VectorXd point(const std::vector<double>& offsets) const {
    Eigen::VectorXd x = origin;
    for (std::size_t k = 0; k < rank(); ++k)
      x += (lo[k] + (offsets[k] + 1.0) * h) * axes.col(static_cast<Eigen::Index>(k));
    return x;
  }
  [[nodiscard]] Eigen::VectorXd node(std::size_t idx) const {
    const auto mi = multi_index(idx);
    return point(std::vector<double>(mi.begin(), mi.end()));
  }

  [[nodiscard]] double cell_volume() const { return std::pow(h, static_cast<double>(rank())); }

  // 1-D interval (a, b) with n interior nodes along e_1 of R^1.
  static TensorGrid interval(double a, double b, std::size_t nodes) {
    if (!(b > a) || nodes < 1) throw std::invalid_argument("TensorGrid::interval: empty interval");
    TensorGrid g;
    g.origin = Eigen::VectorXd::Zero(1);
    g.axes = Eigen::MatrixXd::Identity(1, 1);
    g.lo = {a};
    g.n = {nodes};
    g.h = (b - a) / static_cast<double>(nodes + 1);
    return g;
  }

  // Box of half-width `half_width` (per axis, including the boundary layer)
  // centred at `center` in the root-span coordinates of rs, spacing <= h.
  static TensorGrid chamber_box(const RootSystem& rs, const Eigen::VectorXd& center, double half_width, double h) {
    if (!(h > 0.0) || !(half_width > h)) throw std::invalid_argument("chamber_box: need half_width > h > 0");
    TensorGrid g;
    g.axes = rs.span_basis();
    g.origin = center - g.axes * (g.axes.transpose() * center);
    const Eigen::VectorXd c = g.axes.transpose() * center;
    const auto cells = static_cast<std::size_t>(std::ceil(2.0 * half_width / h));
    g.h = 2.0 * half_width / static_cast<double>(cells);
    for (Eigen::Index k = 0; k < c.size(); ++k) {
      g.lo.push_back(c(k) - half_width);
      g.n.push_back(cells - 1);
    }
    g.check_inside(rs);
    return g;
  }

  // Throws when the closed box (boundary included) touches a wall.
  void check_inside(const RootSystem& rs) const {
    const std::size_t corners = std::size_t{1} << rank();
    for (std::size_t c = 0; c < corners; ++c) {
      std::vector<double> off(rank());
      for (std::size_t k = 0; k < rank(); ++k) off[k] = ((c >> k) & 1u) ? static_cast<double>(n[k]) : -1.0;
      if (!chamber_contains(rs, point(off))) throw DomainError("grid touches a chamber wall");
    }
  }
};

struct GridFunction {
  TensorGrid grid;
  std::vector<double> values;

  void write_csv(std::ostream& os) const {
    for (std::size_t k = 0; k < grid.rank(); ++k) os << "y_" << (k + 1) << ',';
    os << "value\n";
    os.precision(17);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto mi = grid.multi_index(i);
      for (std::size_t k = 0; k < grid.rank(); ++k) os << grid.lo[k] + (static_cast<double>(mi[k]) + 1.0) * grid.h << ',';
      os << values[i] << '\n';
    }
  }
};

// L = kinetic * Laplacian + drift . grad + zeroth.
struct OperatorSpec {
  double kinetic = 0.5;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> drift;
  std::function<double(const Eigen::VectorXd&)> zeroth;
  std::string label;
};

// Spec of -H for H = -1/2 Laplacian + V.
inline OperatorSpec hamiltonian_spec(std::function<double(const Eigen::VectorXd&)> potential, std::string label = "H") {
  OperatorSpec s;
  s.kinetic = 0.5;
  s.zeroth = [v = std::move(potential)](const Eigen::VectorXd& x) { return -v(x); };
  s.label = std::move(label);
  return s;
}

inline OperatorSpec hamiltonian_spec(const RootSystem& rs) {
  return hamiltonian_spec([rs](const Eigen::VectorXd& x) { return potential_from_delta_closed(rs, x); },
                          "H_" + rs.name);
}

// Matrix of -L on the interior nodes (Dirichlet zero outside), second-order
// central differences. Symmetric whenever spec.drift is empty.
inline Eigen::SparseMatrix<double> build_grid_operator(const TensorGrid& grid, const OperatorSpec& spec) {
  if (grid.size() == 0) throw std::invalid_argument("build_grid_operator: empty grid");
  const std::size_t n = grid.size();
  const double h2 = grid.h * grid.h;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(n * (1 + 2 * grid.rank()));
  for (std::size_t i = 0; i < n; ++i) {
    const auto mi = grid.multi_index(i);
    const Eigen::VectorXd x = grid.node(i);
    double diag = 2.0 * spec.kinetic * static_cast<double>(grid.rank()) / h2;
    if (spec.zeroth) {
      const double q = spec.zeroth(x);
      if (!std::isfinite(q)) throw std::runtime_error("build_grid_operator: non-finite zeroth-order term");
      diag -= q;
    }
    trip.emplace_back(static_cast<int>(i), static_cast<int>(i), diag);
    Eigen::VectorXd b;
    if (spec.drift) b = grid.axes.transpose() * spec.drift(x);
    for (std::size_t k = 0; k < grid.rank(); ++k) {
      const double bk = spec.drift ? b(static_cast<Eigen::Index>(k)) : 0.0;
      const double lower = -spec.kinetic / h2 + bk / (2.0 * grid.h);
      const double upper = -spec.kinetic / h2 - bk / (2.0 * grid.h);
      if (mi[k] > 0) trip.emplace_back(static_cast<int>(i), static_cast<int>(i - grid.stride(k)), lower);
      if (mi[k] + 1 < grid.n[k]) trip.emplace_back(static_cast<int>(i), static_cast<int>(i + grid.stride(k)), upper);
    }
  }
  Eigen::SparseMatrix<double> m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

inline Eigen::SparseMatrix<double> build_grid_operator(const RootSystem& rs, const TensorGrid& grid) {
  return build_grid_operator(grid, hamiltonian_spec(rs));
}

struct EigenPairs {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // unit Euclidean norm columns
  int iterations = 0;
};

// Lowest `count` eigenpairs of a symmetric sparse matrix by shifted inverse
// subspace iteration with Rayleigh-Ritz projection.
inline EigenPairs lowest_eigenpairs(const Eigen::SparseMatrix<double>& m, int count, double tol = 1e-10,
                                    int max_iter = 10000) {
  const Eigen::Index n = m.rows();
  if (count < 1 || count > n) throw std::invalid_argument("lowest_eigenpairs: invalid count");
  const Eigen::Index p = std::min<Eigen::Index>(n, count + 4);

  double lower = std::numeric_limits<double>::infinity();
  double norm_inf = 0.0;
  for (Eigen::Index k = 0; k < m.outerSize(); ++k) {
    double diag = 0.0, off = 0.0;
    for (Eigen::SparseMatrix<double>::InnerIterator it(m, k); it; ++it) {
      if (it.row() == it.col()) diag = it.value();
      else off += std::abs(it.value());
    }
    lower = std::min(lower, diag - off);
    norm_inf = std::max(norm_inf, std::abs(diag) + off);
  }
  const double shift = lower - 1e-3 * std::max(1.0, norm_inf);
  Eigen::SparseMatrix<double> shifted = m;
  for (Eigen::Index k = 0; k < n; ++k) shifted.coeffRef(k, k) -= shift;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(shifted);
  if (solver.info() != Eigen::Success) throw std::runtime_error("lowest_eigenpairs: factorization failed");

  RngStream rng = derive_stream(0x5EED, 0);
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = next_gaussian(rng);

  EigenPairs out;
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::MatrixXd y = solver.solve(x);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p);
    const Eigen::MatrixXd mq = m * q;
    const Eigen::MatrixXd t = q.transpose() * mq;
    const auto ritz = jacobi_eigen(t);
    x = q * ritz.vectors;
    const Eigen::MatrixXd r = mq * ritz.vectors - x * ritz.values.asDiagonal();
    bool done = true;
    for (int k = 0; k < count; ++k) {
      const double allowed = tol * std::max(1.0, std::abs(ritz.values(k))) + 100.0 * 2.2e-16 * norm_inf;
      if (r.col(k).norm() > allowed) done = false;
    }
    if (done) {
      out.values = ritz.values.head(count);
      out.vectors = x.leftCols(count);
      out.iterations = it;
      return out;
    }
  }
  throw std::runtime_error("lowest_eigenpairs: no convergence");
}

struct RadialEigenpair {
  double gamma = 0.0;    // eigenvalue of Delta^0
  double energy = 0.0;   // eigenvalue of H; gamma = -2 energy
  GridFunction f;        // Delta^0 eigenfunction, sum f^2 delta h^r = 1
  GridFunction psi;      // H eigenfunction, psi = sqrt(delta) f
};

// Eigenpairs of Delta^0 = Laplacian + grad log delta . grad through the
// ground-state transform: H psi = E psi with H = -1/2 Laplacian + V gives
// f = psi / sqrt(delta) and gamma = -2E. Sorted by E ascending.
inline std::vector<RadialEigenpair> radial_eigenpairs(const RootSystem& rs, const TensorGrid& grid, int count) {
  if (count < 1 || count > 10) throw std::invalid_argument("radial_eigenpairs: count must be in [1, 10]");
  grid.check_inside(rs);
  const auto hmat = build_grid_operator(rs, grid);
  const auto eig = lowest_eigenpairs(hmat, count);
  const double vol = grid.cell_volume();
  std::vector<RadialEigenpair> out;
  for (int k = 0; k < count; ++k) {
    RadialEigenpair e;
    e.energy = eig.values(k);
    e.gamma = -2.0 * e.energy;
    Eigen::VectorXd psi = eig.vectors.col(k) / std::sqrt(vol);
    // fix the sign so the largest-magnitude entry is positive
    Eigen::Index arg = 0;
    psi.cwiseAbs().maxCoeff(&arg);
    if (psi(arg) < 0.0) psi = -psi;
    e.psi.grid = grid;
    e.f.grid = grid;
    e.psi.values.assign(psi.data(), psi.data() + psi.size());
    e.f.values.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
      e.f.values[i] = psi(static_cast<Eigen::Index>(i)) / std::sqrt(delta(rs, grid.node(i)));
    out.push_back(std::move(e));
  }
  return out;
}

// Values of a space-time field on a grid: values[ti * grid.size() + node].
struct SpaceTimeSurface {
  TensorGrid grid;
  std::vector<double> times;
  std::vector<double> values;

  [[nodiscard]] double at(std::size_t ti, std::size_t node) const { return values[ti * grid.size() + node]; }
};

// Evolves d/dt psi = L psi (L from spec) from psi0 with Crank-Nicolson steps of
// size dt, preceded by four implicit Euler half steps to damp the
// non-smooth start. Returns psi at every requested output time.
inline SpaceTimeSurface crank_nicolson(const TensorGrid& grid, const OperatorSpec& spec,
                                       const std::function<double(const Eigen::VectorXd&)>& psi0,
                                       const std::vector<double>& output_times, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("crank_nicolson: dt must be positive");
  const Eigen::SparseMatrix<double> m = build_grid_operator(grid, spec);  // -L
  const Eigen::Index n = m.rows();
  Eigen::SparseMatrix<double> id(n, n);
  id.setIdentity();

  Eigen::VectorXd psi(n);
  for (Eigen::Index i = 0; i < n; ++i) psi(i) = psi0(grid.node(static_cast<std::size_t>(i)));

  SpaceTimeSurface out;
  out.grid = grid;
  out.times = output_times;
  out.values.assign(output_times.size() * static_cast<std::size_t>(n), 0.0);
  std::vector<std::size_t> out_steps;
  for (double t : output_times) {
    const double r = t / dt;
    const auto s = static_cast<std::size_t>(std::llround(r));
    if (std::abs(r - static_cast<double>(s)) > 1e-9 * std::max(1.0, r))
      throw std::invalid_argument("crank_nicolson: output time not a multiple of dt");
    out_steps.push_back(s);
  }
  auto emit = [&](std::size_t step) {
    for (std::size_t k = 0; k < out_steps.size(); ++k)
      if (out_steps[k] == step)
        std::copy(psi.data(), psi.data() + n, out.values.begin() + static_cast<std::ptrdiff_t>(k * static_cast<std::size_t>(n)));
  };
  emit(0);
  const std::size_t last = out_steps.empty() ? 0 : *std::max_element(out_steps.begin(), out_steps.end());

  Eigen::SparseLU<Eigen::SparseMatrix<double>> euler;
  const Eigen::SparseMatrix<double> euler_lhs = id + 0.5 * dt * m;
  euler.compute(euler_lhs);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> cn;
  const Eigen::SparseMatrix<double> cn_lhs = id + 0.5 * dt * m;
  const Eigen::SparseMatrix<double> cn_rhs = id - 0.5 * dt * m;
  cn.compute(cn_lhs);
  if (euler.info() != Eigen::Success || cn.info() != Eigen::Success)
    throw std::runtime_error("crank_nicolson: factorization failed");

  for (std::size_t step = 1; step <= last; ++step) {
    if (step <= 2) {
      // two implicit Euler half steps make one full step
      psi = euler.solve(psi).eval();
      psi = euler.solve(psi).eval();
    } else {
      const Eigen::VectorXd rhs = cn_rhs * psi;
      psi = cn.solve(rhs);
    }
    emit(step);
  }
  return out;
}

struct PdeResidual {
  double sup = 0.0;
  double relative = 0.0;
};

// |d/dt psi - L psi| at interior space-time nodes (both neighbours present in
// every direction), with central differences; relative = sup / sup|psi|.
inline PdeResidual pde_residual(const SpaceTimeSurface& s, const OperatorSpec& spec) {
  if (s.times.size() < 3) throw std::invalid_argument("pde_residual: need >= 3 time slices");
  for (auto k : s.grid.n)
    if (k < 3) throw std::invalid_argument("pde_residual: need >= 3 nodes per axis");
  const double h = s.grid.h;
  double sup_psi = 0.0;
  for (double v : s.values) sup_psi = std::max(sup_psi, std::abs(v));
  if (!(sup_psi > 0.0)) throw std::invalid_argument("pde_residual: zero surface");
  PdeResidual res;
  for (std::size_t ti = 1; ti + 1 < s.times.size(); ++ti) {
    const double dtm = s.times[ti] - s.times[ti - 1];
    const double dtp = s.times[ti + 1] - s.times[ti];
    if (!(dtm > 0.0) || !(dtp > 0.0)) throw std::invalid_argument("pde_residual: times must increase");
    for (std::size_t i = 0; i < s.grid.size(); ++i) {
      const auto mi = s.grid.multi_index(i);
      bool interior = true;
      for (std::size_t k = 0; k < s.grid.rank(); ++k) interior = interior && mi[k] > 0 && mi[k] + 1 < s.grid.n[k];
      if (!interior) continue;
      // three-point first derivative on a possibly uneven time grid
      const double um = s.at(ti - 1, i), u0 = s.at(ti, i), up = s.at(ti + 1, i);
      const double dudt = (up * dtm * dtm - um * dtp * dtp + u0 * (dtp * dtp - dtm * dtm)) / (dtm * dtp * (dtm + dtp));
      const Eigen::VectorXd x = s.grid.node(i);
      double lap = 0.0;
      Eigen::VectorXd grad(static_cast<Eigen::Index>(s.grid.rank()));
      for (std::size_t k = 0; k < s.grid.rank(); ++k) {
        const double a = s.at(ti, i - s.grid.stride(k));
        const double b = s.at(ti, i + s.grid.stride(k));
        lap += (a - 2.0 * u0 + b) / (h * h);
        grad(static_cast<Eigen::Index>(k)) = (b - a) / (2.0 * h);
      }
      double lu = spec.kinetic * lap;
      if (spec.drift) lu += (s.grid.axes.transpose() * spec.drift(x)).dot(grad);
      if (spec.zeroth) lu += spec.zeroth(x) * u0;
      res.sup = std::max(res.sup, std::abs(dudt - lu));
    }
  }
  res.relative = res.sup / sup_psi;
  return res;
}

}  // namespace symred
