#pragma once

// Concrete Riemannian G-manifolds:
//   * RotationGeometry: SO(3) acting on R^3 \ {0};
//   * HermitianGeometry: SU(n) acting by conjugation on traceless Hermitian
//     n x n matrices (flat metric tr(AB));
//   * orthonormal frames of the unit sphere S^2 with horizontal stepping.
//
// Tangent vectors, covectors and Lie-algebra elements are handled in
// orthonormal coordinates so inertia, momentum and the mechanical connection
// can be written once for both group actions.

#include <cmath>
#include <complex>
#include <concepts>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "symred/jacobi.hpp"
#include "symred/rng.hpp"
#include "symred/rootsys.hpp"

namespace symred {

using cdouble = std::complex<double>;

// ---------------------------------------------------------------------------
// Traceless Hermitian matrices

// Orthonormal basis of the traceless Hermitian n x n matrices for <A,B> = tr(AB):
// first the n-1 Gram-Schmidt orthonormalized projections of E_kk onto the
// trace-zero hyperplane, then for every j < k the pair
// (E_jk + E_kj)/sqrt2 and i(E_jk - E_kj)/sqrt2.
class HermitianBasis {
 public:
  explicit HermitianBasis(int n) : n_(n) {
    if (n < 2) throw std::invalid_argument("HermitianBasis: n must be >= 2");
    std::vector<Eigen::VectorXd> diag;
    for (int k = 0; k + 1 < n; ++k) {
      Eigen::VectorXd v = Eigen::VectorXd::Constant(n, -1.0 / n);
      v(k) += 1.0;
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& u : diag) v -= u.dot(v) * u;
      diag.push_back(v.normalized());
    }
    for (const auto& d : diag) {
      Eigen::MatrixXcd b = Eigen::MatrixXcd::Zero(n, n);
      for (int k = 0; k < n; ++k) b(k, k) = d(k);
      elements_.push_back(std::move(b));
    }
    const double s = 1.0 / std::sqrt(2.0);
    for (int j = 0; j < n; ++j)
      for (int k = j + 1; k < n; ++k) {
        Eigen::MatrixXcd re = Eigen::MatrixXcd::Zero(n, n);
        re(j, k) = s;
        re(k, j) = s;
        elements_.push_back(std::move(re));
        Eigen::MatrixXcd im = Eigen::MatrixXcd::Zero(n, n);
        im(j, k) = cdouble(0.0, s);
        im(k, j) = cdouble(0.0, -s);
        elements_.push_back(std::move(im));
      }
  }

  [[nodiscard]] int n() const { return n_; }
  [[nodiscard]] Eigen::Index dim() const { return static_cast<Eigen::Index>(elements_.size()); }
  [[nodiscard]] const Eigen::MatrixXcd& element(Eigen::Index a) const { return elements_[static_cast<std::size_t>(a)]; }

  [[nodiscard]] Eigen::MatrixXcd to_matrix(const Eigen::VectorXd& coords) const {
    if (coords.size() != dim()) throw std::invalid_argument("HermitianBasis: coordinate dimension mismatch");
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(n_, n_);
    for (Eigen::Index a = 0; a < dim(); ++a) h += coords(a) * element(a);
    return h;
  }

  // Coordinates of the traceless Hermitian part of h.
  [[nodiscard]] Eigen::VectorXd to_coords(const Eigen::MatrixXcd& h) const {
    if (h.rows() != n_ || h.cols() != n_) throw std::invalid_argument("HermitianBasis: matrix size mismatch");
    Eigen::VectorXd c(dim());
    for (Eigen::Index a = 0; a < dim(); ++a) c(a) = (element(a) * h).trace().real();
    return c;
  }

 private:
  int n_;
  std::vector<Eigen::MatrixXcd> elements_;
};

struct HermitianPoint {
  Eigen::MatrixXcd entries;

  [[nodiscard]] int n() const { return static_cast<int>(entries.rows()); }

  void validate(double tol = 1e-12) const {
    if (entries.rows() != entries.cols() || entries.rows() < 2)
      throw std::invalid_argument("HermitianPoint: need a square matrix of size >= 2");
    const double herm = (entries - entries.adjoint()).cwiseAbs().maxCoeff();
    if (herm > tol) throw std::invalid_argument("HermitianPoint: matrix is not Hermitian");
    if (std::abs(entries.trace()) > tol) throw std::invalid_argument("HermitianPoint: trace is not zero");
  }

  static HermitianPoint diagonal(const Eigen::VectorXd& d) {
    HermitianPoint h{Eigen::MatrixXcd::Zero(d.size(), d.size())};
    for (Eigen::Index k = 0; k < d.size(); ++k) h.entries(k, k) = d(k);
    return h;
  }
};

// Orbit projection: eigenvalues in strictly decreasing order.
inline Eigen::VectorXd eigen_project(const HermitianPoint& h, double wall_eps = kDefaultWallEps) {
  h.validate(1e-9);
  const Eigen::VectorXd asc = hermitian_eigenvalues(h.entries);
  const Eigen::Index n = asc.size();
  Eigen::VectorXd out(n);
  for (Eigen::Index k = 0; k < n; ++k) out(k) = asc(n - 1 - k);
  for (Eigen::Index k = 0; k + 1 < n; ++k)
    if (!(out(k) - out(k + 1) > wall_eps))
      throw DomainError("eigen_project: eigenvalue collision (point is not regular)");
  return out;
}

inline Eigen::MatrixXcd commutator(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  return a * b - b * a;
}

// ---------------------------------------------------------------------------
// Group actions

struct InertiaForm {
  Eigen::MatrixXd complement_basis;  // algebra coords, orthonormal columns spanning g_q^perp
  Eigen::MatrixXd matrix;            // I_q on that basis
};

// A flat G-manifold written in orthonormal coordinates. `fundamental_matrix(q)`
// has column a equal to the tangent coordinates of zeta_{e_a}(q) for an
// orthonormal basis e_a of the Lie algebra.
template <class G>
concept GManifold = requires(const G& g, const typename G::Point& q) {
  { g.algebra_dim() } -> std::convertible_to<Eigen::Index>;
  { g.tangent_dim() } -> std::convertible_to<Eigen::Index>;
  { g.regular_stabilizer_dim() } -> std::convertible_to<Eigen::Index>;
  { g.fundamental_matrix(q) } -> std::convertible_to<Eigen::MatrixXd>;
  { g.point_scale(q) } -> std::convertible_to<double>;
};

// SO(3) acting on R^3 \ {0}; so(3) identified with R^3 via the cross product.
class RotationGeometry {
 public:
  using Point = Eigen::Vector3d;

  explicit RotationGeometry(double wall_eps = kDefaultWallEps) : wall_eps_(wall_eps) {}

  [[nodiscard]] Eigen::Index algebra_dim() const { return 3; }
  [[nodiscard]] Eigen::Index tangent_dim() const { return 3; }
  [[nodiscard]] Eigen::Index regular_stabilizer_dim() const { return 1; }
  [[nodiscard]] double point_scale(const Point& q) const { return q.norm(); }

  void validate(const Point& q) const {
    if (!(q.norm() > wall_eps_)) throw DomainError("RotationGeometry: the origin is not a point of Q");
  }

  // zeta_x(q) = x cross q
  [[nodiscard]] Eigen::Vector3d fundamental_field(const Eigen::Vector3d& x, const Point& q) const {
    return x.cross(q);
  }

  [[nodiscard]] Eigen::MatrixXd fundamental_matrix(const Point& q) const {
    validate(q);
    Eigen::MatrixXd z(3, 3);
    for (int a = 0; a < 3; ++a) z.col(a) = Eigen::Vector3d::Unit(a).cross(q);
    return z;
  }

  // J(q, p) = q cross p
  [[nodiscard]] Eigen::Vector3d momentum_map(const Point& q, const Eigen::Vector3d& p) const {
    return q.cross(p);
  }

  // Orbit projection to Q/G = (0, inf).
  [[nodiscard]] double project(const Point& q) const {
    validate(q);
    return q.norm();
  }

 private:
  double wall_eps_;
};

// SU(n) acting by conjugation on traceless Hermitian matrices. The Lie
// algebra su(n) uses the orthonormal basis i*B_a built from HermitianBasis;
// covectors are paired through the trace form so that J(q, p) = [q, p].
class HermitianGeometry {
 public:
  using Point = HermitianPoint;

  explicit HermitianGeometry(int n, double wall_eps = kDefaultWallEps) : basis_(n), wall_eps_(wall_eps) {}

  [[nodiscard]] int n() const { return basis_.n(); }
  [[nodiscard]] const HermitianBasis& basis() const { return basis_; }
  [[nodiscard]] Eigen::Index algebra_dim() const { return basis_.dim(); }
  [[nodiscard]] Eigen::Index tangent_dim() const { return basis_.dim(); }
  [[nodiscard]] Eigen::Index regular_stabilizer_dim() const { return n() - 1; }
  [[nodiscard]] double point_scale(const Point& q) const { return q.entries.norm(); }

  void check_size(const Eigen::MatrixXcd& m) const {
    if (m.rows() != n() || m.cols() != n())
      throw std::invalid_argument("HermitianGeometry: expected " + std::to_string(n()) + "x" +
                                  std::to_string(n()) + " matrix");
  }

  // Algebra element i*B_a.
  [[nodiscard]] Eigen::MatrixXcd algebra_element(Eigen::Index a) const { return cdouble(0.0, 1.0) * basis_.element(a); }

  [[nodiscard]] Eigen::MatrixXcd algebra_matrix(const Eigen::VectorXd& coords) const {
    return cdouble(0.0, 1.0) * basis_.to_matrix(coords);
  }

  // zeta_X(q) = [X, q]
  [[nodiscard]] Eigen::MatrixXcd fundamental_field(const Eigen::MatrixXcd& x, const Point& q) const {
    check_size(x);
    check_size(q.entries);
    return commutator(x, q.entries);
  }

  [[nodiscard]] Eigen::MatrixXd fundamental_matrix(const Point& q) const {
    check_size(q.entries);
    Eigen::MatrixXd z(tangent_dim(), algebra_dim());
    for (Eigen::Index a = 0; a < algebra_dim(); ++a)
      z.col(a) = basis_.to_coords(commutator(algebra_element(a), q.entries));
    return z;
  }

  // J(q, p) = [q, p] (anti-Hermitian); J(q,p)(X) = tr(X [q,p]) = <p, zeta_X(q)>.
  [[nodiscard]] Eigen::MatrixXcd momentum_map(const Point& q, const Eigen::MatrixXcd& p) const {
    check_size(q.entries);
    check_size(p);
    return commutator(q.entries, p);
  }

  [[nodiscard]] Eigen::VectorXd project(const Point& q) const { return eigen_project(q, wall_eps_); }

 private:
  HermitianBasis basis_;
  double wall_eps_;
};

// J evaluated on the orthonormal algebra basis, from the flat pairing
// J(q,p)(e_a) = <p, zeta_{e_a}(q)>.
template <GManifold G>
Eigen::VectorXd momentum_coords(const G& geom, const typename G::Point& q, const Eigen::VectorXd& p) {
  const Eigen::MatrixXd z = geom.fundamental_matrix(q);
  if (p.size() != z.rows()) throw std::invalid_argument("momentum_coords: dimension mismatch");
  return z.transpose() * p;
}

// Inertia tensor I_q(X1, X2) = <zeta_X1(q), zeta_X2(q)> restricted to the
// orthogonal complement of the infinitesimal stabilizer.
template <GManifold G>
InertiaForm inertia_form(const G& geom, const typename G::Point& q, double stabilizer_tol = 1e-8) {
  const Eigen::MatrixXd z = geom.fundamental_matrix(q);
  const Eigen::MatrixXd gram = z.transpose() * z;
  // singular values of z directly; sqrt of Gram eigenvalues loses half the digits
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(z, Eigen::ComputeFullV);
  const Eigen::VectorXd sigma = svd.singularValues();
  const double top = sigma.size() > 0 ? sigma(0) : 0.0;
  if (!(top > 0.0)) throw DomainError("inertia_form: the orbit through q is a point");

  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < sigma.size(); ++k)
    if (sigma(k) > stabilizer_tol * top) keep.push_back(k);
  const Eigen::Index stab = z.cols() - static_cast<Eigen::Index>(keep.size());
  if (stab != geom.regular_stabilizer_dim())
    throw DomainError("inertia_form: stabilizer dimension " + std::to_string(stab) + " (expected " +
                      std::to_string(geom.regular_stabilizer_dim()) + "); q is not regular");

  InertiaForm out;
  out.complement_basis.resize(gram.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k)
    out.complement_basis.col(static_cast<Eigen::Index>(k)) = svd.matrixV().col(keep[k]);
  out.matrix = out.complement_basis.transpose() * gram * out.complement_basis;
  out.matrix = 0.5 * (out.matrix + out.matrix.transpose()).eval();
  return out;
}

// |det I_q|^{1/2} over an orthonormal basis of g_q^perp.
template <GManifold G>
double delta_from_inertia(const G& geom, const typename G::Point& q) {
  const InertiaForm form = inertia_form(geom, q);
  return std::sqrt(std::abs(form.matrix.determinant()));
}

// Mechanical connection A_q(xi): the element X of g_q^perp with zeta_X(q)
// equal to the vertical part of xi. Computed by minimum-norm least squares
// against the fundamental vector fields, independently of I_q^{-1}.
template <GManifold G>
Eigen::VectorXd mechanical_connection(const G& geom, const typename G::Point& q, const Eigen::VectorXd& xi) {
  const Eigen::MatrixXd z = geom.fundamental_matrix(q);
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(z);
  cod.setThreshold(1e-10);
  return cod.solve(xi);
}

// max over random tangent vectors xi of |J_q(mu_q xi) - I_q(A_q xi)|.
template <GManifold G>
double char_diagram_check(const G& geom, const typename G::Point& q, int samples, std::uint64_t seed = 1) {
  inertia_form(geom, q);  // regularity
  const Eigen::MatrixXd z = geom.fundamental_matrix(q);
  const Eigen::MatrixXd gram = z.transpose() * z;
  RngStream rng = derive_stream(seed, 0);
  double residual = 0.0;
  for (int s = 0; s < samples; ++s) {
    Eigen::VectorXd xi(geom.tangent_dim());
    for (Eigen::Index k = 0; k < xi.size(); ++k) xi(k) = next_gaussian(rng);
    const Eigen::VectorXd lhs = z.transpose() * xi;
    const Eigen::VectorXd rhs = gram * mechanical_connection(geom, q, xi);
    residual = std::max(residual, (lhs - rhs).norm());
  }
  return residual;
}

// ---------------------------------------------------------------------------
// Random group elements

inline Eigen::Matrix3d random_rotation(RngStream& rng) {
  Eigen::Quaterniond quat(next_gaussian(rng), next_gaussian(rng), next_gaussian(rng), next_gaussian(rng));
  quat.normalize();
  return quat.toRotationMatrix();
}

// Haar-distributed unitary from the QR of a complex Gaussian matrix.
inline Eigen::MatrixXcd random_unitary(int n, RngStream& rng) {
  Eigen::MatrixXcd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = cdouble(next_gaussian(rng), next_gaussian(rng));
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(g);
  Eigen::MatrixXcd q = qr.householderQ();
  const Eigen::MatrixXcd r = qr.matrixQR();
  for (int k = 0; k < n; ++k) {
    const cdouble d = r(k, k);
    q.col(k) *= d / std::abs(d);
  }
  return q;
}

// ---------------------------------------------------------------------------
// Orthonormal frames of S^2

struct FrameState {
  Eigen::Vector3d base;
  Eigen::Vector3d e1;
  Eigen::Vector3d e2;

  void validate(double tol = 1e-9) const {
    if (std::abs(base.norm() - 1.0) > tol) throw std::invalid_argument("FrameState: base is not a unit vector");
    const double err = std::max({std::abs(e1.norm() - 1.0), std::abs(e2.norm() - 1.0), std::abs(base.dot(e1)),
                                 std::abs(base.dot(e2)), std::abs(e1.dot(e2))});
    if (err > tol) throw std::invalid_argument("FrameState: {base, e1, e2} is not orthonormal");
  }

  static FrameState north_pole() { return {Eigen::Vector3d::UnitZ(), Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY()}; }

  [[nodiscard]] FrameState rotated(const Eigen::Matrix3d& r) const { return {r * base, r * e1, r * e2}; }
};

inline void reorthonormalize(FrameState& u) {
  u.base.normalize();
  u.e1 -= u.base.dot(u.e1) * u.base;
  u.e1.normalize();
  u.e2 -= u.base.dot(u.e2) * u.base + u.e1.dot(u.e2) * u.e1;
  u.e2.normalize();
}

// Moves the base point along the great circle in direction w1*e1 + w2*e2 by
// arclength |w| * ds; the frame is carried by the same rotation, which is
// parallel transport along a geodesic.
inline FrameState sphere_horizontal_step(const FrameState& u, const Eigen::Vector2d& w, double ds) {
  if (!(ds > 0.0)) throw std::invalid_argument("sphere_horizontal_step: ds must be positive");
  const double speed = w.norm();
  if (!(speed > 0.0)) return u;
  const Eigen::Vector3d dir = (w(0) * u.e1 + w(1) * u.e2) / speed;
  const Eigen::Vector3d axis = u.base.cross(dir);
  const double theta = speed * ds;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  auto rotate = [&](const Eigen::Vector3d& v) {
    return Eigen::Vector3d(c * v + s * axis.cross(v) + (1.0 - c) * axis.dot(v) * axis);
  };
  FrameState out{rotate(u.base), rotate(u.e1), rotate(u.e2)};
  reorthonormalize(out);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline void to_json(nlohmann::json& j, const HermitianPoint& h) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(2 * h.entries.size()));
  for (Eigen::Index r = 0; r < h.entries.rows(); ++r)
    for (Eigen::Index c = 0; c < h.entries.cols(); ++c) {
      flat.push_back(h.entries(r, c).real());
      flat.push_back(h.entries(r, c).imag());
    }
  j = nlohmann::json{{"n", h.n()}, {"entries", flat}};
}

inline void from_json(const nlohmann::json& j, HermitianPoint& h) {
  const int n = j.at("n").get<int>();
  const auto flat = j.at("entries").get<std::vector<double>>();
  if (flat.size() != static_cast<std::size_t>(2 * n * n))
    throw std::invalid_argument("HermitianPoint JSON: expected 2*n*n interleaved reals");
  h.entries.resize(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const std::size_t k = static_cast<std::size_t>(2 * (r * n + c));
      h.entries(r, c) = cdouble(flat[k], flat[k + 1]);
    }
  h.validate();
}

inline void to_json(nlohmann::json& j, const FrameState& u) {
  j = std::vector<double>{u.base(0), u.base(1), u.base(2), u.e1(0), u.e1(1), u.e1(2), u.e2(0), u.e2(1), u.e2(2)};
}

inline void from_json(const nlohmann::json& j, FrameState& u) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 9) throw std::invalid_argument("FrameState JSON: expected 9 reals");
  u.base = {v[0], v[1], v[2]};
  u.e1 = {v[3], v[4], v[5]};
  u.e2 = {v[6], v[7], v[8]};
  u.validate();
}

}  // namespace symred
