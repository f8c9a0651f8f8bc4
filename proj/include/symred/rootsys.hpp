#pragma once

// Root systems of restricted roots with multiplicities, and the closed-form
// radial quantities on the open Weyl chamber built from them: the density
// delta(x) = prod alpha(x)^m_alpha, its log-derivatives, the ground-state
// potential and the Calogero-Moser couplings.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "symred/rng.hpp"

namespace symred {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double kDefaultWallEps = 1e-10;

enum class Family { A, B, C, D, BC, single };

inline Family parse_family(const std::string& s) {
  if (s == "A") return Family::A;
  if (s == "B") return Family::B;
  if (s == "C") return Family::C;
  if (s == "D") return Family::D;
  if (s == "BC") return Family::BC;
  if (s == "single") return Family::single;
  throw std::invalid_argument("unknown root-system family '" + s + "'");
}

// Multiplicities for a family. `m` applies to the e_i -+ e_j roots (and to
// the single root); `m_alt` to e_i / 2e_i (B, C, BC), defaulting to `m`;
// `m2` is the multiplicity of 2e_i in BC. `scale` is the length of the
// single root.
struct Multiplicity {
  int m = 1;
  int m_alt = -1;
  int m2 = 0;
  double scale = 1.0;
};

struct RootSystem {
  std::string name;
  int rank = 0;
  std::vector<Eigen::VectorXd> positive_roots;
  std::vector<int> multiplicities;
  std::vector<int> double_multiplicities;

  [[nodiscard]] Eigen::Index ambient_dim() const {
    return positive_roots.empty() ? Eigen::Index{rank} : positive_roots.front().size();
  }
  [[nodiscard]] std::size_t size() const { return positive_roots.size(); }

  // Throws std::invalid_argument when an invariant is violated.
  void validate() const {
    if (positive_roots.size() != multiplicities.size() ||
        positive_roots.size() != double_multiplicities.size())
      throw std::invalid_argument("root system '" + name + "': multiplicity count mismatch");
    const Eigen::Index d = ambient_dim();
    for (std::size_t i = 0; i < size(); ++i) {
      const auto& a = positive_roots[i];
      if (a.size() != d) throw std::invalid_argument("root system: inconsistent ambient dimension");
      if (!(a.norm() > 0.0)) throw std::invalid_argument("root system: zero root");
      if (multiplicities[i] < 1) throw std::invalid_argument("root system: m_alpha < 1");
      if (double_multiplicities[i] < 0) throw std::invalid_argument("root system: m_2alpha < 0");
      for (std::size_t j = 0; j < i; ++j) {
        const auto& b = positive_roots[j];
        const double cosang = a.dot(b) / (a.norm() * b.norm());
        if (cosang < -1.0 + 1e-12)
          throw std::invalid_argument("root system: roots " + std::to_string(j) + " and " +
                                      std::to_string(i) + " are negatives of each other");
      }
    }
    if (size() == 0) {
      if (rank != 0) throw std::invalid_argument("root system: rank must equal span dimension");
      return;
    }
    Eigen::MatrixXd span(d, static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) span.col(static_cast<Eigen::Index>(i)) = positive_roots[i];
    Eigen::FullPivLU<Eigen::MatrixXd> lu(span);
    lu.setThreshold(1e-10);
    if (lu.rank() != rank)
      throw std::invalid_argument("root system: rank " + std::to_string(rank) +
                                  " differs from span dimension " + std::to_string(lu.rank()));
  }

  // alpha(x) for every positive root.
  [[nodiscard]] Eigen::VectorXd root_values(const Eigen::VectorXd& x) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) out(static_cast<Eigen::Index>(i)) = positive_roots[i].dot(x);
    return out;
  }

  // Orthonormal basis (columns) of the span of the roots.
  [[nodiscard]] Eigen::MatrixXd span_basis() const {
    const Eigen::Index d = ambient_dim();
    if (size() == 0) return Eigen::MatrixXd::Identity(d, rank);
    Eigen::MatrixXd span(d, static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) span.col(static_cast<Eigen::Index>(i)) = positive_roots[i];
    Eigen::MatrixXd basis(d, rank);
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < span.cols() && k < rank; ++j) {
      Eigen::VectorXd v = span.col(j);
      for (int pass = 0; pass < 2; ++pass)
        for (Eigen::Index i = 0; i < k; ++i) v -= basis.col(i).dot(v) * basis.col(i);
      if (v.norm() > 1e-10 * span.col(j).norm()) basis.col(k++) = v.normalized();
    }
    return basis;
  }
};

inline RootSystem build_root_system(Family family, int n, Multiplicity mult = {}) {
  if (n < 1) throw std::invalid_argument("build_root_system: n must be >= 1");
  if (mult.m < 1) throw std::invalid_argument("build_root_system: multiplicities must be positive");
  const int m_alt = mult.m_alt < 0 ? mult.m : mult.m_alt;
  if (m_alt < 1 || mult.m2 < 0) throw std::invalid_argument("build_root_system: invalid multiplicity");

  RootSystem rs;
  auto e = [&](int dim, int i) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
    v(i) = 1.0;
    return v;
  };
  auto add = [&](Eigen::VectorXd root, int m, int m2 = 0) {
    rs.positive_roots.push_back(std::move(root));
    rs.multiplicities.push_back(m);
    rs.double_multiplicities.push_back(m2);
  };
  auto add_pairs = [&](bool with_sums) {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        add(e(n, i) - e(n, j), mult.m);
        if (with_sums) add(e(n, i) + e(n, j), mult.m);
      }
  };

  switch (family) {
    case Family::A:
      if (n < 2) throw std::invalid_argument("build_root_system: A_{n-1} needs n >= 2");
      rs.name = "A" + std::to_string(n - 1);
      rs.rank = n - 1;
      add_pairs(false);
      break;
    case Family::B:
      rs.name = "B" + std::to_string(n);
      rs.rank = n;
      for (int i = 0; i < n; ++i) add(e(n, i), m_alt);
      add_pairs(true);
      break;
    case Family::C:
      rs.name = "C" + std::to_string(n);
      rs.rank = n;
      for (int i = 0; i < n; ++i) add(2.0 * e(n, i), m_alt);
      add_pairs(true);
      break;
    case Family::D:
      if (n < 2) throw std::invalid_argument("build_root_system: D_n needs n >= 2");
      rs.name = "D" + std::to_string(n);
      rs.rank = n;
      add_pairs(true);
      break;
    case Family::BC:
      rs.name = "BC" + std::to_string(n);
      rs.rank = n;
      for (int i = 0; i < n; ++i) add(e(n, i), m_alt, mult.m2);
      add_pairs(true);
      break;
    case Family::single:
      if (n != 1) throw std::invalid_argument("build_root_system: 'single' is rank one (n = 1)");
      if (!(mult.scale > 0.0)) throw std::invalid_argument("build_root_system: root scale must be positive");
      rs.name = "single";
      rs.rank = 1;
      add(mult.scale * e(1, 0), mult.m);
      break;
  }
  rs.validate();
  return rs;
}

inline bool chamber_contains(const RootSystem& rs, const Eigen::VectorXd& x,
                             double wall_eps = kDefaultWallEps) {
  if (x.size() != rs.ambient_dim())
    throw std::invalid_argument("chamber_contains: dimension mismatch (" + std::to_string(x.size()) +
                                " vs " + std::to_string(rs.ambient_dim()) + ")");
  for (const auto& a : rs.positive_roots)
    if (!(a.dot(x) > wall_eps)) return false;
  return true;
}

// A point strictly inside the open Weyl chamber.
class ChamberPoint {
 public:
  ChamberPoint(const RootSystem& rs, Eigen::VectorXd coords, double wall_eps = kDefaultWallEps)
      : coords_(std::move(coords)) {
    if (!chamber_contains(rs, coords_, wall_eps)) throw DomainError("point is not inside the Weyl chamber");
  }
  [[nodiscard]] const Eigen::VectorXd& coords() const { return coords_; }

 private:
  Eigen::VectorXd coords_;
};

// Per-root coefficients c_alpha >= 0; the spin term is 1/2 sum c_alpha / alpha(x)^2.
struct SpinLevel {
  std::vector<double> coefficients;

  static SpinLevel zero(const RootSystem& rs) { return {std::vector<double>(rs.size(), 0.0)}; }
  static SpinLevel uniform(const RootSystem& rs, double c) { return {std::vector<double>(rs.size(), c)}; }

  void validate(const RootSystem& rs) const {
    if (coefficients.size() != rs.size()) throw std::invalid_argument("SpinLevel: one coefficient per root");
    for (double c : coefficients)
      if (!(c >= 0.0) || !std::isfinite(c)) throw std::invalid_argument("SpinLevel: coefficients must be >= 0");
  }
  [[nodiscard]] bool is_zero() const {
    for (double c : coefficients)
      if (c != 0.0) return false;
    return true;
  }
};

namespace detail {

inline void require_chamber(const RootSystem& rs, const Eigen::VectorXd& x, const char* what) {
  if (!chamber_contains(rs, x, kDefaultWallEps))
    throw DomainError(std::string(what) + ": point outside the Weyl chamber");
}

// Total exponent of alpha(x) in delta: m_alpha plus m_2alpha from the factor (2 alpha(x))^m_2alpha.
inline double log_weight(const RootSystem& rs, std::size_t i) {
  return static_cast<double>(rs.multiplicities[i] + rs.double_multiplicities[i]);
}

inline double log_delta_unchecked(const RootSystem& rs, const Eigen::VectorXd& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const double a = rs.positive_roots[i].dot(x);
    s += rs.multiplicities[i] * std::log(a);
    if (rs.double_multiplicities[i] > 0) s += rs.double_multiplicities[i] * std::log(2.0 * a);
  }
  return s;
}

inline void grad_log_delta_unchecked(const RootSystem& rs, std::span<const double> x,
                                     std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const auto d = static_cast<std::size_t>(rs.ambient_dim());
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const double* a = rs.positive_roots[i].data();
    double ax = 0.0;
    for (std::size_t k = 0; k < d; ++k) ax += a[k] * x[k];
    const double w = log_weight(rs, i) / ax;
    for (std::size_t k = 0; k < d; ++k) out[k] += w * a[k];
  }
}

}  // namespace detail

inline double delta(const RootSystem& rs, const Eigen::VectorXd& x) {
  detail::require_chamber(rs, x, "delta");
  return std::exp(detail::log_delta_unchecked(rs, x));
}

inline double log_delta(const RootSystem& rs, const Eigen::VectorXd& x) {
  detail::require_chamber(rs, x, "log_delta");
  return detail::log_delta_unchecked(rs, x);
}

inline Eigen::VectorXd grad_log_delta(const RootSystem& rs, const Eigen::VectorXd& x) {
  detail::require_chamber(rs, x, "grad_log_delta");
  Eigen::VectorXd g(x.size());
  detail::grad_log_delta_unchecked(rs, {x.data(), static_cast<std::size_t>(x.size())},
                                   {g.data(), static_cast<std::size_t>(g.size())});
  return g;
}

inline double laplacian_log_delta(const RootSystem& rs, const Eigen::VectorXd& x) {
  detail::require_chamber(rs, x, "laplacian_log_delta");
  double s = 0.0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const double a = rs.positive_roots[i].dot(x);
    s -= detail::log_weight(rs, i) * rs.positive_roots[i].squaredNorm() / (a * a);
  }
  return s;
}

// V = 1/8 |grad log delta|^2 + 1/4 Laplacian(log delta) = 1/2 delta^{-1/2} Laplacian(delta^{1/2}).
inline double potential_from_delta_closed(const RootSystem& rs, const Eigen::VectorXd& x) {
  const Eigen::VectorXd g = grad_log_delta(rs, x);
  return 0.125 * g.squaredNorm() + 0.25 * laplacian_log_delta(rs, x);
}

enum class CouplingConvention { paper, op83 };

inline CouplingConvention parse_convention(const std::string& s) {
  if (s == "paper") return CouplingConvention::paper;
  if (s == "op83") return CouplingConvention::op83;
  throw std::invalid_argument("unknown coupling convention '" + s + "'");
}

inline const char* to_string(CouplingConvention c) {
  return c == CouplingConvention::paper ? "paper" : "op83";
}

// Per-root coefficient g_alpha of the potential sum g_alpha |alpha|^2 / (8 alpha(x)^2).
//   paper: m(2m - 2)
//   op83:  m(m - 2 + 2 m2), plus m2(m2 - 2) for the root 2 alpha.
inline double cm_potential_closed(const RootSystem& rs, const Eigen::VectorXd& x,
                                  CouplingConvention convention) {
  detail::require_chamber(rs, x, "cm_potential_closed");
  double s = 0.0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const double m = rs.multiplicities[i];
    const double m2 = rs.double_multiplicities[i];
    const double a = rs.positive_roots[i].dot(x);
    const double norm2 = rs.positive_roots[i].squaredNorm();
    if (convention == CouplingConvention::paper) {
      s += m * (2.0 * m - 2.0) * norm2 / (8.0 * a * a);
    } else {
      s += m * (m - 2.0 + 2.0 * m2) * norm2 / (8.0 * a * a);
      // root 2 alpha: |2 alpha|^2 / (2 alpha(x))^2 = |alpha|^2 / alpha(x)^2
      if (m2 > 0) s += m2 * (m2 - 2.0) * norm2 / (8.0 * a * a);
    }
  }
  return s;
}

inline double spin_potential(const RootSystem& rs, const Eigen::VectorXd& x, const SpinLevel& s) {
  detail::require_chamber(rs, x, "spin_potential");
  s.validate(rs);
  double v = 0.0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const double a = rs.positive_roots[i].dot(x);
    v += s.coefficients[i] / (a * a);
  }
  return 0.5 * v;
}

// Random point of the chamber with alpha(x) >= margin |alpha| for every root:
// Gaussian draws of standard deviation `spread` on the root span, kept on
// acceptance.
inline Eigen::VectorXd sample_chamber_point(const RootSystem& rs, RngStream& rng, double spread = 1.0,
                                            double margin = 0.1, int max_attempts = 100000) {
  const Eigen::MatrixXd basis = rs.span_basis();
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    Eigen::VectorXd c(basis.cols());
    for (Eigen::Index k = 0; k < c.size(); ++k) c(k) = spread * next_gaussian(rng);
    const Eigen::VectorXd x = basis * c;
    bool ok = true;
    for (const auto& a : rs.positive_roots) ok = ok && a.dot(x) >= margin * a.norm();
    if (ok) return x;
  }
  throw std::runtime_error("sample_chamber_point: no admissible point found");
}

// Projection onto the span of the roots (the trace-zero hyperplane for A-type).
inline Eigen::MatrixXd span_projector(const RootSystem& rs) {
  const Eigen::MatrixXd b = rs.span_basis();
  return b * b.transpose();
}

inline void to_json(nlohmann::json& j, const RootSystem& rs) {
  nlohmann::json roots = nlohmann::json::array();
  for (const auto& r : rs.positive_roots) roots.push_back(std::vector<double>(r.data(), r.data() + r.size()));
  j = nlohmann::json{{"name", rs.name},
                     {"rank", rs.rank},
                     {"roots", roots},
                     {"m", rs.multiplicities},
                     {"m2", rs.double_multiplicities}};
}

inline void from_json(const nlohmann::json& j, RootSystem& rs) {
  rs.name = j.at("name").get<std::string>();
  rs.rank = j.at("rank").get<int>();
  rs.positive_roots.clear();
  for (const auto& r : j.at("roots")) {
    const auto v = r.get<std::vector<double>>();
    rs.positive_roots.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  rs.multiplicities = j.at("m").get<std::vector<int>>();
  rs.double_multiplicities = j.contains("m2") ? j.at("m2").get<std::vector<int>>()
                                              : std::vector<int>(rs.positive_roots.size(), 0);
  rs.validate();
}

}  // namespace symred
