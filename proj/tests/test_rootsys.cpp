#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "symred/rootsys.hpp"

using namespace symred;
using Catch::Approx;

namespace {

Eigen::VectorXd v(std::initializer_list<double> xs) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) out(i++) = x;
  return out;
}

RootSystem single(int m) {
  Multiplicity mult;
  mult.m = m;
  return build_root_system(Family::single, 1, mult);
}

RootSystem a2(int m = 2) {
  Multiplicity mult;
  mult.m = m;
  return build_root_system(Family::A, 3, mult);
}

// Direct product formula, written out without the library's log-space path.
double delta_direct(const RootSystem& rs, const Eigen::VectorXd& x) {
  double d = 1.0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const double a = rs.positive_roots[i].dot(x);
    d *= std::pow(a, rs.multiplicities[i]) * std::pow(2.0 * a, rs.double_multiplicities[i]);
  }
  return d;
}

// 1/2 delta^{-1/2} Laplacian delta^{1/2} by central differences along the span.
double fd_potential_oracle(const RootSystem& rs, const Eigen::VectorXd& x, double h = 1e-4) {
  const Eigen::MatrixXd b = rs.span_basis();
  const double g0 = std::sqrt(delta_direct(rs, x));
  double lap = 0.0;
  for (Eigen::Index k = 0; k < b.cols(); ++k) {
    const double gp = std::sqrt(delta_direct(rs, x + h * b.col(k)));
    const double gm = std::sqrt(delta_direct(rs, x - h * b.col(k)));
    lap += (gp - 2.0 * g0 + gm) / (h * h);
  }
  return 0.5 * lap / g0;
}

}  // namespace

TEST_CASE("families produce the standard positive roots") {
  const auto a1 = build_root_system(Family::A, 2, {.m = 2});
  REQUIRE(a1.size() == 1);
  CHECK(a1.positive_roots[0] == v({1, -1}));
  CHECK(a1.multiplicities[0] == 2);
  CHECK(a1.rank == 1);

  const auto rs = a2();
  REQUIRE(rs.size() == 3);
  CHECK(rs.positive_roots[0] == v({1, -1, 0}));
  CHECK(rs.positive_roots[1] == v({1, 0, -1}));
  CHECK(rs.positive_roots[2] == v({0, 1, -1}));
  CHECK(rs.rank == 2);

  const auto s = single(3);
  REQUIRE(s.size() == 1);
  CHECK(s.positive_roots[0] == v({1}));
  CHECK(s.multiplicities[0] == 3);

  CHECK(build_root_system(Family::B, 3).size() == 9);
  CHECK(build_root_system(Family::C, 2).size() == 4);
  CHECK(build_root_system(Family::D, 4).size() == 12);
  const auto bc = build_root_system(Family::BC, 2, {.m = 1, .m_alt = 2, .m2 = 1});
  CHECK(bc.size() == 4);
  CHECK(bc.double_multiplicities[0] == 1);
}

TEST_CASE("unsupported family sizes are rejected") {
  CHECK_THROWS_AS(build_root_system(Family::A, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_root_system(Family::single, 2), std::invalid_argument);
  CHECK_THROWS_AS(build_root_system(Family::B, 0), std::invalid_argument);
  CHECK_THROWS_AS(build_root_system(Family::A, 3, {.m = 0}), std::invalid_argument);
  CHECK_THROWS_AS(parse_family("E8"), std::invalid_argument);
}

TEST_CASE("validate catches broken invariants") {
  RootSystem rs = a2();
  rs.positive_roots.push_back(v({-1, 1, 0}));
  rs.multiplicities.push_back(1);
  rs.double_multiplicities.push_back(0);
  CHECK_THROWS_AS(rs.validate(), std::invalid_argument);

  RootSystem wrong_rank = a2();
  wrong_rank.rank = 3;
  CHECK_THROWS_AS(wrong_rank.validate(), std::invalid_argument);

  RootSystem zero = single(1);
  zero.positive_roots[0] = v({0});
  CHECK_THROWS_AS(zero.validate(), std::invalid_argument);
}

TEST_CASE("chamber membership") {
  const auto rs = a2();
  CHECK(chamber_contains(rs, v({1, 0, -1})));
  CHECK_FALSE(chamber_contains(rs, v({0, 0, 0})));
  CHECK_FALSE(chamber_contains(rs, v({0, 1, -1})));
  CHECK_FALSE(chamber_contains(rs, v({1e-11, 0, -1e-11})));
  CHECK(chamber_contains(rs, v({1e-11, 0, -1e-11}), 1e-12));
  CHECK_THROWS_AS(ChamberPoint(rs, v({0, 1, -1})), DomainError);
}

TEST_CASE("delta on worked points") {
  Multiplicity m2;
  m2.m = 2;
  const auto a1 = build_root_system(Family::A, 2, m2);
  CHECK(delta(a1, v({1, -1})) == Approx(4.0));
  CHECK(delta(a2(), v({1, 0, -1})) == Approx(4.0));
  RootSystem empty;
  empty.rank = 0;
  CHECK(delta(empty, Eigen::VectorXd(0)) == 1.0);
  CHECK_THROWS_AS(delta(a2(), v({0, 1, -1})), DomainError);
}

TEST_CASE("grad log delta on worked points and against finite differences") {
  Multiplicity m2;
  m2.m = 2;
  const auto a1 = build_root_system(Family::A, 2, m2);
  const Eigen::VectorXd g1 = grad_log_delta(a1, v({1, -1}));
  CHECK(g1(0) == Approx(1.0));
  CHECK(g1(1) == Approx(-1.0));

  const Eigen::VectorXd g2 = grad_log_delta(a2(), v({1, 0, -1}));
  CHECK(g2(0) == Approx(3.0));
  CHECK(g2(1) == Approx(0.0).margin(1e-14));
  CHECK(g2(2) == Approx(-3.0));

  RngStream rng = derive_stream(11, 0);
  const std::vector<RootSystem> systems = {single(1), single(3), a2(), build_root_system(Family::B, 2, {.m = 1, .m_alt = 2}),
                                           build_root_system(Family::BC, 2, {.m = 1, .m_alt = 1, .m2 = 2})};
  for (const auto& rs : systems) {
    for (int k = 0; k < 20; ++k) {
      const Eigen::VectorXd x = sample_chamber_point(rs, rng, 1.5, 0.2);
      const Eigen::VectorXd g = grad_log_delta(rs, x);
      const double h = 1e-6;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(x.size());
        e(i) = h;
        const double fd = (std::log(delta_direct(rs, x + e)) - std::log(delta_direct(rs, x - e))) / (2 * h);
        CHECK(std::abs(g(i) - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
      }
      // homogeneity of degree -1
      const Eigen::VectorXd gs = grad_log_delta(rs, 2.5 * x);
      CHECK((gs - g / 2.5).norm() <= 1e-12 * g.norm());
    }
  }
}

TEST_CASE("closed-form potential on rank-one cases") {
  for (double r : {0.3, 1.0, 2.7}) {
    CHECK(potential_from_delta_closed(single(2), v({r})) == Approx(0.0).margin(1e-14));
    CHECK(potential_from_delta_closed(single(1), v({r})) == Approx(-1.0 / (8 * r * r)));
    CHECK(potential_from_delta_closed(single(3), v({r})) == Approx(3.0 / (8 * r * r)));
  }
}

TEST_CASE("closed-form potential matches the finite-difference oracle") {
  RngStream rng = derive_stream(12, 0);
  const std::vector<RootSystem> systems = {single(1), single(2), single(3), a2(2), a2(1),
                                           build_root_system(Family::B, 2, {.m = 2, .m_alt = 1}),
                                           build_root_system(Family::D, 3, {.m = 1})};
  for (const auto& rs : systems) {
    for (int k = 0; k < 100; ++k) {
      const Eigen::VectorXd x = sample_chamber_point(rs, rng, 1.5, 0.25);
      const double fd = fd_potential_oracle(rs, x);
      INFO(rs.name << " at point " << k);
      CHECK(std::abs(potential_from_delta_closed(rs, x) - fd) < 1e-6 * (1.0 + std::abs(fd)));
    }
  }
}

TEST_CASE("Vandermonde harmonicity and the two coupling conventions") {
  RngStream rng = derive_stream(13, 0);
  for (int n = 2; n <= 5; ++n) {
    const auto rs = build_root_system(Family::A, n, {.m = 2});
    for (int k = 0; k < 20; ++k) {
      const Eigen::VectorXd x = sample_chamber_point(rs, rng, 1.0, 0.2);
      const double oracle = potential_from_delta_closed(rs, x);
      CHECK(std::abs(oracle) < 1e-10);
      CHECK(std::abs(cm_potential_closed(rs, x, CouplingConvention::op83) - oracle) < 1e-10);
      CHECK(cm_potential_closed(rs, x, CouplingConvention::paper) > 1e-3);
    }
  }
}

TEST_CASE("coupling conventions on worked points") {
  Multiplicity m2;
  m2.m = 2;
  const auto a1 = build_root_system(Family::A, 2, m2);
  const Eigen::VectorXd x = v({0.5, -0.5});  // alpha(x) = 1
  CHECK(cm_potential_closed(a1, x, CouplingConvention::paper) == Approx(1.0));
  CHECK(cm_potential_closed(a1, x, CouplingConvention::op83) == Approx(0.0).margin(1e-15));
  CHECK(cm_potential_closed(single(1), v({2.0}), CouplingConvention::op83) == Approx(-1.0 / 32.0));
  CHECK(cm_potential_closed(single(1), v({2.0}), CouplingConvention::paper) == 0.0);
  CHECK(cm_potential_closed(single(3), v({1.0}), CouplingConvention::paper) == Approx(12.0 / 8.0));
  CHECK(cm_potential_closed(single(3), v({1.0}), CouplingConvention::op83) == Approx(3.0 / 8.0));
  CHECK(parse_convention("op83") == CouplingConvention::op83);
  CHECK_THROWS(parse_convention("other"));
}

TEST_CASE("m(m - 2 + 2 m2) convention equals the delta potential for BC systems too") {
  RngStream rng = derive_stream(14, 0);
  for (int m2 : {0, 1, 2, 3}) {
    const auto rs = build_root_system(Family::BC, 2, {.m = 2, .m_alt = 1, .m2 = m2});
    for (int k = 0; k < 20; ++k) {
      const Eigen::VectorXd x = sample_chamber_point(rs, rng, 1.5, 0.2);
      const double oracle = potential_from_delta_closed(rs, x);
      CHECK(std::abs(cm_potential_closed(rs, x, CouplingConvention::op83) - oracle) <= 1e-10 * (1 + std::abs(oracle)));
    }
  }
}

TEST_CASE("spin potential") {
  const auto s1 = single(2);
  CHECK(spin_potential(s1, v({2.0}), SpinLevel::uniform(s1, 9.0)) == Approx(1.125));
  CHECK(spin_potential(a2(), v({1, 0, -1}), SpinLevel::zero(a2())) == 0.0);
  const SpinLevel s{{1.0, 2.0, 0.5}};
  const Eigen::VectorXd x = v({1.3, 0.1, -1.4});
  CHECK(spin_potential(a2(), 3.0 * x, s) == Approx(spin_potential(a2(), x, s) / 9.0));
  CHECK(spin_potential(a2(), x, s) > 0.0);
  CHECK_THROWS_AS(spin_potential(a2(), x, SpinLevel{{1.0, -1.0, 0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(spin_potential(a2(), x, SpinLevel{{1.0}}), std::invalid_argument);
}

TEST_CASE("A-type quantities are invariant under permutation into the chamber") {
  const auto rs = a2(2);
  RngStream rng = derive_stream(15, 0);
  for (int k = 0; k < 20; ++k) {
    Eigen::VectorXd raw(3);
    for (int i = 0; i < 3; ++i) raw(i) = next_gaussian(rng);
    raw.array() -= raw.mean();
    std::vector<double> sorted(raw.data(), raw.data() + 3);
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(sorted.data(), 3);
    if (!chamber_contains(rs, x, 1e-3)) continue;
    // delta of the product form only depends on |alpha(x)| up to sign for m even
    double d_raw = 1.0;
    for (const auto& a : rs.positive_roots) d_raw *= std::pow(a.dot(raw), 2);
    CHECK(delta(rs, x) == Approx(d_raw).epsilon(1e-12));
    const auto rs3 = a2(3);
    double v_raw = 0.0;  // sum m(m-2)|a|^2/(8 a(x)^2) is symmetric in the roots
    for (const auto& a : rs3.positive_roots) v_raw += 3.0 * 1.0 * 2.0 / (8.0 * std::pow(a.dot(raw), 2));
    CHECK(potential_from_delta_closed(rs3, x) == Approx(v_raw).epsilon(1e-12));
  }
}

TEST_CASE("root systems round-trip through JSON") {
  const auto rs = build_root_system(Family::BC, 2, {.m = 1, .m_alt = 2, .m2 = 1});
  const nlohmann::json j = rs;
  CHECK(j.at("rank") == 2);
  CHECK(j.at("m2").size() == rs.size());
  const RootSystem back = j.get<RootSystem>();
  CHECK(back.name == rs.name);
  REQUIRE(back.size() == rs.size());
  for (std::size_t i = 0; i < rs.size(); ++i) {
    CHECK(back.positive_roots[i] == rs.positive_roots[i]);
    CHECK(back.multiplicities[i] == rs.multiplicities[i]);
    CHECK(back.double_multiplicities[i] == rs.double_multiplicities[i]);
  }
  nlohmann::json bad = j;
  bad["rank"] = 1;
  CHECK_THROWS(bad.get<RootSystem>());
}
