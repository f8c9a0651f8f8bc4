#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "symred/reduce.hpp"

using namespace symred;
using Catch::Approx;

namespace {

SdeProblem brownian_1d() {
  SdeProblem p;
  p.label = "bm1";
  p.dim = 1;
  p.noise_dim = 1;
  p.drift = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
  p.diffusion = [](std::span<const double>, std::span<double> out) { out[0] = 1.0; };
  p.constant_diffusion = true;
  return p;
}

RootSystem single(int m) {
  Multiplicity mult;
  mult.m = m;
  return build_root_system(Family::single, 1, mult);
}

std::vector<double> gaussians(RngStream& rng, std::size_t n, double shift = 0.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = next_gaussian(rng) + shift;
  return v;
}

}  // namespace

TEST_CASE("Monte Carlo estimates") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const MCEstimate e = mc_estimate(v, 42);
  CHECK(e.mean == 2.5);
  CHECK(e.std_error == Approx(std::sqrt(5.0 / 3.0 / 4.0)));
  CHECK(e.n == 4);
  CHECK(e.seed == 42);
  CHECK(sample_variance(v) == Approx(5.0 / 3.0));
  const nlohmann::json j = e;
  CHECK(j.at("stderr") == Approx(e.std_error));
  CHECK_THROWS(mc_estimate(std::vector<double>{1.0}));

  RngStream rng = derive_stream(31, 0);
  const auto g = gaussians(rng, 40000);
  CHECK(sample_variance_stderr(g) == Approx(std::sqrt(2.0 / 40000.0)).epsilon(0.05));
}

TEST_CASE("Kolmogorov survival function") {
  CHECK(kolmogorov_survival(1.0) == Approx(0.26999967).epsilon(1e-7));
  CHECK(kolmogorov_survival(1.36) == Approx(0.0494).margin(2e-4));
  CHECK(kolmogorov_survival(0.5) == Approx(0.96394).margin(1e-5));
  CHECK(kolmogorov_survival(0.1) == 1.0);
  CHECK(kolmogorov_survival(5.0) < 1e-20);
  double prev = 1.0;
  for (double l = 0.2; l < 3.0; l += 0.05) {
    const double q = kolmogorov_survival(l);
    CHECK(q <= prev);
    prev = q;
  }
}

TEST_CASE("two-sample KS on worked cases") {
  std::vector<double> a(20), b(20);
  std::iota(a.begin(), a.end(), 1.0);
  std::iota(b.begin(), b.end(), 11.0);
  const KsResult shifted = ks_two_sample(a, b);
  CHECK(shifted.statistic == Approx(0.5));
  // lambda = sqrt(10) * 0.5
  const double lam = std::sqrt(10.0) * 0.5;
  double q = 0.0;
  for (int k = 1; k < 50; ++k) q += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lam * lam);
  CHECK(shifted.p_value == Approx(q).epsilon(1e-8));

  const KsResult same = ks_two_sample(a, a);
  CHECK(same.statistic == 0.0);
  CHECK(same.p_value == 1.0);

  std::vector<double> far(20);
  std::iota(far.begin(), far.end(), 100.0);
  const KsResult disjoint = ks_two_sample(a, far);
  CHECK(disjoint.statistic == 1.0);
  CHECK(disjoint.p_value < 1e-6);
  CHECK_THROWS(ks_two_sample(std::vector<double>(5, 1.0), a));
}

TEST_CASE("KS test is calibrated under the null") {
  RngStream rng = derive_stream(32, 0);
  int rejections = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    const auto x = gaussians(rng, 1000);
    const auto y = gaussians(rng, 1000);
    if (ks_two_sample(x, y).p_value < 0.05) ++rejections;
  }
  const double rate = static_cast<double>(rejections) / reps;
  CHECK(rate >= 0.02);
  CHECK(rate <= 0.09);

  int detected = 0;
  for (int r = 0; r < 50; ++r) {
    const auto x = gaussians(rng, 400);
    const auto y = gaussians(rng, 400, 0.5);
    if (ks_two_sample(x, y).p_value < 0.01) ++detected;
  }
  CHECK(detected >= 48);

  const auto x = gaussians(rng, 1000);
  const auto y = gaussians(rng, 1000, 3.0);
  CHECK(ks_two_sample(x, y).p_value < 1e-6);
}

TEST_CASE("projecting matrix Brownian motion lands in the chamber") {
  const HermitianPoint q0 = HermitianPoint::diagonal(Eigen::Vector3d(1.5, 0.0, -1.5));
  const PathEnsemble m = matrix_bm(3, q0, 0.2, 0.01, 300, 33, {.record_every = 10});
  const PathEnsemble x = project_ensemble(m, 3);
  REQUIRE(x.dim == 3);
  REQUIRE(x.times == m.times);
  const HermitianBasis basis(3);
  for (std::size_t p = 0; p < x.n_paths; ++p)
    for (std::size_t r = 0; r < x.n_records(); ++r) {
      const auto v = x.at(p, r);
      REQUIRE(v[0] > v[1]);
      REQUIRE(v[1] > v[2]);
      REQUIRE(std::abs(v[0] + v[1] + v[2]) < 1e-12);
    }
  const Eigen::VectorXd direct = eigen_project(hermitian_sample(m, basis, 7, 2));
  for (int i = 0; i < 3; ++i) CHECK(x.at(7, 2)[static_cast<std::size_t>(i)] == direct(i));
  CHECK_THROWS(project_ensemble(m, 2));
}

TEST_CASE("projected law does not depend on the orbit representative") {
  RngStream rng = derive_stream(34, 0);
  const HermitianPoint q0 = HermitianPoint::diagonal(Eigen::Vector3d(1.0, 0.2, -1.2));
  const Eigen::MatrixXcd u = random_unitary(3, rng);
  const HermitianPoint q1{u * q0.entries * u.adjoint()};
  const PathEnsemble a = project_ensemble(matrix_bm(3, q0, 0.3, 0.01, 2000, 35, {.record_every = 30}), 3);
  const PathEnsemble b = project_ensemble(matrix_bm(3, q1, 0.3, 0.01, 2000, 36, {.record_every = 30}), 3);
  const LawComparison c = compare_laws(a, b, 0.3);
  CHECK(c.coords.size() == 3);
  CHECK(c.covariances.size() == 3);
  CHECK(c.min_p_value() > 1e-3);
  CHECK(c.max_moment_z() < 4.5);
}

TEST_CASE("generator estimate: Brownian motion and a Bessel process") {
  Eigen::VectorXd x0(1);
  x0 << 1.0;
  const PathEnsemble bm = simulate_ensemble(brownian_1d(), x0, 0.1, 0.01, 20000, 37, {.record_every = 5});
  // 1/2 d^2/dx^2 of x^2 is 1
  const GeneratorEstimate g = generator_estimate(bm, [](std::span<const double> x) { return x[0] * x[0]; }, 0.1);
  CHECK(std::abs(g.slope_t.mean - 1.0) < 4.0 * g.slope_t.std_error);
  CHECK(std::abs(g.richardson.mean - 1.0) < 4.0 * g.richardson.std_error);
  CHECK(g.wall_fraction == 0.0);

  // drift of the m = 3 radial process at x = 1 is m / (2x)
  const PathEnsemble bes = simulate_ensemble(radial_sde(single(3), RadialDirection::forward), x0, 0.02, 0.001, 20000,
                                             38, {.record_every = 10});
  const GeneratorEstimate h = generator_estimate(bes, [](std::span<const double> x) { return x[0]; }, 0.02);
  CHECK(std::abs(h.richardson.mean - 1.5) < 4.0 * h.richardson.std_error + 0.01);
  CHECK_THROWS(generator_estimate(bes, [](std::span<const double> x) { return x[0]; }, 0.015));
}

TEST_CASE("drift estimates") {
  Eigen::VectorXd x0(1);
  x0 << 0.0;
  const PathEnsemble bm = simulate_ensemble(brownian_1d(), x0, 1.0, 0.01, 20000, 39, {.record_every = 10});
  const DriftEstimate zero = drift_estimate(bm, 0.5, 0.1);
  CHECK(std::abs(zero.drift[0].mean) < 4.0 * zero.drift[0].std_error);
  CHECK(zero.bin_count > 1000);

  x0 << 2.0;
  const PathEnsemble bes = simulate_ensemble(radial_sde(single(2), RadialDirection::forward), x0, 0.6, 0.005, 20000,
                                             40, {.record_every = 4});
  const DriftEstimate d = drift_estimate(bes, 0.5, 0.1, 0.1);
  const double expected = 1.0 / d.at_point(0);  // m/(2x) with m = 2
  CHECK(std::abs(d.drift[0].mean - expected) < 4.0 * d.drift[0].std_error + 0.02);
  CHECK_THROWS(drift_estimate(bes, 0.5, 0.01));
}

TEST_CASE("time reversal flips the record order") {
  Eigen::VectorXd x0(1);
  x0 << 0.0;
  const PathEnsemble e = simulate_ensemble(brownian_1d(), x0, 0.5, 0.01, 10, 41, {.record_every = 10});
  const PathEnsemble r = time_reverse(e);
  REQUIRE(r.n_records() == e.n_records());
  CHECK(r.times.front() == 0.0);
  CHECK(r.times.back() == Approx(0.5));
  const std::size_t nr = e.n_records();
  for (std::size_t p = 0; p < e.n_paths; ++p)
    for (std::size_t k = 0; k < nr; ++k) CHECK(r.at(p, k)[0] == e.at(p, nr - 1 - k)[0]);
  const PathEnsemble rr = time_reverse(r);
  CHECK(rr.values == e.values);
  for (std::size_t k = 0; k < nr; ++k) CHECK(rr.times[k] == Approx(e.times[k]).margin(1e-14));

  // a Brownian bridge read backwards pulls towards the start: at the
  // reversed origin the drift is -x / T on average, so the bin mean drift
  // has the opposite sign of the bin centre
  const PathEnsemble wide = simulate_ensemble(brownian_1d(), x0, 1.0, 0.01, 20000, 42, {.record_every = 5});
  const PathEnsemble back = time_reverse(wide);
  int pos = 0, neg = 0;
  for (std::size_t p = 0; p < back.n_paths; ++p) {
    const double start = back.at(p, 0)[0];
    const double inc = back.at(p, 4)[0] - start;
    if (std::abs(start) < 0.5) continue;
    (start * inc < 0.0 ? neg : pos)++;
  }
  CHECK(neg > pos);
}

TEST_CASE("compare_laws on the same SDE is calibrated") {
  const RootSystem rs = single(2);
  Eigen::VectorXd x0(1);
  x0 << 1.0;
  const SdeProblem p = radial_sde(rs, RadialDirection::forward);
  int ok = 0;
  const int reps = 40;
  for (int r = 0; r < reps; ++r) {
    const auto a = simulate_ensemble(p, x0, 0.2, 0.01, 400, 1000 + 2 * static_cast<std::uint64_t>(r), {.record_every = 20});
    const auto b = simulate_ensemble(p, x0, 0.2, 0.01, 400, 1001 + 2 * static_cast<std::uint64_t>(r), {.record_every = 20});
    if (compare_laws(a, b, 0.2).min_p_value() > 0.001) ++ok;
  }
  CHECK(ok >= 38);
}

TEST_CASE("forward and reversed Dyson laws are distinguishable") {
  Multiplicity m;
  m.m = 2;
  const RootSystem rs = build_root_system(Family::A, 3, m);
  const Eigen::Vector3d x0(2.0, 0.0, -2.0);
  const auto f = simulate_ensemble(radial_sde(rs, RadialDirection::forward), x0, 0.5, 0.001, 2000, 43, {.record_every = 500});
  const auto r = simulate_ensemble(radial_sde(rs, RadialDirection::reversed), x0, 0.5, 0.001, 2000, 44, {.record_every = 500});
  // compare on the surviving reversed paths
  const auto a = f.column(1, 2), b = r.column(1, 2);
  const auto ma = mc_estimate(a), mb = mc_estimate(b);
  CHECK(std::abs(ma.mean - mb.mean) > 3.0 * std::hypot(ma.std_error, mb.std_error));
  CHECK(ks_two_sample(a, b).p_value < 1e-3);
}

TEST_CASE("generator estimates on the worked examples") {
  SdeProblem bm;
  bm.label = "bm3";
  bm.dim = 3;
  bm.noise_dim = 3;
  bm.drift = [](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); };
  bm.diffusion = [](std::span<const double>, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < 3; ++i) out[i * 3 + i] = 1.0;
  };
  bm.constant_diffusion = true;
  const auto e = simulate_ensemble(bm, Eigen::Vector3d(0.5, -1.0, 0.2), 0.1, 0.01, 20000, 45, {.record_every = 5});
  const auto g = generator_estimate(e, [](std::span<const double> x) { return x[0] * x[0] + x[1] * x[1] + x[2] * x[2]; }, 0.1);
  CHECK(std::abs(g.richardson.mean - 3.0) < 3.0 * g.richardson.std_error);

  const auto s = frame_bundle_bm_sphere(FrameState::north_pole(), 0.02, 0.001, 20000, 46, {.record_every = 10});
  const auto h = generator_estimate(s, [](std::span<const double> x) { return x[2]; }, 0.02);
  CHECK(std::abs(h.richardson.mean + 1.0) < 3.0 * h.richardson.std_error);

  Eigen::VectorXd x0(1);
  x0 << 1.0;
  const auto b = simulate_ensemble(radial_sde(single(2), RadialDirection::forward), x0, 0.02, 0.001, 20000, 47,
                                   {.record_every = 10});
  const auto k = generator_estimate(b, [](std::span<const double> x) { return x[0] * x[0]; }, 0.02);
  CHECK(std::abs(k.richardson.mean - 3.0) < 3.0 * k.richardson.std_error);
}

TEST_CASE("projection ignores conjugation of every sample") {
  RngStream rng = derive_stream(48, 0);
  const HermitianBasis basis(3);
  const HermitianPoint q0 = HermitianPoint::diagonal(Eigen::Vector3d(1.0, 0.0, -1.0));
  const PathEnsemble m = matrix_bm(3, q0, 0.3, 0.01, 300, 49, {.record_every = 10});
  const Eigen::MatrixXcd u = random_unitary(3, rng);
  PathEnsemble g = m;
  for (std::size_t p = 0; p < m.n_paths; ++p)
    for (std::size_t r = 0; r < m.n_records(); ++r) {
      const HermitianPoint q = hermitian_sample(m, basis, p, r);
      const Eigen::VectorXd c = basis.to_coords(u * q.entries * u.adjoint());
      std::copy(c.data(), c.data() + c.size(), g.values.data() + (p * m.n_records() + r) * m.dim);
    }
  const PathEnsemble a = project_ensemble(m, 3);
  const PathEnsemble b = project_ensemble(g, 3);
  for (std::size_t k = 0; k < a.values.size(); ++k) REQUIRE(a.values[k] == Approx(b.values[k]).margin(1e-12));

  // constant paths project to a constant chamber path
  PathEnsemble c = m;
  const Eigen::VectorXd c0 = basis.to_coords(q0.entries);
  for (std::size_t k = 0; k < c.values.size(); ++k) c.values[k] = c0(static_cast<Eigen::Index>(k % c.dim));
  const PathEnsemble pc = project_ensemble(c, 3);
  for (std::size_t p = 0; p < pc.n_paths; ++p)
    for (std::size_t r = 0; r < pc.n_records(); ++r) {
      REQUIRE(pc.at(p, r)[0] == Approx(1.0));
      REQUIRE(pc.at(p, r)[1] == Approx(0.0).margin(1e-12));
      REQUIRE(pc.at(p, r)[2] == Approx(-1.0));
    }
}
