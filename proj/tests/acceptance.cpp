// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "symred/experiments.hpp"

using namespace symred;

namespace {

constexpr std::uint64_t kSeed = 1;

struct Outcome {
  bool pass = false;
  std::string detail;
};

ExperimentOutput run(const std::string& name, unsigned threads = 1, std::function<void(ExperimentConfig&)> edit = {}) {
  ExperimentConfig c;
  c.experiment = name;
  c.seed = kSeed;
  c.threads = threads;
  if (edit) edit(c);
  return run_experiment(c);
}

// E cos(|w| sqrt(dt)) for w ~ N(0, I_2): the per-step contraction of
// E<b, b_0> under an isotropic geodesic step of length |w| sqrt(dt).
double step_contraction(double dt) {
  const double s = std::sqrt(dt);
  const double hi = 14.0;
  const int n = 20000;
  const double h = hi / n;
  auto g = [s](double r) { return std::cos(s * r) * r * std::exp(-0.5 * r * r); };
  double acc = g(0.0) + g(hi);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * g(i * h);
  return acc * h / 3.0;
}

double scheme_mean(double t, double dt) { return std::pow(step_contraction(dt), static_cast<double>(step_count(t, dt))); }

Outcome sphere() {
  const auto out = run("sphere_heat");
  const double t = 0.5;
  const double b1 = scheme_mean(t, 1e-3) - std::exp(-t);
  const double b2 = scheme_mean(t, 5e-4) - std::exp(-t);
  const double ratio = b1 / b2;
  // Monte Carlo agrees with the exact scheme mean at a coarse step
  const auto coarse = run("sphere_heat", 1, [](ExperimentConfig& c) { c.dt = 1e-2; });
  const auto& est = coarse.results.at("results").at("estimate");
  const double m = est.at("mean").get<double>(), se = est.at("stderr").get<double>();
  const bool mc_ok = std::abs(m - scheme_mean(t, 1e-2)) < 3.0 * se;
  const bool ok = out.pass && ratio >= 1.5 && ratio <= 3.0 && mc_ok;
  return {ok, out.summary + "; bias ratio dt/(dt/2) = " + detail::fmt(ratio, 4) + ", MC vs scheme at dt=1e-2 " +
                  (mc_ok ? "ok" : "off")};
}

// Multi-line summaries (tables) shrink to their verdict line, short ones are joined.
std::string one_line(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);)
    if (!l.empty()) lines.push_back(l);
  if (lines.empty()) return "";
  if (lines.size() > 5) return lines.back();
  std::string out = lines.front();
  for (std::size_t i = 1; i < lines.size(); ++i) out += "; " + lines[i];
  return out;
}

Outcome from(const std::string& name, std::function<void(ExperimentConfig&)> edit = {}) {
  const auto out = run(name, 1, std::move(edit));
  return {out.pass, one_line(out.summary)};
}

Outcome reproducible() {
  std::vector<std::string> names = {"sphere_heat",   "reduction_ks", "potential_oracle", "cm_adjudicate",
                                    "flat_hamiltonian", "generator", "ground_state",     "spin_fk"};
  std::string bad;
  for (const auto& n : names) {
    const std::string a = run(n, 1).results.dump(2);
    const std::string b = run(n, 3).results.dump(2);
    if (a != b) bad += (bad.empty() ? "" : ",") + n;
  }
  return {bad.empty(), bad.empty() ? std::to_string(names.size()) + " experiments byte-identical at 1 and 3 threads"
                                   : "differs: " + bad};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    std::string name;
    double budget_s;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "sphere frame-bundle BM", 60.0, sphere},
      {2, "Bessel(3) second moment", 60.0, [] { return from("bessel_moment"); }},
      {3, "equivariant reduction KS", 120.0, [] { return from("reduction_ks"); }},
      {4, "generator transfer", 120.0, [] { return from("generator"); }},
      {5, "potential oracle", 1.0, [] { return from("potential_oracle"); }},
      {6, "coupling adjudication", 1.0, [] { return from("cm_adjudicate"); }},
      {7, "stationary solution", 120.0, [] { return from("stationary"); }},
      {8, "spin Feynman-Kac", 180.0, [] { return from("spin_fk"); }},
      {9, "flat Hamiltonian construction", 120.0, [] { return from("flat_hamiltonian"); }},
      {10, "ground state residual", 60.0, [] { return from("ground_state"); }},
      {11, "reproducibility across threads", 600.0, reproducible},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.budget_s;
    const bool ok = o.pass && in_time;
    if (!ok) ++failed;
    std::printf("%s criterion %2d %-32s %7.2fs%s  %s\n", ok ? "PASS" : "FAIL", c.id, c.name.c_str(), secs,
                in_time ? "" : " (over budget)", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
