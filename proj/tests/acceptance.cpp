// End-to-end acceptance run: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]   (default: all)
#include "icl/harness.hpp"

#include <fmt/core.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <set>
#include <string>

using namespace icl;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Pinned trial counts, seeds and wall-clock limits.
struct Criterion {
  int id;
  std::string name;
  double time_limit_s;  // <= 0: none
  std::function<Outcome()> run;
};

Outcome suite(const std::string& name, int trials, std::uint64_t seed = 1) {
  VerifyOptions o;
  o.seed = seed;
  o.n_trials = trials;
  o.fail_fast = false;
  const SuiteResult r = verify(name, nullptr, o);
  // worst value/bound ratio over the rows with a positive bound
  double worst = 0;
  for (const auto& row : r.rows)
    if (row.bound > 0) worst = std::max(worst, row.value / row.bound);
  std::string detail = fmt::format("{} trials, {} skipped, {} checks, worst value/bound {:.3g}", r.trials, r.skipped,
                                   r.rows.size(), worst);
  if (!r.pass) detail += "; first failure: " + r.first_failure;
  return {r.pass && r.trials > r.skipped, detail};
}

// Mixed-noise selection: the ridge-λ-selection transformer against single-λ ridge
// fitted on the same training half, with paired Monte-Carlo half-widths.
Outcome mixed_noise_selection() {
  const double sigma_lo = 0.1, sigma_hi = 0.5;
  const Index d = 8, N = 32, n_mc = 2000;
  const std::uint64_t seed = 7;
  const WeightDoc doc = construct(Config::parse(
      "kind=ridge_select\nd=8\nN=32\nlambdas=0.005,0.125\nalpha=0.1\nbeta=2.5\nB_w=4\nB_x=4\nB_y=4\ngamma=0.01\neps=0.05\n"));
  const std::vector<std::string> ridge = {"oracle:ridge(0.005)@train", "oracle:ridge(0.125)@train"};

  std::vector<std::vector<double>> tf(2);
  std::vector<std::vector<std::vector<double>>> rl(2, std::vector<std::vector<double>>(2));
  const double sigmas[2] = {sigma_lo, sigma_hi};
  for (int t = 0; t < 2; ++t) {
    TaskSpec task;
    task.kind = TaskKind::NoisyLinear;
    task.d = d;
    task.N = N;
    task.sigma = sigmas[t];
    tf[t] = instance_losses(task, [&](const IclInstance& in) { return tf_predict(doc, in); }, n_mc, seed);
    for (int k = 0; k < 2; ++k) rl[t][k] = instance_losses(task, make_method(ridge[k], task, Config()).predict, n_mc, seed);
  }
  const auto diff = [](const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return mean_and_half_width(out);
  };
  const auto mean = [](const std::vector<double>& v) { return mean_and_half_width(v).mean; };

  bool pass = true;
  std::string detail;
  const double slack_abs = 0.05 * sigma_hi * sigma_hi;
  int best_of[2];
  for (int t = 0; t < 2; ++t) {
    best_of[t] = mean(rl[t][0]) <= mean(rl[t][1]) ? 0 : 1;
    const RiskEstimate gap = diff(tf[t], rl[t][best_of[t]]);
    const double allowed = std::max(slack_abs, 3 * gap.half_width);
    const bool ok = gap.mean <= allowed;
    pass &= ok;
    detail += fmt::format("σ={}: TF {:.4f}, ridge {:.4f}/{:.4f}, TF−best {:+.4f} ≤ {:.4f} {}; ", sigmas[t], mean(tf[t]),
                          mean(rl[t][0]), mean(rl[t][1]), gap.mean, allowed, ok ? "ok" : "VIOLATED");
  }
  for (int k = 0; k < 2; ++k) {
    // the task on which candidate k is not the better choice
    int opposite = -1;
    for (int t = 0; t < 2; ++t)
      if (best_of[t] != k) opposite = t;
    if (opposite < 0) {
      pass = false;
      detail += fmt::format("{} is best on both tasks; ", ridge[k]);
      continue;
    }
    const RiskEstimate gap = diff(rl[opposite][k], tf[opposite]);
    const bool ok = gap.mean >= 3 * gap.half_width && gap.mean > 0;
    pass &= ok;
    detail += fmt::format("{} on σ={}: worse than TF by {:.4f} (3 hw {:.4f}) {}; ", ridge[k], sigmas[opposite], gap.mean,
                          3 * gap.half_width, ok ? "ok" : "VIOLATED");
  }
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  const std::vector<Criterion> all = {
      {1, "exact-GD equivalence (100 instances, deviation <= 1e-9)", 10, [] { return suite("exact-grad", 100); }},
      {2, "ridge bound, norm and head budget (100 trials)", 30, [] { return suite("ridge", 100); }},
      {3, "inexact-GD composition, eps in {1e-4, 1e-3} (100 trials)", 0, [] { return suite("inexact-gd", 100); }},
      {4, "lasso loss gap and prox-GD iterates (100 trials)", 60, [] { return suite("lasso", 100); }},
      {5, "logistic GLM trajectory and prediction (50 trials)", 0, [] { return suite("glm", 50); }},
      {6, "two-layer NN GD gradient and trajectory bounds (50 trials)", 0, [] { return suite("nn", 50); }},
      {7, "evaluation layer, binary/correlation tests, format conversion (200 instances)", 0,
       [] { return suite("tests", 200); }},
      {8, "selection weights on the simplex, near-minimal support (100 trials)", 0, [] { return suite("selection", 100); }},
      {9, "mixed-noise ridge-lambda selection vs single-lambda ridge (n_mc 2000)", 300, mixed_noise_selection},
      {10, "adaptive regression/classification (500 + 500 instances)", 0, [] { return suite("adaptive", 500); }},
      {11, "norm/size budget of every builder", 60, [] { return suite("norm-budget", 1); }},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::stoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (c.time_limit_s > 0 && secs > c.time_limit_s) {
      o.pass = false;
      o.detail += fmt::format("; runtime {:.1f}s exceeds {:.0f}s", secs, c.time_limit_s);
    }
    failed += !o.pass;
    fmt::print("criterion {:>2}: {} — {} [{:.1f}s] {}\n", c.id, o.pass ? "PASS" : "FAIL", c.name, secs, o.detail);
  }
  return failed ? 1 : 0;
}
