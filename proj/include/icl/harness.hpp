#pragma once

#include "icl/datagen.hpp"
#include "icl/io.hpp"
#include "icl/selection.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace icl {

// ---- fitted representations (deterministic, memoised per argument set) ----

SumOfRelus sigmoid_rep(double R, double eps, Index M_max = 4096);
SumOfRelus tanh_rep(double R, double eps, Index M_max = 4096);
// (s, t) ↦ s·(1 − tanh²t)
SumOfRelus tanh_grad_rep(double R, double eps, Index M_max = 2048);

// Two-layer tanh network GD with fitted activation reps on the radii the
// construction needs; act_bound = tanh(radius_act).
NnConfig tanh_nn_config(Index d, Index N, int K, double eta, int steps, double R_w, double B_x, double B_y,
                        double act_eps, double act_grad_eps, Index M_max = 2048);

// ---- construct ----

// Builds the construction named by `kind` in the config.  Keys are listed in
// the README; unknown keys and kinds are config errors (IoError).
WeightDoc construct(const Config& cfg);
const std::vector<std::string>& construction_kinds();

// ---- instances with the conditioning the constructions assume ----

struct CondSpec {
  Index d = 2, N = 16;
  double alpha = 0, beta = 1e300;  // required spectrum window of XᵀX/N (train split)
  double B_x = 1;                  // |x| = B_x exactly
  double B_y = 1;                  // labels clipped to [-B_y, B_y]
  double w_norm = 1;               // |w*|
  double noise = 0.1;
  int sparsity = 0;                // > 0: w* supported on that many coordinates
  std::vector<int> split;          // spectrum checked on the train tags
};

// Rejection sampler; nullopt after `max_tries` draws.
std::optional<IclInstance> conditioned_instance(const CondSpec& spec, SplitMix64& rng, int max_tries = 500);

// Draws an instance on the sphere of radius B_x with labels ⟨w*, x⟩ + noise.
IclInstance sphere_instance(const CondSpec& spec, SplitMix64& rng);

// ---- verify ----

struct TrialRow {
  std::string suite;
  int trial = 0;
  std::string metric;
  double value = 0, bound = 0;
  bool pass = true;
};

struct SuiteResult {
  std::string suite;
  bool pass = true;
  int trials = 0;
  int skipped = 0;  // instances the sampler could not condition
  std::vector<TrialRow> rows;
  std::string first_failure;

  std::string csv() const;
};

struct VerifyOptions {
  std::uint64_t seed = 1;
  int n_trials = 20;
  bool fail_fast = true;
};

// Suites: exact-grad, inexact-gd, ridge, lasso, glm, nn, selection, tests,
// adaptive, norm-budget.  With `doc` the suite checks that construction;
// without, every trial builds its own randomized construction.
SuiteResult verify(const std::string& suite, const WeightDoc* doc, const VerifyOptions& opts);
const std::vector<std::string>& suite_names();

// ---- risk ----

struct RiskMethod {
  std::string name;   // as written in the config
  Predictor predict;
  Index N_used = 0;   // examples the method sees, filled per task
};

// methods ∈ tf:<weights.json>, oracle:ridge(λ), oracle:ls, oracle:logistic,
// oracle:lasso(λ), oracle:bayes_mixed, oracle:3nn, oracle:averaging; an
// "@train" suffix restricts an oracle to the training half of the prompt.
RiskMethod make_method(const std::string& spec, const TaskSpec& task, const Config& cfg);

// Tasks under task.<name>.*, methods separated by ';'.
RiskReport run_risk(const Config& cfg, std::optional<std::uint64_t> seed = std::nullopt,
                    std::optional<Index> n_mc = std::nullopt);

TaskSpec task_from_config(const Config& cfg, const std::string& prefix);

// Prediction of a weight document on one instance (encodes with the split the
// construction expects).
double tf_predict(const WeightDoc& doc, const IclInstance& inst);

}  // namespace icl
