#pragma once

#include "icl/instance.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace icl {

// SplitMix64: a counter-based 64-bit generator (state advances by a fixed odd
// increment, output is a bijective mix of the state).  Gaussians come from the
// Box-Muller transform so that streams do not depend on the standard library.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  double uniform();   // in [0, 1), 53 bits
  double normal();    // standard Gaussian
  std::uint64_t below(std::uint64_t n);  // uniform integer in [0, n)

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0;
};

std::uint64_t mix64(std::uint64_t z);
// Seed of instance `index` under base seed `base`: mix64(base ^ mix64(index + 1)).
std::uint64_t instance_seed(std::uint64_t base, std::uint64_t index);

enum class TaskKind { Linear, NoisyLinear, SparseLinear, Logistic, MixedNoise };

struct TaskSpec {
  TaskKind kind = TaskKind::Linear;
  Index d = 1, N = 1;
  double sigma = 0;                 // noisy_linear
  int s = 0;                        // sparse_linear
  std::vector<double> sigmas;       // mixed_noise
  std::vector<double> weights;      // mixed_noise prior
  bool sign_labels = false;         // logistic: 1{<w*, x> >= 0} instead of Bernoulli draws
  double w_scale = 1.0;             // multiplies w* (signal strength)
};

void validate(const TaskSpec& spec);
TaskKind parse_task_kind(const std::string& name);
std::string task_kind_name(TaskKind kind);
bool is_classification(const TaskSpec& spec);

struct Sample {
  IclInstance inst;
  Vector w_star;
  double sigma = 0;  // noise level used
  int k = -1;        // mixture component drawn (mixed_noise only)
};

// x_i ~ N(0, I_d), w* ~ N(0, I_d/d) (sparse: uniform support of size s with
// N(0, 1/s) entries), labels per kind.  The query label is always drawn.
Sample sample_instance(const TaskSpec& spec, std::uint64_t seed);

struct RiskEstimate {
  double mean = 0;
  double half_width = 0;  // 1.96 standard errors
  Index n = 0;
};

using Predictor = std::function<double(const IclInstance&)>;

// Monte-Carlo risk over instance_seed(seed, 0..n_mc-1): squared error for
// regression, 0-1 error of 1{ŷ >= 1/2} for classification.
RiskEstimate population_risk(const TaskSpec& spec, const Predictor& predictor, Index n_mc, std::uint64_t seed);
// The per-instance losses behind population_risk, in instance order.
std::vector<double> instance_losses(const TaskSpec& spec, const Predictor& predictor, Index n_mc, std::uint64_t seed);

RiskEstimate mean_and_half_width(const std::vector<double>& values);

}  // namespace icl
