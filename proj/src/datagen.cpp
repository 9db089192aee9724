#include "icl/datagen.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace icl {

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SplitMix64::result_type SplitMix64::operator()() {
  state_ += 0x9e3779b97f4a7c15ULL;
  return mix64(state_);
}

double SplitMix64::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

double SplitMix64::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do u1 = uniform();
  while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

std::uint64_t SplitMix64::below(std::uint64_t n) {
  // rejection keeps the draw unbiased
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t v;
  do v = (*this)();
  while (v >= limit);
  return v % n;
}

std::uint64_t instance_seed(std::uint64_t base, std::uint64_t index) { return mix64(base ^ mix64(index + 1)); }

void validate(const TaskSpec& spec) {
  if (spec.d < 1 || spec.N < 1) throw std::invalid_argument("task needs d >= 1 and N >= 1");
  if (!(spec.w_scale > 0)) throw std::invalid_argument("w_scale must be positive");
  switch (spec.kind) {
    case TaskKind::NoisyLinear:
      if (!(spec.sigma > 0)) throw std::invalid_argument("noisy_linear needs sigma > 0");
      break;
    case TaskKind::SparseLinear:
      if (spec.s < 1 || spec.s > spec.d) throw std::invalid_argument("sparse_linear needs 1 <= s <= d");
      break;
    case TaskKind::MixedNoise: {
      if (spec.sigmas.empty() || spec.sigmas.size() != spec.weights.size())
        throw std::invalid_argument("mixed_noise needs matching sigmas and weights");
      double total = 0;
      for (size_t k = 0; k < spec.sigmas.size(); ++k) {
        if (!(spec.sigmas[k] > 0)) throw std::invalid_argument("mixed_noise sigmas must be positive");
        if (spec.weights[k] < 0) throw std::invalid_argument("mixed_noise weights must be nonnegative");
        total += spec.weights[k];
      }
      if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mixed_noise weights must sum to 1");
      break;
    }
    default: break;
  }
}

TaskKind parse_task_kind(const std::string& name) {
  if (name == "linear") return TaskKind::Linear;
  if (name == "noisy_linear") return TaskKind::NoisyLinear;
  if (name == "sparse_linear") return TaskKind::SparseLinear;
  if (name == "logistic") return TaskKind::Logistic;
  if (name == "mixed_noise") return TaskKind::MixedNoise;
  throw std::invalid_argument("unknown task kind '" + name +
                              "' (valid: linear, noisy_linear, sparse_linear, logistic, mixed_noise)");
}

std::string task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::Linear: return "linear";
    case TaskKind::NoisyLinear: return "noisy_linear";
    case TaskKind::SparseLinear: return "sparse_linear";
    case TaskKind::Logistic: return "logistic";
    case TaskKind::MixedNoise: return "mixed_noise";
  }
  return "?";
}

bool is_classification(const TaskSpec& spec) { return spec.kind == TaskKind::Logistic; }

Sample sample_instance(const TaskSpec& spec, std::uint64_t seed) {
  validate(spec);
  SplitMix64 rng(seed);
  const Index d = spec.d, N = spec.N;
  Sample out;

  out.w_star = Vector::Zero(d);
  if (spec.kind == TaskKind::SparseLinear) {
    // partial Fisher-Yates for a uniform support
    std::vector<Index> idx(static_cast<size_t>(d));
    std::iota(idx.begin(), idx.end(), Index{0});
    for (int j = 0; j < spec.s; ++j) {
      const auto r = static_cast<size_t>(j) + rng.below(static_cast<std::uint64_t>(d - j));
      std::swap(idx[static_cast<size_t>(j)], idx[r]);
      out.w_star(idx[static_cast<size_t>(j)]) = rng.normal() / std::sqrt(static_cast<double>(spec.s));
    }
  } else {
    for (Index j = 0; j < d; ++j) out.w_star(j) = rng.normal() / std::sqrt(static_cast<double>(d));
  }
  out.w_star *= spec.w_scale;

  if (spec.kind == TaskKind::NoisyLinear) out.sigma = spec.sigma;
  if (spec.kind == TaskKind::MixedNoise) {
    const double u = rng.uniform();
    double acc = 0;
    out.k = static_cast<int>(spec.weights.size()) - 1;
    for (size_t k = 0; k < spec.weights.size(); ++k) {
      acc += spec.weights[k];
      if (u < acc && spec.weights[k] > 0) {
        out.k = static_cast<int>(k);
        break;
      }
    }
    while (spec.weights[static_cast<size_t>(out.k)] <= 0) --out.k;
    out.sigma = spec.sigmas[static_cast<size_t>(out.k)];
  }

  auto label = [&](const Vector& x) {
    const double s = out.w_star.dot(x);
    switch (spec.kind) {
      case TaskKind::Logistic:
        if (spec.sign_labels) return s >= 0 ? 1.0 : 0.0;
        return rng.uniform() < 1.0 / (1.0 + std::exp(-s)) ? 1.0 : 0.0;
      case TaskKind::NoisyLinear:
      case TaskKind::MixedNoise: return s + out.sigma * rng.normal();
      default: return s;
    }
  };

  auto& inst = out.inst;
  inst.xs.resize(N, d);
  inst.ys.resize(N);
  for (Index i = 0; i < N; ++i) {
    for (Index j = 0; j < d; ++j) inst.xs(i, j) = rng.normal();
    inst.ys(i) = label(inst.xs.row(i).transpose());
  }
  inst.x_query.resize(d);
  for (Index j = 0; j < d; ++j) inst.x_query(j) = rng.normal();
  inst.y_query = label(inst.x_query);
  return out;
}

RiskEstimate mean_and_half_width(const std::vector<double>& values) {
  RiskEstimate r;
  r.n = static_cast<Index>(values.size());
  if (values.empty()) return r;
  // fixed summation order keeps results deterministic
  double sum = 0;
  for (double v : values) sum += v;
  r.mean = sum / static_cast<double>(r.n);
  if (r.n > 1) {
    double ss = 0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.half_width = 1.96 * std::sqrt(ss / static_cast<double>(r.n - 1) / static_cast<double>(r.n));
  }
  return r;
}

std::vector<double> instance_losses(const TaskSpec& spec, const Predictor& predictor, Index n_mc, std::uint64_t seed) {
  if (n_mc < 1) throw std::invalid_argument("n_mc must be positive");
  const bool cls = is_classification(spec);
  std::vector<double> losses(static_cast<size_t>(n_mc));
  for (Index i = 0; i < n_mc; ++i) {
    const Sample s = sample_instance(spec, instance_seed(seed, static_cast<std::uint64_t>(i)));
    const double yhat = predictor(s.inst);
    const double y = *s.inst.y_query;
    losses[static_cast<size_t>(i)] = cls ? ((yhat >= 0.5 ? 1.0 : 0.0) != y ? 1.0 : 0.0) : (yhat - y) * (yhat - y);
  }
  return losses;
}

RiskEstimate population_risk(const TaskSpec& spec, const Predictor& predictor, Index n_mc, std::uint64_t seed) {
  return mean_and_half_width(instance_losses(spec, predictor, n_mc, seed));
}

}  // namespace icl
