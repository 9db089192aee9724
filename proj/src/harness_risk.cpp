#include "icl/harness.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <sstream>

namespace icl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<std::string> split_methods(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';'))
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

// "ridge(0.1)" -> ("ridge", 0.1); "ls" -> ("ls", nullopt)
std::pair<std::string, std::optional<double>> parse_call(const std::string& body, const std::string& spec) {
  const auto open = body.find('(');
  if (open == std::string::npos) return {body, std::nullopt};
  if (body.back() != ')') throw IoError("method '" + spec + "': missing ')'");
  const std::string arg = trim(body.substr(open + 1, body.size() - open - 2));
  try {
    size_t used = 0;
    const double v = std::stod(arg, &used);
    if (used != arg.size() || !std::isfinite(v)) throw std::invalid_argument("trailing");
    return {body.substr(0, open), v};
  } catch (const std::exception&) {
    throw IoError("method '" + spec + "': bad argument '" + arg + "'");
  }
}

IclInstance first_examples(const IclInstance& inst, Index n) {
  IclInstance out = inst;
  out.xs = inst.xs.topRows(n);
  out.ys = inst.ys.head(n);
  out.split.clear();
  return out;
}

MixedNoiseModel bayes_model(const TaskSpec& task, const Config& cfg) {
  MixedNoiseModel m;
  if (cfg.has("bayes.sigmas")) {
    m.sigmas = cfg.nums("bayes.sigmas");
    m.weights = cfg.nums("bayes.weights", std::vector<double>(m.sigmas.size(), 1.0 / static_cast<double>(m.sigmas.size())));
  } else if (task.kind == TaskKind::MixedNoise) {
    m.sigmas = task.sigmas;
    m.weights = task.weights;
  } else if (task.kind == TaskKind::NoisyLinear) {
    m.sigmas = {task.sigma};
    m.weights = {1.0};
  } else {
    throw IoError("oracle:bayes_mixed needs bayes.sigmas for task kind " + task_kind_name(task.kind));
  }
  if (m.sigmas.empty() || m.sigmas.size() != m.weights.size())
    throw IoError("bayes.sigmas and bayes.weights must have the same positive length");
  return m;
}

}  // namespace

TaskSpec task_from_config(const Config& cfg, const std::string& prefix) {
  TaskSpec t;
  try {
    t.kind = parse_task_kind(cfg.str(prefix + "kind"));
    t.d = cfg.integer(prefix + "d");
    t.N = cfg.integer(prefix + "N");
    t.sigma = cfg.num(prefix + "sigma", 0.0);
    t.s = static_cast<int>(cfg.integer(prefix + "s", 0));
    t.sigmas = cfg.nums(prefix + "sigmas", {});
    t.weights = cfg.nums(prefix + "weights", {});
    if (t.kind == TaskKind::MixedNoise && t.weights.empty() && !t.sigmas.empty())
      t.weights.assign(t.sigmas.size(), 1.0 / static_cast<double>(t.sigmas.size()));
    t.sign_labels = cfg.flag(prefix + "sign_labels", false);
    t.w_scale = cfg.num(prefix + "w_scale", 1.0);
    validate(t);
  } catch (const std::invalid_argument& e) {
    throw IoError(prefix + ": " + e.what());
  }
  return t;
}

double tf_predict(const WeightDoc& doc, const IclInstance& inst) {
  const auto it = doc.config.find("N");
  if (it != doc.config.end() && std::stol(it->second) != inst.N())
    throw IoError("weights were built for N = " + it->second + ", instance has N = " + std::to_string(inst.N()));
  const std::optional<std::vector<int>> tags =
      doc.report.kind == "ridge_select" ? std::optional(half_split(inst.N())) : std::nullopt;
  const Tokens out = tf_forward(doc.params, encode_icl(inst, doc.params.D, tags));
  return read_y(out, inst.d());
}

RiskMethod make_method(const std::string& spec, const TaskSpec& task, const Config& cfg) {
  RiskMethod m;
  m.name = spec;
  m.N_used = task.N;
  std::string body = spec;
  bool train_only = false;
  if (body.size() > 6 && body.ends_with("@train")) {
    train_only = true;
    body.resize(body.size() - 6);
  }

  if (body.starts_with("tf:")) {
    if (train_only) throw IoError("method '" + spec + "': @train applies to oracles only");
    auto doc = std::make_shared<WeightDoc>(load_weights(body.substr(3)));
    const auto it = doc->config.find("N");
    if (it != doc->config.end() && std::stol(it->second) != task.N)
      throw IoError("method '" + spec + "' was built for N = " + it->second + " but the task has N = " +
                    std::to_string(task.N));
    if (doc->params.D < task.d + 3) throw IoError("method '" + spec + "': token dimension too small for d");
    m.predict = [doc](const IclInstance& inst) { return tf_predict(*doc, inst); };
    return m;
  }
  if (!body.starts_with("oracle:")) throw IoError("method '" + spec + "': expected tf:<file> or oracle:<name>");

  const auto [name, arg] = parse_call(body.substr(7), spec);
  auto need_arg = [&, &arg = arg] {
    if (!arg) throw IoError("method '" + spec + "' needs a parameter, e.g. " + name + "(0.1)");
    if (*arg < 0) throw IoError("method '" + spec + "': parameter must be non-negative");
    return *arg;
  };
  auto no_arg = [&, &arg = arg] {
    if (arg) throw IoError("method '" + spec + "' takes no parameter");
  };
  Predictor base;
  if (name == "ridge") {
    const double lam = need_arg();
    base = [lam](const IclInstance& in) { return ridge_closed_form(in, lam).dot(in.x_query); };
  } else if (name == "lasso") {
    const double lam = need_arg();
    base = [lam](const IclInstance& in) { return lasso_solve(in, lam).dot(in.x_query); };
  } else if (name == "ls") {
    no_arg();
    base = [](const IclInstance& in) { return least_squares(in).dot(in.x_query); };
  } else if (name == "logistic") {
    no_arg();
    base = [](const IclInstance& in) { return sigmoid(logistic_regression(in).dot(in.x_query)); };
  } else if (name == "bayes_mixed") {
    no_arg();
    const MixedNoiseModel model = bayes_model(task, cfg);
    base = [model](const IclInstance& in) { return bayes_mixed_noise_predict(model, in); };
  } else if (name == "3nn") {
    no_arg();
    base = [](const IclInstance& in) { return knn_predict(in, 3); };
  } else if (name == "averaging") {
    no_arg();
    base = averaging_predict;
  } else {
    throw IoError("unknown oracle '" + name + "' (valid: ridge(λ), lasso(λ), ls, logistic, bayes_mixed, 3nn, averaging)");
  }
  if (train_only) {
    const Index n = (task.N + 1) / 2;
    m.N_used = n;
    m.predict = [base, n](const IclInstance& in) { return base(first_examples(in, n)); };
  } else {
    m.predict = base;
  }
  return m;
}

RiskReport run_risk(const Config& cfg, std::optional<std::uint64_t> seed, std::optional<Index> n_mc) {
  const std::uint64_t s = seed ? *seed : static_cast<std::uint64_t>(cfg.integer("seed", 1));
  const Index n = n_mc ? *n_mc : cfg.integer("n_mc", 1000);
  if (n < 1) throw IoError("n_mc must be positive");
  const auto methods = split_methods(cfg.str("methods"));
  if (methods.empty()) throw IoError("no methods given");

  std::vector<std::string> tasks;
  for (const auto& key : cfg.keys_with_prefix("task."))
    if (key.ends_with(".kind")) tasks.push_back(key.substr(0, key.size() - 5));
  if (tasks.empty()) throw IoError("no tasks given (expected task.<name>.kind = ...)");

  std::vector<std::pair<std::string, TaskSpec>> specs;
  for (const auto& t : tasks) specs.emplace_back(t, task_from_config(cfg, "task." + t + "."));
  // resolve every method before any Monte-Carlo work so config errors surface early
  std::vector<std::vector<RiskMethod>> resolved;
  for (const auto& [name, task] : specs) {
    std::vector<RiskMethod> ms;
    for (const auto& m : methods) ms.push_back(make_method(m, task, cfg));
    resolved.push_back(std::move(ms));
  }
  cfg.check_all_used();

  RiskReport report;
  for (size_t t = 0; t < specs.size(); ++t)
    for (const auto& m : resolved[t]) {
      const RiskEstimate r = population_risk(specs[t].second, m.predict, n, s);
      report.rows.push_back({specs[t].first, m.name, m.N_used, r.mean, r.half_width, n, s});
    }
  report.sort();
  return report;
}

}  // namespace icl
