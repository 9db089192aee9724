// icl — construct, run, verify and evaluate in-context learning transformers.
#include "icl/harness.hpp"

#include <CLI11.hpp>
#include <fmt/core.h>
#include <fmt/ranges.h>

#include <chrono>
#include <exception>
#include <optional>
#include <string>

namespace {

constexpr int kPass = 0, kFail = 1, kConfigError = 2;

std::string report_path(const std::string& weights) {
  const auto dot = weights.rfind(".json");
  return (dot == std::string::npos ? weights : weights.substr(0, dot)) + ".report.json";
}

int cmd_construct(const std::string& config, const std::string& out) {
  const icl::WeightDoc doc = icl::construct(icl::Config::load(config));
  icl::save_weights(out, doc);
  icl::write_file(report_path(out), icl::report_to_json(doc.report) + "\n");
  const auto& r = doc.report;
  fmt::print("{}: layers={} max_heads={} max_hidden={} op_norm={:.6g} bound={:.6g} ({})\n", r.kind, r.layers,
             r.heads.empty() ? 0 : *std::max_element(r.heads.begin(), r.heads.end()),
             r.hidden.empty() ? 0 : *std::max_element(r.hidden.begin(), r.hidden.end()), r.op_norm, r.norm_bound,
             r.bound_formula);
  fmt::print("wrote {} and {}\n", out, report_path(out));
  return kPass;
}

int cmd_run(const std::string& weights, const std::string& instance, const std::string& config, std::uint64_t seed,
            std::optional<double> clip, bool dump) {
  const icl::WeightDoc doc = icl::load_weights(weights);
  icl::IclInstance inst;
  if (!instance.empty()) {
    inst = icl::instance_from_json(icl::read_file(instance));
  } else if (!config.empty()) {
    const icl::Config cfg = icl::Config::load(config);
    const icl::TaskSpec task = icl::task_from_config(cfg, "");
    cfg.check_all_used();
    inst = icl::sample_instance(task, seed).inst;
  } else {
    throw icl::IoError("run needs --instance <file.json> or --config <task config>");
  }
  const std::optional<std::vector<int>> tags =
      doc.report.kind == "ridge_select" ? std::optional(icl::half_split(inst.N())) : std::nullopt;
  const icl::Tokens out = icl::tf_forward(doc.params, icl::encode_icl(inst, doc.params.D, tags));
  fmt::print("y_hat {:.17g}\n", icl::read_y(out, inst.d(), clip));
  if (inst.y_query) fmt::print("y_query {:.17g}\n", *inst.y_query);
  if (dump)
    for (const auto& s : doc.layout.slots) {
      const icl::Vector v = icl::read_slot(out, inst.N(), s);
      fmt::print("slot {} {}\n", s.name, std::vector<double>(v.data(), v.data() + v.size()));
    }
  return kPass;
}

int cmd_verify(const std::string& suite, const std::string& weights, const icl::VerifyOptions& opts,
               const std::string& out) {
  std::optional<icl::WeightDoc> doc;
  if (!weights.empty()) doc = icl::load_weights(weights);
  const auto t0 = std::chrono::steady_clock::now();
  const icl::SuiteResult r = icl::verify(suite, doc ? &*doc : nullptr, opts);
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!out.empty()) icl::write_file(out, r.csv());
  if (suite == "norm-budget")
    for (const auto& row : r.rows)
      if (row.metric.ends_with(":op_norm"))
        fmt::print("{:<28} op_norm {:>10.4f} <= {:>10.4f}  {}\n", row.metric.substr(0, row.metric.size() - 8),
                   row.value, row.bound, row.pass ? "ok" : "VIOLATED");
  fmt::print("{} {}: {} trials, {} skipped, {} checks, {:.1f}s\n", r.pass ? "PASS" : "FAIL", suite, r.trials,
             r.skipped, r.rows.size(), sec);
  if (!r.pass) fmt::print("first failure: {}\n", r.first_failure);
  return r.pass ? kPass : kFail;
}

int cmd_risk(const std::string& config, std::optional<std::uint64_t> seed, std::optional<long> n_mc,
             const std::string& out) {
  const icl::RiskReport report = icl::run_risk(icl::Config::load(config), seed, n_mc);
  const std::string csv = icl::emit_csv(report);
  if (out.empty()) fmt::print("{}", csv);
  else {
    icl::write_file(out, csv);
    fmt::print("wrote {} ({} rows)\n", out, report.rows.size());
  }
  return kPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transformers as in-context learning algorithms: construct, run, verify, risk"};
  app.require_subcommand(1);

  std::string config, out, weights, instance, suite;
  std::optional<std::uint64_t> seed;
  std::optional<long> n_mc;
  std::optional<double> clip;
  int n_trials = 20;
  bool dump = false, keep_going = false;

  auto* construct = app.add_subcommand("construct", "build a construction from a config and write its weights");
  construct->add_option("--config", config, "key=value config naming the construction kind")->required();
  construct->add_option("--out", out, "weight file to write (report goes next to it)")->required();

  auto* run = app.add_subcommand("run", "single forward pass on one instance");
  run->add_option("--weights", weights, "weight file")->required();
  run->add_option("--instance", instance, "instance JSON");
  run->add_option("--config", config, "task config to sample an instance from (kind, d, N, ...)");
  run->add_option("--seed", seed, "instance seed for --config");
  run->add_option("--clip", clip, "clip the read-out to [-clip, clip]");
  run->add_flag("--dump", dump, "print every named slot of the query token");

  auto* verify = app.add_subcommand("verify", "run an invariant suite");
  verify->add_option("--suite", suite, "suite name")
      ->required()
      ->check(CLI::IsMember(icl::suite_names()));
  verify->add_option("--weights", weights, "weight file; omitted: randomized constructions");
  verify->add_option("--seed", seed, "seed");
  verify->add_option("--n-trials", n_trials, "trials")->check(CLI::PositiveNumber);
  verify->add_option("--out", out, "CSV of per-check margins");
  verify->add_flag("--keep-going", keep_going, "record every violation instead of stopping at the first");

  auto* risk = app.add_subcommand("risk", "Monte-Carlo risk of methods over tasks");
  risk->add_option("--config", config, "tasks and methods")->required();
  risk->add_option("--seed", seed, "overrides the config seed");
  risk->add_option("--n-mc", n_mc, "overrides the config n_mc")->check(CLI::PositiveNumber);
  risk->add_option("--out", out, "CSV path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kConfigError;
  }

  try {
    if (*construct) return cmd_construct(config, out);
    if (*run) return cmd_run(weights, instance, config, seed.value_or(1), clip, dump);
    if (*verify) {
      icl::VerifyOptions opts;
      opts.seed = seed.value_or(1);
      opts.n_trials = n_trials;
      opts.fail_fast = !keep_going;
      return cmd_verify(suite, weights, opts, out);
    }
    if (*risk) return cmd_risk(config, seed, n_mc, out);
  } catch (const icl::IoError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kConfigError;
  } catch (const icl::FitError& e) {
    fmt::print(stderr, "error: {} (best error reached {:.3g})\n", e.what(), e.best_eps());
    return kConfigError;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kFail;
  }
  return kConfigError;
}
