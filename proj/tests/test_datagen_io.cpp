#include "icl/harness.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace icl;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "icl_tests";
  fs::create_directories(dir);
  return dir / name;
}

TaskSpec noisy(Index d, Index N, double sigma) {
  TaskSpec t;
  t.kind = TaskKind::NoisyLinear;
  t.d = d;
  t.N = N;
  t.sigma = sigma;
  return t;
}

// An absent MLP may be stored as 0x0 or 0xD; both are empty.
bool same(const Matrix& a, const Matrix& b) {
  if (a.size() == 0 || b.size() == 0) return a.size() == b.size();
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

}  // namespace

TEST(Datagen, DeterministicPerSeed) {
  TaskSpec t = noisy(3, 10, 0.2);
  const Sample a = sample_instance(t, 42), b = sample_instance(t, 42), c = sample_instance(t, 43);
  EXPECT_EQ(a.inst.xs, b.inst.xs);
  EXPECT_EQ(a.inst.ys, b.inst.ys);
  EXPECT_EQ(a.inst.x_query, b.inst.x_query);
  EXPECT_EQ(a.inst.y_query, b.inst.y_query);
  EXPECT_EQ(a.w_star, b.w_star);
  EXPECT_NE(a.inst.xs, c.inst.xs);
}

TEST(Datagen, RejectsInvalidSpecs) {
  EXPECT_THROW(sample_instance(noisy(2, 4, 0), 1), std::invalid_argument);
  TaskSpec sp;
  sp.kind = TaskKind::SparseLinear;
  sp.d = 3;
  sp.N = 4;
  sp.s = 4;
  EXPECT_THROW(sample_instance(sp, 1), std::invalid_argument);
  sp.s = 0;
  EXPECT_THROW(sample_instance(sp, 1), std::invalid_argument);
  EXPECT_THROW(parse_task_kind("quadratic"), std::invalid_argument);
}

TEST(Datagen, DegenerateMixturePrior) {
  TaskSpec t;
  t.kind = TaskKind::MixedNoise;
  t.d = 2;
  t.N = 5;
  t.sigmas = {0.1, 1.0};
  t.weights = {1.0, 0.0};
  for (std::uint64_t s = 0; s < 200; ++s) {
    const Sample smp = sample_instance(t, s);
    EXPECT_EQ(smp.k, 0);  // first component, 0-indexed
    EXPECT_EQ(smp.sigma, 0.1);
  }
}

TEST(Datagen, PriorsHaveUnitSecondMoment) {
  for (TaskKind kind : {TaskKind::Linear, TaskKind::SparseLinear}) {
    TaskSpec t;
    t.kind = kind;
    t.d = 6;
    t.N = 1;
    t.s = 2;
    double acc = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) acc += sample_instance(t, instance_seed(9, static_cast<std::uint64_t>(i))).w_star.squaredNorm();
    EXPECT_NEAR(acc / n, 1.0, 0.05) << task_kind_name(kind);
  }
}

TEST(Datagen, NoisyLabelVariance) {
  TaskSpec t = noisy(4, 1, 0.5);
  // conditional on w*: label variance is |w*|² + σ²; compare the averages
  double var = 0, expect = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const Sample s = sample_instance(t, instance_seed(3, static_cast<std::uint64_t>(i)));
    var += s.inst.ys(0) * s.inst.ys(0);
    expect += s.w_star.squaredNorm() + 0.25;
  }
  EXPECT_NEAR(var / n, expect / n, 0.05);
}

TEST(Datagen, LogisticLabelsAreBinary) {
  TaskSpec t;
  t.kind = TaskKind::Logistic;
  t.d = 3;
  t.N = 30;
  for (bool sign : {false, true}) {
    t.sign_labels = sign;
    const Sample s = sample_instance(t, 5);
    for (Index i = 0; i < t.N; ++i) EXPECT_TRUE(s.inst.ys(i) == 0 || s.inst.ys(i) == 1);
    if (sign)
      for (Index i = 0; i < t.N; ++i) EXPECT_EQ(s.inst.ys(i), s.w_star.dot(s.inst.xs.row(i)) >= 0 ? 1.0 : 0.0);
  }
  EXPECT_TRUE(is_classification(t));
}

TEST(Datagen, SplitMixGaussianMoments) {
  SplitMix64 g(11);
  double m = 0, m2 = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double z = g.normal();
    m += z;
    m2 += z * z;
  }
  EXPECT_NEAR(m / n, 0, 0.02);
  EXPECT_NEAR(m2 / n, 1, 0.02);
}

TEST(PopulationRisk, ZeroPredictor) {
  const double sigma = 0.5;
  const RiskEstimate r = population_risk(noisy(5, 8, sigma), [](const IclInstance&) { return 0.0; }, 4000, 1);
  EXPECT_NEAR(r.mean, 1 + sigma * sigma, std::max(r.half_width, 0.02) * 1.5);
  EXPECT_GT(r.half_width, 0);
  EXPECT_EQ(r.n, 4000);
}

TEST(PopulationRisk, BayesBeatsRidge) {
  TaskSpec t;
  t.kind = TaskKind::MixedNoise;
  t.d = 4;
  t.N = 10;
  t.sigmas = {0.1, 1.0};
  t.weights = {0.5, 0.5};
  MixedNoiseModel model{t.sigmas, t.weights};
  const Predictor bayes = [&](const IclInstance& in) { return bayes_mixed_noise_predict(model, in); };
  const auto lb = instance_losses(t, bayes, 2000, 5);
  for (double lam : {0.01, 0.1, 0.4, 1.0}) {
    const auto lr = instance_losses(t, [lam](const IclInstance& in) { return ridge_closed_form(in, lam).dot(in.x_query); }, 2000, 5);
    std::vector<double> diff(lb.size());
    for (size_t i = 0; i < lb.size(); ++i) diff[i] = lb[i] - lr[i];
    const RiskEstimate e = mean_and_half_width(diff);
    EXPECT_LE(e.mean, 2 * e.half_width) << "lambda " << lam;
  }
}

TEST(PopulationRisk, RejectsEmptyRun) {
  EXPECT_THROW(population_risk(noisy(2, 4, 0.1), [](const IclInstance&) { return 0.0; }, 0, 1), std::invalid_argument);
}

TEST(PopulationRisk, ClassificationUsesThreshold) {
  TaskSpec t;
  t.kind = TaskKind::Logistic;
  t.d = 2;
  t.N = 4;
  t.sign_labels = true;
  const auto perfect = [](const IclInstance&) { return 0.0; };
  std::vector<double> l = instance_losses(t, perfect, 50, 2);
  for (double v : l) EXPECT_TRUE(v == 0 || v == 1);
}

TEST(Csv, RoundTrip) {
  RiskReport r;
  r.rows.push_back({"b", "oracle:ls", 8, 0.125, 0.01, 100, 7});
  r.rows.push_back({"a", "tf:w.json", 16, 1.0 / 3.0, 0.0, 100, 18446744073709551615ull});
  r.rows.push_back({"a", "oracle:ridge(0.1)", 16, 1e-300, 2.5e10, 100, 0});
  const std::string text = emit_csv(r);
  EXPECT_EQ(text.find('\r'), std::string::npos);
  EXPECT_EQ(text.substr(0, text.find('\n')), "task,method,N_used,risk_mean,half_width,n_mc,seed");
  RiskReport sorted = r;
  sorted.sort();
  EXPECT_EQ(parse_csv(text), sorted);
  EXPECT_EQ(sorted.rows.front().method, "oracle:ridge(0.1)");
}

TEST(Csv, RejectsMalformed) {
  EXPECT_THROW(parse_csv("task,method\n"), IoError);
  EXPECT_THROW(parse_csv("task,method,N_used,risk_mean,half_width,n_mc,seed\na,b,1,x,0,1,1\n"), IoError);
}

TEST(Config, ParsesAndTracksUse) {
  const Config c = Config::parse("# comment\nkind = ridge\n\nd=2 # trailing\nlambdas = 0.1, 0.2\nd = 3\ntypo = 1\n");
  EXPECT_EQ(c.str("kind"), "ridge");
  EXPECT_EQ(c.integer("d"), 3);
  EXPECT_EQ(c.nums("lambdas"), (std::vector<double>{0.1, 0.2}));
  EXPECT_EQ(c.num("missing", 2.5), 2.5);
  EXPECT_THROW(c.check_all_used(), IoError);
  EXPECT_THROW(c.num("kind"), IoError);
  EXPECT_THROW(c.num("absent"), IoError);
  EXPECT_THROW(Config::parse("no equals sign"), IoError);
}

TEST(WeightFile, RoundTripAndCorruption) {
  Construction c = build_ridge(2, 8, 0.1, 0.25, 4, 2, 0.01, 1, 1);
  WeightDoc doc{c.params, c.layout, c.report, {{"kind", "ridge"}, {"N", "8"}}};
  const fs::path path = temp_file("ridge.json");
  save_weights(path.string(), doc);
  const WeightDoc back = load_weights(path.string());
  ASSERT_EQ(back.params.layers.size(), doc.params.layers.size());
  for (size_t l = 0; l < doc.params.layers.size(); ++l) {
    const auto& a = doc.params.layers[l];
    const auto& b = back.params.layers[l];
    ASSERT_EQ(a.heads.size(), b.heads.size());
    for (size_t h = 0; h < a.heads.size(); ++h) {
      EXPECT_TRUE(same(a.heads[h].Q, b.heads[h].Q));
      EXPECT_TRUE(same(a.heads[h].K, b.heads[h].K));
      EXPECT_TRUE(same(a.heads[h].V, b.heads[h].V));
    }
    EXPECT_TRUE(same(a.mlp.W1, b.mlp.W1));
    EXPECT_TRUE(same(a.mlp.W2, b.mlp.W2));
  }
  EXPECT_EQ(back.report.layers, doc.report.layers);
  EXPECT_EQ(back.config.at("kind"), "ridge");
  EXPECT_EQ(back.layout.index("y"), doc.layout.index("y"));

  // one NaN weight makes the file unloadable
  std::string text = read_file(path.string());
  const auto pos = text.find("\"entries\"");
  ASSERT_NE(pos, std::string::npos);
  const auto num = text.find("1.0", pos);
  ASSERT_NE(num, std::string::npos);
  text.replace(num, 3, "NaN");
  const fs::path bad = temp_file("ridge_nan.json");
  write_file(bad.string(), text);
  EXPECT_THROW(load_weights(bad.string()), IoError);
  EXPECT_THROW(load_weights(temp_file("does_not_exist.json").string()), IoError);
}

TEST(InstanceJson, RoundTrip) {
  const Sample s = sample_instance(noisy(3, 5, 0.1), 8);
  IclInstance in = s.inst;
  in.split = half_split(5);
  const IclInstance back = instance_from_json(instance_to_json(in));
  EXPECT_EQ(back.xs, in.xs);
  EXPECT_EQ(back.ys, in.ys);
  EXPECT_EQ(back.x_query, in.x_query);
  EXPECT_EQ(back.y_query, in.y_query);
  EXPECT_EQ(back.split, in.split);
}

TEST(Construct, RidgeLayerCount) {
  const Config c = Config::parse("kind=ridge\nd=2\nN=16\nlambda=0.1\neps=1e-3\nalpha=0.25\nbeta=4\nB_w=4\n");
  const WeightDoc doc = construct(c);
  const double kappa = (4 + 0.1) / (0.25 + 0.1);
  EXPECT_EQ(doc.report.layers, static_cast<Index>(std::ceil(2 * kappa * std::log(4 / (2 * 1e-3)))) + 1);
  EXPECT_EQ(doc.report.layers, 180);
  EXPECT_LE(doc.report.op_norm, doc.report.norm_bound);
}

TEST(Construct, ConfigErrors) {
  try {
    construct(Config::parse("kind=transformer\n"));
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    const std::string msg = e.what();
    for (const char* k : {"ridge", "lasso", "glm", "ridge_select", "adaptive"}) EXPECT_NE(msg.find(k), std::string::npos) << msg;
  }
  EXPECT_ANY_THROW(construct(Config::parse("kind=ridge\nd=2\nN=16\nlambda=0.1\neps=2\nalpha=0.25\nbeta=4\nB_w=4\n")));
  EXPECT_THROW(construct(Config::parse("kind=ridge\nd=2\nN=16\nlambda=0.1\neps=1e-3\nalpha=0.25\nbeta=4\nB_w=4\nbogus=1\n")),
               IoError);
}

TEST(Risk, MixedNoiseReportHasEightRows) {
  const WeightDoc doc = construct(Config::parse(
      "kind=ridge_select\nd=2\nN=8\nlambdas=0.02,0.5\nalpha=0.1\nbeta=3\nB_w=4\nB_x=4\nB_y=4\ngamma=0.05\neps=0.1\n"));
  const fs::path w = temp_file("sel.json");
  save_weights(w.string(), doc);
  const Config cfg = Config::parse(
      "seed=3\nn_mc=20\n"
      "task.lo.kind=mixed_noise\ntask.lo.d=2\ntask.lo.N=8\ntask.lo.sigmas=0.1,1\n"
      "task.hi.kind=mixed_noise\ntask.hi.d=2\ntask.hi.N=8\ntask.hi.sigmas=0.1,1\ntask.hi.weights=0.1,0.9\n"
      "methods=tf:" + w.string() + "; oracle:ridge(0.02)@train; oracle:ridge(0.5)@train; oracle:bayes_mixed\n");
  const RiskReport r = run_risk(cfg);
  ASSERT_EQ(r.rows.size(), 8u);
  for (const auto& row : r.rows) {
    EXPECT_GE(row.half_width, 0);
    EXPECT_EQ(row.n_mc, 20);
    EXPECT_EQ(row.seed, 3u);
    EXPECT_EQ(row.N_used, row.method.ends_with("@train") ? 4 : 8);
  }
  EXPECT_EQ(emit_csv(run_risk(cfg)), emit_csv(r));
}

TEST(Risk, MethodErrors) {
  const Config cfg;
  const TaskSpec t = noisy(2, 4, 0.1);
  EXPECT_THROW(make_method("oracle:ridge", t, cfg), IoError);
  EXPECT_THROW(make_method("oracle:ridge(abc)", t, cfg), IoError);
  EXPECT_THROW(make_method("oracle:ls(1)", t, cfg), IoError);
  EXPECT_THROW(make_method("oracle:svm", t, cfg), IoError);
  EXPECT_THROW(make_method("tf:" + temp_file("missing.json").string(), t, cfg), IoError);
  EXPECT_EQ(make_method("oracle:3nn@train", t, cfg).N_used, 2);
}
