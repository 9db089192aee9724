#include "icl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>

namespace icl {

namespace {

// Thrown to stop a fail-fast suite.
struct Stop {};

struct Checker {
  SuiteResult& res;
  bool fail_fast;
  int trial = 0;

  // value <= bound (NaN fails)
  void le(const std::string& metric, double value, double bound) {
    const bool ok = value <= bound;
    res.rows.push_back({res.suite, trial, metric, value, bound, ok});
    if (!ok && res.pass) {
      res.pass = false;
      std::ostringstream m;
      m.precision(6);
      m << res.suite << " trial " << trial << ": " << metric << " = " << value << " exceeds " << bound
        << " (margin " << bound - value << ")";
      res.first_failure = m.str();
    }
    if (!ok && fail_fast) throw Stop{};
  }
  void eq(const std::string& metric, double value, double expected) {
    le(metric + "_mismatch", std::abs(value - expected), 0.0);
  }
};

double uniform(SplitMix64& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }
Index uniform_int(SplitMix64& rng, Index lo, Index hi) {
  return lo + static_cast<Index>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}
double log_uniform(SplitMix64& rng, double lo, double hi) { return std::exp(uniform(rng, std::log(lo), std::log(hi))); }

Vector sphere(SplitMix64& rng, Index d, double radius) {
  Vector v(d);
  for (Index j = 0; j < d; ++j) v(j) = rng.normal();
  return v * (radius / v.norm());
}

Config config_of(const WeightDoc& doc) {
  Config c;
  for (const auto& [k, v] : doc.config) c.set(k, v);
  return c;
}

void require_kind(const WeightDoc* doc, std::initializer_list<const char*> kinds, const std::string& suite) {
  if (!doc) return;
  for (const char* k : kinds)
    if (doc->report.kind == k) return;
  throw IoError("suite '" + suite + "' does not apply to weights of kind '" + doc->report.kind + "'");
}

// Largest |w-slot − reference| over all tokens after every step layer.
double max_traj_dev(const std::vector<Tokens>& trace, const std::vector<Vector>& ref, Index d) {
  double dev = 0;
  for (size_t l = 0; l < ref.size(); ++l)
    for (Index i = 0; i < trace[l].cols(); ++i)
      dev = std::max(dev, (trace[l].col(i).segment(d + 1, d) - ref[l]).cwiseAbs().maxCoeff());
  return dev;
}

std::vector<Tokens> run_trace(const TransformerParams& p, const Tokens& H) {
  std::vector<Tokens> trace;
  tf_forward(p, H, std::nullopt, &trace);
  return trace;
}

// Instance with spectrum inside [lo, hi] of XᵀX/N and |x| = B_x; falls back to
// reporting a skip.
std::optional<IclInstance> draw(const CondSpec& spec, SplitMix64& rng, SuiteResult& res) {
  auto inst = conditioned_instance(spec, rng);
  if (!inst) ++res.skipped;
  return inst;
}

// ---- exact-grad ----

void trial_exact_grad(Checker& ck, SplitMix64& rng, const WeightDoc* doc) {
  Index d, N;
  double B_x = 1;
  TransformerParams params;
  int steps;
  std::function<std::vector<Vector>(const IclInstance&)> reference;
  if (doc) {
    const Config c = config_of(*doc);
    d = c.integer("d");
    N = c.integer("N");
    B_x = c.num("B_x", 1.0);
    params = doc->params;
    const auto& v = doc->report.values;
    steps = static_cast<int>(v.at("steps"));
    const double eta = v.at("eta");
    const std::string kind = doc->report.kind;
    if (kind == "icgd" || kind == "ridge") {
      const double lam = v.at("lambda");
      reference = [=](const IclInstance& in) { return gd_trajectory(in, eta, steps, lam, square_loss_grad()); };
    } else {
      Regularizer reg = Regularizer::l1(v.at("reg_param"));
      if (kind == "icpgd") {
        const auto r = c.str("reg", "none");
        reg.kind = r == "l1" ? Regularizer::Kind::L1
                 : r == "l2" ? Regularizer::Kind::L2
                 : r == "box" ? Regularizer::Kind::Box
                              : Regularizer::Kind::None;
      }
      reference = [=](const IclInstance& in) { return prox_gd_trajectory(in, eta, steps, reg); };
    }
  } else {
    d = uniform_int(rng, 1, 8);
    N = uniform_int(rng, std::max<Index>(d + 1, 4), 64);
    steps = static_cast<int>(uniform_int(rng, 1, 50));
  }
  CondSpec spec;
  spec.d = d;
  spec.N = N;
  spec.B_x = B_x;
  spec.alpha = 1e-3;
  auto inst = draw(spec, rng, ck.res);
  if (!inst) return;
  if (!doc) {
    const double beta = covariance_spectrum(*inst).second;
    GdConfig g;
    g.d = d;
    g.N = N;
    g.eta = 1.0 / beta;
    g.steps = steps;
    params = build_icgd(g).params;
    const double eta = g.eta;
    reference = [=](const IclInstance& in) { return gd_trajectory(in, eta, steps, 0.0, square_loss_grad()); };
  }
  const auto trace = run_trace(params, encode_icl(*inst, params.D));
  ck.le("max_abs_dev", max_traj_dev(trace, reference(*inst), d), 1e-9);
}

// ---- inexact-gd ----

void trial_inexact(Checker& ck, SplitMix64& rng, const WeightDoc* doc) {
  Index d = uniform_int(rng, 1, 8), N = uniform_int(rng, std::max<Index>(d + 1, 4), 64);
  int steps = static_cast<int>(uniform_int(rng, 1, 50));
  TransformerParams params;
  double eta = 0;
  if (doc) {
    const Config c = config_of(*doc);
    d = c.integer("d");
    N = c.integer("N");
    steps = static_cast<int>(doc->report.values.at("steps"));
    eta = doc->report.values.at("eta");
    if (doc->report.values.at("lambda") != 0) throw IoError("inexact-gd expects an unregularised icgd construction");
    params = doc->params;
  }
  CondSpec spec;
  spec.d = d;
  spec.N = N;
  spec.alpha = 1e-3;
  auto inst = draw(spec, rng, ck.res);
  if (!inst) return;
  const double L_f = covariance_spectrum(*inst).second;
  if (!doc) {
    eta = 1.0 / L_f;
    GdConfig g;
    g.d = d;
    g.N = N;
    g.eta = eta;
    g.steps = steps;
    params = build_icgd(g).params;
  }
  ck.le("eta_times_Lf", eta * L_f, 2.0);
  const double eps = ck.trial % 2 == 0 ? 1e-4 : 1e-3;
  const auto ref = gd_trajectory(*inst, eta, steps, 0.0, square_loss_grad());
  Tokens H = encode_icl(*inst, params.D);
  double worst = 0;
  for (int l = 0; l < steps; ++l) {
    H = layer_forward(params, l, H);
    const Vector e = sphere(rng, d, eps);
    for (Index i = 0; i < H.cols(); ++i) H.col(i).segment(d + 1, d) += e;
    const double dev = (read_w(H, N, d) - ref[static_cast<size_t>(l + 1)]).norm();
    worst = std::max(worst, dev / ((l + 1) * eps));
  }
  ck.le("max_dev_over_l_eps", worst, 1.0 + 1e-9);
}

// ---- ridge ----

struct RidgeSetup {
  Index d, N;
  double lambda, alpha, beta, B_w, B_x, B_y, eps;
};

void trial_ridge(Checker& ck, SplitMix64& rng, const WeightDoc* doc) {
  RidgeSetup s;
  TransformerParams params;
  ConstructionReport report;
  std::optional<IclInstance> inst;
  CondSpec spec;
  if (doc) {
    const Config c = config_of(*doc);
    s = {c.integer("d"), c.integer("N"), c.num("lambda"), c.num("alpha"), c.num("beta"), c.num("B_w"),
         c.num("B_x", 1.0), c.num("B_y", 1.0), c.num("eps")};
    params = doc->params;
    report = doc->report;
  } else {
    s.d = uniform_int(rng, 1, 8);
    s.N = uniform_int(rng, 2 * s.d + 4, 64);
    s.lambda = log_uniform(rng, 0.01, 1.0);
    s.B_w = 2;
    s.B_x = 1;
    s.B_y = 1;
    s.eps = 1e-3;
  }
  spec.d = s.d;
  spec.N = s.N;
  spec.B_x = s.B_x;
  spec.B_y = s.B_y;
  spec.w_norm = 0.5 * s.B_w / 2;
  for (int attempt = 0; attempt < 50 && !inst; ++attempt) {
    if (doc) {
      spec.alpha = s.alpha;
      spec.beta = s.beta;
    }
    inst = conditioned_instance(spec, rng);
    if (inst && ridge_closed_form(*inst, s.lambda).norm() > s.B_w / 2) inst.reset();
  }
  if (!inst) {
    ++ck.res.skipped;
    return;
  }
  if (!doc) {
    const auto [lo, hi] = covariance_spectrum(*inst);
    s.alpha = 0.8 * lo;
    s.beta = 1.25 * hi;
    auto c = build_ridge(s.d, s.N, s.lambda, s.alpha, s.beta, s.B_w, s.eps, s.B_x, s.B_y);
    params = std::move(c.params);
    report = c.report;
  }
  const Vector w = ridge_closed_form(*inst, s.lambda);
  const auto trace = run_trace(params, encode_icl(*inst, params.D));
  const Tokens& last = trace.back();
  ck.le("pred_err", std::abs(read_y(last, s.d) - w.dot(inst->x_query)), s.eps);
  ck.le("w_err", (read_w(trace[trace.size() - 2], s.N, s.d) - w).norm(), s.eps / s.B_x);
  const double kappa = (s.beta + s.lambda) / (s.alpha + s.lambda);
  const double L = std::ceil(2 * kappa * std::log(s.B_x * s.B_w / (2 * s.eps))) + 1;
  ck.eq("layers", static_cast<double>(params.layers.size()), L);
  const double R = std::max({s.B_x * s.B_w, s.B_y, 1.0});
  ck.le("op_norm", op_norm(params), 4 * R + 8 / (s.beta + s.lambda));
  Index heads = 0;
  for (const auto& l : params.layers) heads = std::max<Index>(heads, static_cast<Index>(l.heads.size()));
  ck.le("heads_per_layer", static_cast<double>(heads), 3);
}

// ---- lasso ----

void trial_lasso(Checker& ck, SplitMix64& rng, const WeightDoc* doc) {
  Index d, N;
  double lam, beta = 0, B_w, eps, B_x = 1, B_y = 1;
  if (doc) {
    const Config c = config_of(*doc);
    d = c.integer("d");
    N = c.integer("N");
    lam = c.num("lambda");
    beta = c.num("beta");
    B_w = c.num("B_w");
    eps = c.num("eps");
    B_x = c.num("B_x", 1.0);
    B_y = c.num("B_y", 1.0);
  } else {
    d = uniform_int(rng, 2, 8);
    N = uniform_int(rng, 2 * d + 4, 64);
    lam = log_uniform(rng, 0.005, 0.05);
    B_w = 2;
    eps = 0.01;
  }
  CondSpec spec;
  spec.d = d;
  spec.N = N;
  spec.B_x = B_x;
  spec.B_y = B_y;
  spec.sparsity = static_cast<int>(std::max<Index>(1, d / 3));
  spec.noise = 0.05;
  spec.w_norm = B_w / 4;
  spec.alpha = 1e-3;
  if (doc) spec.beta = beta;
  std::optional<IclInstance> inst;
  for (int attempt = 0; attempt < 50 && !inst; ++attempt) {
    inst = conditioned_instance(spec, rng);
    if (inst && lasso_solve(*inst, lam).norm() > B_w / 2) inst.reset();
  }
  if (!inst) {
    ++ck.res.skipped;
    return;
  }
  TransformerParams params;
  if (doc) params = doc->params;
  else {
    beta = 1.05 * covariance_spectrum(*inst).second;
    params = build_lasso(d, N, lam, beta, B_w, eps, B_x, B_y).params;
  }
  const int T = static_cast<int>(std::ceil(beta * B_w * B_w / eps));
  ck.eq("layers", static_cast<double>(params.layers.size()), T + 1.0);
  const auto trace = run_trace(params, encode_icl(*inst, params.D));
  const auto ref = prox_gd_trajectory(*inst, 1 / beta, T, Regularizer::l1(lam));
  ck.le("max_abs_dev", max_traj_dev(trace, ref, d), 1e-9);
  const auto longer = prox_gd_trajectory(*inst, 1 / beta, 10 * T, Regularizer::l1(lam));
  const double gap = lasso_objective(*inst, read_w(trace[static_cast<size_t>(T)], N, d), lam) -
                     lasso_objective(*inst, longer.back(), lam);
  ck.le("loss_gap", gap, eps);
  const double R = std::max({B_x * B_w, B_y, 1.0});
  ck.le("op_norm", op_norm(params), 10 * R + (8 + 2 * lam) / beta);
}

// ---- glm ----

double sigmoid_prime(double s) {
  const double p = sigmoid(s);
  return p * (1 - p);
}

IclInstance logistic_instance(SplitMix64& rng, Index d, Index N, double B_x, double w_norm) {
  IclInstance in;
  const Vector w = sphere(rng, d, w_norm);
  in.xs.resize(N, d);
  in.ys.resize(N);
  for (Index i = 0; i < N; ++i) {
    const Vector x = sphere(rng, d, B_x);
    in.xs.row(i) = x;
    in.ys(i) = rng.uniform() < sigmoid(w.dot(x)) ? 1.0 : 0.0;
  }
  in.x_query = sphere(rng, d, B_x);
  return in;
}

void trial_glm(Checker& ck, SplitMix64& rng, const WeightDoc* doc) {
  const double L_g = 0.25;
  double eps_g = 1e-3;
  GlmConfig g;
  TransformerParams params;
  if (doc) {
    const Config c = config_of(*doc);
    g.d = c.integer("d");
    g.N = c.integer("N");
    g.alpha = c.num("alpha");
    g.beta = c.num("beta");
    g.B_w = c.num("B_w");
    g.B_x = c.num("B_x", 1.0);
    g.eps = c.num("eps");
    eps_g = doc->report.values.at("link_eps");
    params = doc->params;
  } else {
    g.d = uniform_int(rng, 1, 4);
    g.N = uniform_int(rng, 20, 64);
    g.B_w = 4;
    g.B_x = 1;
    g.eps = 0.05;
  }
  std::optional<IclInstance> inst;
  double alpha_loc = 0, beta_loc = 0;
  for (int attempt = 0; attempt < 50 && !inst; ++attempt) {
    IclInstance in = logistic_instance(rng, g.d, g.N, g.B_x, 1.0);
    const auto [lo, hi] = covariance_spectrum(in);
    if (lo <= 0) continue;
    Vector w_hat;
    try {
      w_hat = logistic_regression(in);
    } catch (const std::exception&) {
      continue;
    }
    if (!w_hat.allFinite() || w_hat.norm() > g.B_w / 4) continue;
    alpha_loc = lo * sigmoid_prime(2 * g.B_x * w_hat.norm());
    beta_loc = hi / 4;
    if (doc && (alpha_loc < g.alpha || beta_loc > g.beta)) continue;
    inst = in;
  }
  if (!inst) {
    ++ck.res.skipped;
    return;
  }
  if (!doc) {
    g.alpha = 0.95 * alpha_loc;
    g.beta = 1.05 * beta_loc;
    g.link = sigmoid_rep(g.B_x * g.B_w, eps_g);
    params = build_glm(g).params;
  }
  const double eta = 1 / g.beta;
  const int T = static_cast<int>(params.layers.size()) - 1;
  const auto ref = gd_trajectory(*inst, eta, T, 0.0, logistic_loss_grad());
  // the certified radius must cover every <w, x> met along the way
  double reach = 0;
  for (const auto& w : ref) reach = std::max(reach, w.norm() * g.B_x);
  if (reach > g.B_x * g.B_w) {
    ++ck.res.skipped;
    return;
  }
  const auto trace = run_trace(params, encode_icl(*inst, params.D));
  double worst = 0;
  for (int l = 1; l <= T; ++l)
    worst = std::max(worst, (read_w(trace[static_cast<size_t>(l)], g.N, g.d) - ref[static_cast<size_t>(l)]).norm() /
                                (l * eta * g.B_x * eps_g));
  ck.le("traj_dev_over_bound", worst, 1.0);
  const double y_ref = sigmoid(ref.back().dot(inst->x_query));
  ck.le("pred_err", std::abs(read_y(trace.back(), g.d) - y_ref), eps_g + L_g * g.B_x * T * eta * g.B_x * eps_g);
}

// ---- nn ----

struct NnBounds {
  double step, L_f;
};

NnBounds nn_bounds(const NnConfig& n, double act_bound) {
  const double K = n.K, B_u = n.B_u(), B_x = n.B_x, B_y = n.B_y;
  const double eps_r = n.act.eps, eps_p = n.act_grad.eps, eps_l = n.loss_grad.eps;
  const double L_r = 1, L_r2 = 4 / (3 * std::sqrt(3.0)), L_l = 1;  // tanh', tanh'' and ∂_s of the loss derivative
  const double B_r = act_bound;
  const double B_g = K * B_u * (B_r + eps_r) + B_y;
  const double e_g = eps_l + K * B_u * L_l * eps_r;
  NnBounds b;
  b.step = std::sqrt(K) * (B_x * (eps_p + B_u * L_r * e_g) + eps_r * (B_g + e_g) + B_r * e_g);
  b.L_f = K * (B_u * B_u * L_r * L_r * B_x * B_x + B_r * B_r) + (K * B_u * B_r + B_y) * (B_u * L_r2 * B_x * B_x + L_r * B_x);
  return b;
}

void trial_nn(Checker& ck, SplitMix64& rng, const WeightDoc* doc) {
  NnConfig n;
  TransformerParams params;
  if (doc) {
    const Config c = config_of(*doc);
    const auto& v = doc->report.values;
    n.d = c.integer("d");
    n.N = c.integer("N");
    n.K = static_cast<int>(v.at("K"));
    n.eta = v.at("eta");
    n.steps = static_cast<int>(v.at("steps"));
    n.box_radius = v.at("R_w");
    n.B_x = c.num("B_x", 1.0);
    n.B_y = c.num("B_y", 1.0);
    n.act.eps = v.at("act_eps");
    n.act_grad.eps = v.at("act_grad_eps");
    n.loss_grad.eps = v.at("loss_eps");
    n.act_bound = v.at("act_bound");
    params = doc->params;
  } else {
    n = tanh_nn_config(uniform_int(rng, 1, 4), uniform_int(rng, 8, 24), static_cast<int>(uniform_int(rng, 1, 2)),
                       uniform(rng, 0.1, 0.3), 10, 0.5, 1.0, 1.0, 1e-3, 3e-2);
    params = build_nn_gd(n).params;
  }
  const Index d = n.d, N = n.N, nw = n.K * (d + 1);
  const Layout L = nn_layout(n);
  const Index wslot = L.index("w");
  // teacher network in the box, labels clipped to B_y
  const Activation act = Activation::tanh();
  Vector teacher(nw);
  for (Index j = 0; j < nw; ++j) teacher(j) = uniform(rng, -n.box_radius, n.box_radius);
  IclInstance in;
  in.xs.resize(N, d);
  in.ys.resize(N);
  for (Index i = 0; i < N; ++i) {
    const Vector x = sphere(rng, d, n.B_x);
    in.xs.row(i) = x;
    in.ys(i) = std::clamp(nn_predict(x, teacher, n.K, act) + 0.1 * rng.normal(), -n.B_y, n.B_y);
  }
  in.x_query = sphere(rng, d, n.B_x);
  Vector w0(nw);
  for (Index j = 0; j < nw; ++j) w0(j) = uniform(rng, -n.box_radius, n.box_radius);

  const NnBounds b = nn_bounds(n, n.act_bound);
  Tokens H = encode_icl(in, params.D);
  for (Index i = 0; i < H.cols(); ++i) H.col(i).segment(wslot, nw) = w0;
  const auto ref = nn_gd_trajectory(in, n.K, act, n.eta, n.steps, n.box_radius, w0);
  double worst_step = 0, worst_traj = 0;
  for (int l = 0; l < n.steps; ++l) {
    const Vector w_hat = H.col(N).segment(wslot, nw);
    const Tokens HA = layer_forward(params, 2 * l, H);
    const auto& B = params.layers[static_cast<size_t>(2 * l + 1)];
    const Tokens HB_attn = attn_forward(B.heads, HA, 2 * l + 1);
    const Vector g_hat = (w_hat - HB_attn.col(N).segment(wslot, nw)) / n.eta;
    worst_step = std::max(worst_step, (g_hat - nn_grad(in, w_hat, n.K, act)).norm() / b.step);
    H = mlp_forward(B.mlp, HB_attn, 2 * l + 1);
    const double dev = (H.col(N).segment(wslot, nw) - ref[static_cast<size_t>(l + 1)]).norm();
    const double bound = std::pow(1 + n.eta * b.L_f, l + 1) * b.step / b.L_f;
    worst_traj = std::max(worst_traj, dev / bound);
  }
  ck.le("grad_err_over_bound", worst_step, 1.0);
  ck.le("traj_dev_over_bound", worst_traj, 1.0);
}

// ---- selection ----

void trial_selection(Checker& ck, SplitMix64& rng, const WeightDoc* doc) {
  RidgeSelectConfig r;
  TransformerParams params;
  Layout layout;
  if (doc) {
    const Config c = config_of(*doc);
    r.d = c.integer("d");
    r.N = c.integer("N");
    r.lambdas = c.nums("lambdas");
    r.alpha = c.num("alpha");
    r.beta = c.num("beta");
    r.B_w = c.num("B_w");
    r.B_x = c.num("B_x", 1.0);
    r.B_y = c.num("B_y", 1.0);
    r.gamma = c.num("gamma");
    r.eps = c.num("eps");
    params = doc->params;
    layout = doc->layout;
  } else {
    const Index K = uniform_int(rng, 2, 8);
    r.d = uniform_int(rng, 1, 4);
    r.N = 2 * uniform_int(rng, 2 * r.d + 4, 24);
    for (Index k = 0; k < K; ++k) r.lambdas.push_back(log_uniform(rng, 1e-3, 3.0));
    r.B_w = 4;
    r.B_x = 1;
    r.B_y = 1.5;
    r.gamma = log_uniform(rng, 1e-3, 0.05);
    r.eps = 1e-3;
  }
  const auto tags = half_split(r.N);
  CondSpec spec;
  spec.d = r.d;
  spec.N = r.N;
  spec.B_x = r.B_x;
  spec.B_y = r.B_y;
  spec.noise = uniform(rng, 0.05, 0.5);
  spec.split = tags;
  spec.alpha = doc ? r.alpha : 1e-3;
  if (doc) spec.beta = r.beta;
  std::optional<IclInstance> inst;
  for (int attempt = 0; attempt < 50 && !inst; ++attempt) {
    inst = conditioned_instance(spec, rng);
    if (!inst) continue;
    IclInstance tr = *inst;
    tr.split = tags;
    const auto sub = subset(tr, 1);
    for (double lam : r.lambdas)
      if (ridge_closed_form(sub, lam).norm() > r.B_w / 2) {
        inst.reset();
        break;
      }
  }
  if (!inst) {
    ++ck.res.skipped;
    return;
  }
  IclInstance tagged = *inst;
  tagged.split = tags;
  const IclInstance train = subset(tagged, 1);
  if (!doc) {
    const auto [lo, hi] = covariance_spectrum(train);
    r.alpha = 0.8 * lo;
    r.beta = 1.25 * hi;
    auto c = build_ridge_lambda_select(r);
    params = std::move(c.params);
    layout = std::move(c.layout);
  }
  const int K = static_cast<int>(r.lambdas.size());
  // exhaustive enumeration of the candidates' exact validation losses
  std::vector<double> loss(static_cast<size_t>(K));
  for (int k = 0; k < K; ++k) {
    const Vector w = ridge_closed_form(train, r.lambdas[static_cast<size_t>(k)]);
    loss[static_cast<size_t>(k)] = val_loss(tagged, [&](const Vector& x) { return w.dot(x); });
  }
  const double best = *std::min_element(loss.begin(), loss.end());

  const auto trace = run_trace(params, encode_icl(*inst, params.D, tags));
  const Tokens& pre = trace[trace.size() - 2];  // loss slots hold u_k here
  const Index q = r.N;
  std::vector<double> u(static_cast<size_t>(K)), f(static_cast<size_t>(K));
  for (int k = 0; k < K; ++k) {
    u[static_cast<size_t>(k)] = pre(layout.index("loss", k), q);
    f[static_cast<size_t>(k)] = pre(layout.index("pred", k), q);
  }
  const auto lambda = telescoping_weights(u);
  double sum = 0, mn = 0, combo = 0;
  for (int k = 0; k < K; ++k) {
    sum += lambda[static_cast<size_t>(k)];
    mn = std::min(mn, lambda[static_cast<size_t>(k)]);
    combo += lambda[static_cast<size_t>(k)] * f[static_cast<size_t>(k)];
  }
  ck.le("simplex_sum_err", std::abs(sum - 1), 1e-9);
  ck.le("simplex_neg", -mn, 1e-9);
  ck.le("output_vs_combination", std::abs(read_y(trace.back(), r.d) - combo), 1e-9);
  const double slack = r.gamma + 2 * (r.B_x * r.B_w + r.B_y) * r.B_x * r.eps;
  double worst = -1e300;
  for (int k = 0; k < K; ++k)
    if (lambda[static_cast<size_t>(k)] > 1e-9) worst = std::max(worst, loss[static_cast<size_t>(k)] - best);
  ck.le("support_loss_excess", worst, slack);
}

// ---- exactness of tests, eval layer and format conversion ----

std::vector<int> random_tags(SplitMix64& rng, Index N) {
  std::vector<int> t(static_cast<size_t>(N));
  for (auto& v : t) v = rng.uniform() < 0.5 ? 1 : -1;
  t[0] = 1;
  if (N > 1) t[static_cast<size_t>(N - 1)] = -1;
  return t;
}

void check_eval_layer(Checker& ck, SplitMix64& rng) {
  SelectionConfig s;
  s.d = uniform_int(rng, 1, 4);
  s.N = uniform_int(rng, 2, 20);
  s.K = static_cast<int>(uniform_int(rng, 1, 5));
  s.R = 3;
  s.split = random_tags(rng, s.N);
  TransformerParams p;
  p.D = s.token_dim();
  p.layers.push_back(build_eval_layer(s));
  IclInstance in;
  in.xs = Matrix::NullaryExpr(s.N, s.d, [&] { return rng.normal(); });
  in.ys = Vector::NullaryExpr(s.N, [&] { return uniform(rng, -s.R, s.R); });
  in.x_query = Vector::NullaryExpr(s.d, [&] { return rng.normal(); });
  Tokens H = encode_icl(in, p.D, s.split);
  const auto sl = s.slots();
  for (int k = 0; k < s.K; ++k)
    for (Index j = 0; j < H.cols(); ++j) H(sl.pred(k), j) = uniform(rng, -s.R, s.R);
  const Tokens out = tf_forward(p, H);
  double worst = 0;
  for (int k = 0; k < s.K; ++k) {
    double ref = 0, nv = 0;
    for (Index j = 0; j < s.N; ++j)
      if (s.split[static_cast<size_t>(j)] == -1) {
        const double e = H(sl.pred(k), j) - in.ys(j);
        ref += 0.5 * e * e;
        nv += 1;
      }
    ref /= nv;
    for (Index j = 0; j < H.cols(); ++j) worst = std::max(worst, std::abs(out(sl.loss(k), j) - ref));
  }
  ck.le("eval_layer_err", worst, 1e-10);
}

IclInstance label_mix_instance(SplitMix64& rng, Index d, Index N, double band) {
  IclInstance in;
  in.xs.resize(N, d);
  in.ys.resize(N);
  for (Index i = 0; i < N; ++i) {
    in.xs.row(i) = sphere(rng, d, uniform(rng, 0.2, 1.0)).transpose();
    const double u = rng.uniform();
    // exact binary labels, labels inside the bands, and anything else
    in.ys(i) = u < 0.4 ? std::round(rng.uniform()) : u < 0.7 ? std::round(rng.uniform()) + uniform(rng, -band, band)
                                                              : uniform(rng, -1.0, 2.0);
  }
  in.x_query = sphere(rng, d, 1.0);
  return in;
}

void check_binary(Checker& ck, SplitMix64& rng) {
  const Index d = uniform_int(rng, 1, 4), N = uniform_int(rng, 1, 24);
  const double band = uniform(rng, 0.05, 0.3);
  const IclInstance in = rng.uniform() < 0.3 ? [&] {
    IclInstance b = label_mix_instance(rng, d, N, band);
    for (Index i = 0; i < N; ++i) b.ys(i) = std::round(rng.uniform());
    return b;
  }() : label_mix_instance(rng, d, N, band);
  const auto c = build_binary_test(d, N, band);
  const Tokens out = tf_forward(c.params, encode_icl(in, c.params.D));
  const auto ref = scalar_tests(in, band, 1.0, 1.0);
  double worst = 0;
  for (Index j = 0; j < out.cols(); ++j)
    worst = std::max({worst, std::abs(out(c.layout.index("psi"), j) - ref.binary),
                      std::abs(out(c.layout.index("psi_thres"), j) - ref.binary_thres)});
  ck.le("binary_test_err", worst, 1e-10);
}

void check_correlation(Checker& ck, SplitMix64& rng) {
  const Index d = uniform_int(rng, 1, 4), N = uniform_int(rng, 1, 24);
  const double lmin = uniform(rng, 0.1, 1.0), bw = uniform(rng, 0.2, 2.0);
  IclInstance in;
  in.xs = Matrix::NullaryExpr(N, d, [&] { return uniform(rng, -1, 1); });
  const Vector w = sphere(rng, d, uniform(rng, 0, 2 * bw));
  in.ys = in.xs * w + 0.1 * Vector::NullaryExpr(N, [&] { return rng.normal(); });
  in.x_query = sphere(rng, d, 1.0);
  const auto c = build_correlation_test(d, N, lmin, bw);
  const Tokens out = tf_forward(c.params, encode_icl(in, c.params.D));
  const auto ref = scalar_tests(in, 0.1, lmin, bw);
  double worst = 0;
  for (Index j = 0; j < out.cols(); ++j)
    worst = std::max({worst, std::abs(out(c.layout.index("psi_lin"), j) - ref.linear),
                      std::abs(out(c.layout.index("corr_sq"), j) - ref.corr_sq)});
  ck.le("correlation_test_err", worst, 1e-10);
}

Tokens decoder_target(const IclInstance& in, Index D) {
  Tokens T = encode_decoder(in, D);
  const Index d = in.d();
  for (Index c = 1; c < T.cols(); c += 2) T.col(c).head(d) = in.xs.row((c + 1) / 2 - 1).transpose();
  return T;
}

void check_decoder(Checker& ck, SplitMix64& rng, const TransformerParams* given, Index d_given) {
  const Index d = given ? d_given : uniform_int(rng, 1, 4);
  const Index N = uniform_int(rng, 1, 8);
  const Index D = given ? given->D : d + 6 + uniform_int(rng, 0, 2);
  IclInstance in;
  in.xs = Matrix::NullaryExpr(N, d, [&] { return rng.normal(); });
  in.ys = Vector::NullaryExpr(N, [&] { return rng.normal(); });
  in.x_query = Vector::NullaryExpr(d, [&] { return rng.normal(); });
  const TransformerParams p = given ? *given : decoder_format_convert(d, D);
  const Tokens out = tf_forward(p, encode_decoder(in, D));
  ck.le("decoder_convert_err", (out - decoder_target(in, D)).cwiseAbs().maxCoeff(), 1e-12);
}

void trial_tests(Checker& ck, SplitMix64& rng, const WeightDoc* doc) {
  if (!doc) {
    check_eval_layer(ck, rng);
    check_binary(ck, rng);
    check_correlation(ck, rng);
    check_decoder(ck, rng, nullptr, 0);
    return;
  }
  const Config c = config_of(*doc);
  const std::string kind = doc->report.kind;
  const Index d = c.integer("d");
  if (kind == "decoder_convert") {
    check_decoder(ck, rng, &doc->params, d);
    return;
  }
  const Index N = c.integer("N");
  const auto& L = doc->layout;
  const double band = c.num("band", 0.1), lmin = c.num("lambda_min", 1.0), bw = c.num("bw_star", 1.0);
  const double B_x = c.num("B_x", 1.0);
  IclInstance in = label_mix_instance(rng, d, N, band);
  in.xs *= B_x;
  in.x_query *= B_x;
  if (kind == "confident_linreg" || kind == "correlation_test") {
    const Vector w = sphere(rng, d, uniform(rng, 0, 2 * bw));
    in.ys = in.xs * w / (B_x * B_x);
  }
  const Tokens out = tf_forward(doc->params, encode_icl(in, doc->params.D));
  const auto ref = scalar_tests(in, band, lmin, bw);
  double worst = 0;
  auto track = [&](const std::string& slot, double expected) {
    if (L.has(slot)) worst = std::max(worst, std::abs(out(L.index(slot), N) - expected));
  };
  track("psi_thres", ref.binary_thres);
  if (kind == "binary_test") track("psi", ref.binary);
  if (kind == "correlation_test" || kind == "confident_linreg") {
    track("psi_lin", ref.linear);
    track("corr_sq", ref.corr_sq);
  }
  if (kind == "adaptive_reg_cls") {
    const double th = out(L.index("psi_thres"), N);
    track("y", th * out(L.index("y_log"), N) + (1 - th) * out(L.index("y_ls"), N));
  }
  if (kind == "confident_linreg") track("y", ref.linear * out(L.index("y_ls"), N));
  ck.le(kind + "_err", worst, 1e-10);
}

// ---- adaptive regression / classification ----

struct AdaptiveSetup {
  AdaptiveConfig cfg;
  TransformerParams params;
  Layout layout;
};

AdaptiveSetup adaptive_default() {
  AdaptiveSetup s;
  auto& a = s.cfg;
  a.d = 3;
  a.N = 60;
  a.band = 0.1;
  a.alpha = 0.12;
  a.beta = 0.7;
  a.B_w = 4;
  a.B_x = 1;
  a.B_y = 1;
  a.eps = 0.01;
  auto& g = a.logistic;
  g.d = a.d;
  g.N = a.N;
  g.L_g = 0.25;
  g.alpha = 0.0126;
  g.beta = 0.175;
  g.B_w = 4;
  g.B_x = 1;
  g.eps = 0.02;
  g.link = sigmoid_rep(g.B_x * g.B_w, glm_link_tolerance(g));
  auto c = build_adaptive_reg_cls(a);
  s.params = std::move(c.params);
  s.layout = std::move(c.layout);
  return s;
}

void trial_adaptive(Checker& ck, SplitMix64& rng, const AdaptiveSetup& s, int& thres_nonzero) {
  const auto& a = s.cfg;
  const auto& g = a.logistic;
  const Index d = a.d, N = a.N;
  // binary labels: compare with logistic regression
  {
    std::optional<IclInstance> inst;
    Vector w_hat;
    for (int attempt = 0; attempt < 100 && !inst; ++attempt) {
      IclInstance in = logistic_instance(rng, d, N, a.B_x, 0.7);
      const auto [lo, hi] = covariance_spectrum(in);
      try {
        w_hat = logistic_regression(in);
      } catch (const std::exception&) {
        continue;
      }
      if (!w_hat.allFinite() || w_hat.norm() > std::min(1.0, g.B_w / 2)) continue;
      if (lo * sigmoid_prime(2 * a.B_x * w_hat.norm()) < g.alpha || hi / 4 > g.beta) continue;
      inst = in;
    }
    if (!inst) {
      ++ck.res.skipped;
    } else {
      const Tokens out = tf_forward(s.params, encode_icl(*inst, s.params.D));
      ck.le("binary_vs_logistic", std::abs(read_y(out, d) - sigmoid(w_hat.dot(inst->x_query))), g.eps);
    }
  }
  // continuous labels away from {0, 1}: compare with least squares
  {
    std::optional<IclInstance> inst;
    Vector w_ls;
    for (int attempt = 0; attempt < 100 && !inst; ++attempt) {
      IclInstance in;
      const Vector w = sphere(rng, d, 1.0);
      in.xs.resize(N, d);
      in.ys.resize(N);
      for (Index i = 0; i < N; ++i) {
        const Vector x = sphere(rng, d, a.B_x);
        in.xs.row(i) = x;
        in.ys(i) = std::clamp(0.5 + 0.3 * w.dot(x) + 0.05 * rng.normal(), 2 * a.band, 1 - 2 * a.band);
      }
      in.x_query = sphere(rng, d, a.B_x);
      const auto [lo, hi] = covariance_spectrum(in);
      if (lo < a.alpha || hi > a.beta) continue;
      w_ls = least_squares(in);
      if (w_ls.norm() > a.B_w / 2) continue;
      inst = in;
    }
    if (!inst) {
      ++ck.res.skipped;
      return;
    }
    const Tokens out = tf_forward(s.params, encode_icl(*inst, s.params.D));
    thres_nonzero += out(s.layout.index("psi_thres"), N) != 0;
    ck.le("continuous_vs_least_squares", std::abs(read_y(out, d) - w_ls.dot(inst->x_query)), a.eps);
  }
}

// ---- norm budget ----


const std::vector<std::string>& budget_configs() {
  static const std::vector<std::string> cfgs = {
      "kind=icgd\nd=3\nN=16\neta=0.5\nsteps=10\n",
      "kind=icgd\nd=3\nN=16\neta=0.5\nsteps=10\nlambda=0.1\n",
      "kind=ridge\nd=2\nN=16\nlambda=0.1\neps=1e-3\nalpha=0.25\nbeta=4\nB_w=4\n",
      "kind=icpgd\nd=3\nN=16\neta=0.5\nsteps=10\nreg=l1\nreg_param=0.05\n",
      "kind=icpgd\nd=3\nN=16\neta=0.5\nsteps=10\nreg=l2\nreg_param=0.05\n",
      "kind=icpgd\nd=3\nN=16\neta=0.5\nsteps=10\nreg=box\nreg_param=0.5\nB_w=1\n",
      "kind=lasso\nd=3\nN=16\nlambda=0.05\nbeta=1\nB_w=2\neps=0.05\n",
      "kind=glm\nd=3\nN=32\nalpha=0.05\nbeta=0.5\nB_w=4\neps=0.05\nlink_eps=1e-3\n",
      "kind=nn_gd\nd=2\nN=16\nK=2\neta=0.2\nsteps=3\nR_w=0.5\n",
      "kind=ridge_select\nd=3\nN=20\nlambdas=0.01,0.1,1\nalpha=0.05\nbeta=1\nB_w=4\ngamma=0.01\neps=1e-2\n",
      "kind=binary_test\nd=3\nN=16\nband=0.1\n",
      "kind=correlation_test\nd=3\nN=16\nlambda_min=0.2\nbw_star=1\n",
      "kind=adaptive_reg_cls\nd=3\nN=32\nband=0.1\nalpha=0.1\nbeta=1\nB_w=4\neps=0.01\n"
      "log_alpha=0.05\nlog_beta=0.5\nlog_B_w=4\nlog_eps=0.05\nlog_link_eps=1e-3\n",
      "kind=confident_linreg\nd=3\nN=16\nlambda_min=0.2\nbw_star=1\nalpha=0.1\nbeta=1\nB_w=4\neps=0.01\n",
      "kind=decoder_convert\nd=3\n",
  };
  return cfgs;
}

Index heads_of(const TransformerParams& p, size_t l) { return static_cast<Index>(p.layers[l].heads.size()); }
Index hidden_of(const TransformerParams& p, size_t l) { return p.layers[l].mlp.hidden(); }

// Structure and norm of one construction against the closed-form expectations.
void check_budget(Checker& ck, const WeightDoc& doc) {
  const Config c = config_of(doc);
  const auto& p = doc.params;
  const std::string kind = doc.report.kind;
  const double L = static_cast<double>(p.layers.size());
  const double norm = op_norm(p);
  const auto& v = doc.report.values;
  const Index d = c.integer("d");
  const double B_x = c.num("B_x", 1.0), B_y = c.num("B_y", 1.0);
  auto R_of = [&](double B_w) { return std::max({B_x * B_w, B_y, 1.0}); };
  auto all_heads = [&](Index h, size_t from, size_t to) {
    Index bad = 0;
    for (size_t l = from; l < to; ++l) bad += heads_of(p, l) != h;
    return static_cast<double>(bad);
  };
  ck.le(kind + ":op_norm_vs_report", std::abs(norm - doc.report.op_norm), 1e-9 * std::max(1.0, norm));
  if (kind == "icgd" || kind == "ridge" || kind == "icpgd" || kind == "lasso") {
    const double eta = v.at("eta");
    const int steps = static_cast<int>(v.at("steps"));
    const double B_w = c.num("B_w", 1.0);
    const double R = R_of(B_w);
    const double C = exact_square_loss_grad().C();
    const bool l2 = c.num("lambda", 0.0) > 0 && (kind == "icgd" || kind == "ridge");
    ck.eq(kind + ":layers", L, steps + 1.0);
    ck.eq(kind + ":step_heads", all_heads(l2 ? 3 : 2, 0, static_cast<size_t>(steps)), 0);
    ck.eq(kind + ":readout_heads", static_cast<double>(heads_of(p, static_cast<size_t>(steps))), 2);
    if (kind == "icgd") {
      const double lam = c.num("lambda", 0.0);
      ck.le(kind + ":op_norm", norm, 2 + R + 2 * eta * C + eta * lam);
    }
    if (kind == "ridge") {
      const double lam = c.num("lambda"), alpha = c.num("alpha"), beta = c.num("beta"), eps = c.num("eps");
      const double kappa = (beta + lam) / (alpha + lam);
      ck.eq(kind + ":layers_formula", L, std::ceil(2 * kappa * std::log(B_x * B_w / (2 * eps))) + 1);
      ck.le(kind + ":op_norm", norm, 4 * R + 8 / (beta + lam));
      ck.le(kind + ":heads_per_layer", static_cast<double>(heads_of(p, 0)), 3);
    }
    if (kind == "icpgd" || kind == "lasso") {
      const auto reg = kind == "lasso" ? std::string("l1") : c.str("reg", "none");
      const double lam = kind == "lasso" ? c.num("lambda") : c.num("reg_param", 0.0);
      const double Cp = reg == "l1" ? 4 + 2 * eta * lam : reg == "l2" ? 2 + 2 * eta * lam : reg == "box" ? 2 + 2 * lam : 0;
      const Index units = reg == "l1" ? 4 * d : reg == "none" ? 0 : 2 * d;
      Index bad = 0;
      for (int l = 0; l < steps; ++l) bad += hidden_of(p, static_cast<size_t>(l)) != units;
      ck.eq(kind + ":prox_hidden", static_cast<double>(bad), 0);
      if (kind == "icpgd") ck.le(kind + ":op_norm", norm, 3 + R + 2 * eta * C + Cp);
      else {
        const double beta = c.num("beta"), eps = c.num("eps");
        ck.eq(kind + ":layers_formula", L, std::ceil(beta * B_w * B_w / eps) + 1);
        ck.le(kind + ":op_norm", norm, 10 * R + (8 + 2 * lam) / beta);
      }
    }
  } else if (kind == "glm") {
    const double alpha = c.num("alpha"), beta = c.num("beta"), B_w = c.num("B_w"), eps = c.num("eps");
    const int T = static_cast<int>(std::ceil(2 * beta / alpha * std::log(0.25 * B_w * B_x / eps)));
    ck.eq(kind + ":layers_formula", L, T + 1.0);
    ck.eq(kind + ":step_heads", all_heads(heads_of(p, 0), 0, static_cast<size_t>(T)), 0);
    // C = Σ|c_m| of the loss-derivative rep (link terms plus the exact −t pair)
    ck.le(kind + ":op_norm", norm, std::max(2 + R_of(B_w) + 2 * v.at("C") / beta, 1 + v.at("C_g")));
  } else if (kind == "nn_gd") {
    const int K = static_cast<int>(v.at("K")), steps = static_cast<int>(v.at("steps"));
    const Index Mr = static_cast<Index>(v.at("M_act")), Mp = static_cast<Index>(v.at("M_act_grad"));
    const Index Ml = static_cast<Index>(v.at("M_loss"));
    ck.eq(kind + ":layers_formula", L, 2.0 * steps);
    double bad = 0;
    for (int l = 0; l < steps; ++l) {
      const auto a = static_cast<size_t>(2 * l), b = a + 1;
      bad += heads_of(p, a) != K * Mr;
      bad += heads_of(p, b) != K * (Mp + Mr);
      bad += hidden_of(p, a) != Ml;
      bad += hidden_of(p, b) != 2 * K * (d + 1) + 4;
    }
    ck.eq(kind + ":structure", bad, 0);
    ck.le(kind + ":op_norm", norm, doc.report.norm_bound);
  } else if (kind == "ridge_select") {
    const auto lams = c.nums("lambdas");
    double kappa = 0;
    for (double l : lams) kappa = std::max(kappa, (c.num("beta") + l) / (c.num("alpha") + l));
    const double T = std::ceil(2 * kappa * std::log(B_x * c.num("B_w") / (2 * c.num("eps"))));
    ck.eq(kind + ":layers_formula", L, T + 4);
    const auto K = static_cast<Index>(lams.size());
    ck.eq(kind + ":mlp1_hidden", static_cast<double>(hidden_of(p, static_cast<size_t>(T) + 1)), K * K + K);
    ck.eq(kind + ":mlp2_hidden", static_cast<double>(hidden_of(p, static_cast<size_t>(T) + 2)), 3 * K);
    ck.eq(kind + ":combine_heads", static_cast<double>(heads_of(p, static_cast<size_t>(T) + 3)), 2 * (K + 1));
    ck.le(kind + ":op_norm", norm, doc.report.norm_bound);
  } else if (kind == "binary_test") {
    ck.eq(kind + ":layers", L, 2);
    ck.eq(kind + ":heads", static_cast<double>(heads_of(p, 0) * 10 + heads_of(p, 1)), 62);
    const double C_psi = exact_binary_psi(c.num("band")).C();
    ck.le(kind + ":op_norm", norm, std::max(1 + 2 * C_psi, std::sqrt(8.0) + 2));
  } else if (kind == "correlation_test") {
    ck.eq(kind + ":layers", L, 3);
    const double lb = c.num("lambda_min") * c.num("bw_star") / 4;
    const double A = lb * lb, B = 9 * lb * lb;
    ck.le(kind + ":op_norm", norm, std::max(4.0, std::sqrt(1 + B * B) + 2 / (B - A)) * (1 + 1e-12));
  } else if (kind == "adaptive_reg_cls" || kind == "confident_linreg") {
    const double kappa = c.num("beta") / c.num("alpha");
    const double T_ls = std::max(1.0, std::ceil(2 * kappa * std::log(B_x * c.num("B_w") / (2 * c.num("eps")))));
    const double branches = kind == "confident_linreg" ? std::max(T_ls + 1, 3.0)
                                                       : std::max({T_ls + 1, v.at("steps_log") + 1, 2.0});
    ck.eq(kind + ":layers_formula", L, branches + 1);
    ck.eq(kind + ":combine_heads", static_cast<double>(heads_of(p, p.layers.size() - 1)), 2);
    ck.le(kind + ":op_norm", norm, doc.report.norm_bound);
  } else if (kind == "decoder_convert") {
    ck.eq(kind + ":layers", L, 2);
    for (size_t l = 0; l < 2; ++l) {
      ck.le(kind + ":heads", static_cast<double>(heads_of(p, l)), 3);
      ck.le(kind + ":hidden", static_cast<double>(hidden_of(p, l)), 2);
    }
    ck.le(kind + ":op_norm", norm, 12);
  }
}

using TrialFn = std::function<void(Checker&, SplitMix64&, const WeightDoc*)>;

const std::map<std::string, TrialFn>& trial_table() {
  static const std::map<std::string, TrialFn> t = {
      {"exact-grad", trial_exact_grad}, {"inexact-gd", trial_inexact}, {"ridge", trial_ridge},
      {"lasso", trial_lasso},           {"glm", trial_glm},            {"nn", trial_nn},
      {"selection", trial_selection},   {"tests", trial_tests},
  };
  return t;
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"exact-grad", "inexact-gd", "ridge", "lasso", "glm",
                                                 "nn",         "selection",  "tests", "adaptive", "norm-budget"};
  return names;
}

std::string SuiteResult::csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "suite,trial,metric,value,bound,margin,pass\n";
  for (const auto& r : rows)
    out << r.suite << ',' << r.trial << ',' << r.metric << ',' << r.value << ',' << r.bound << ','
        << r.bound - r.value << ',' << (r.pass ? 1 : 0) << '\n';
  return out.str();
}

IclInstance sphere_instance(const CondSpec& spec, SplitMix64& rng) {
  IclInstance in;
  Vector w = Vector::Zero(spec.d);
  if (spec.sparsity > 0) {
    std::vector<Index> idx(static_cast<size_t>(spec.d));
    for (Index j = 0; j < spec.d; ++j) idx[static_cast<size_t>(j)] = j;
    for (int j = 0; j < spec.sparsity && j < spec.d; ++j) {
      std::swap(idx[static_cast<size_t>(j)], idx[static_cast<size_t>(j) + rng.below(static_cast<std::uint64_t>(spec.d - j))]);
      w(idx[static_cast<size_t>(j)]) = rng.normal();
    }
    w *= spec.w_norm / w.norm();
  } else {
    w = sphere(rng, spec.d, spec.w_norm);
  }
  in.xs.resize(spec.N, spec.d);
  in.ys.resize(spec.N);
  for (Index i = 0; i < spec.N; ++i) {
    const Vector x = sphere(rng, spec.d, spec.B_x);
    in.xs.row(i) = x;
    in.ys(i) = std::clamp(w.dot(x) + spec.noise * rng.normal(), -spec.B_y, spec.B_y);
  }
  in.x_query = sphere(rng, spec.d, spec.B_x);
  in.y_query = w.dot(in.x_query);
  return in;
}

std::optional<IclInstance> conditioned_instance(const CondSpec& spec, SplitMix64& rng, int max_tries) {
  for (int t = 0; t < max_tries; ++t) {
    IclInstance in = sphere_instance(spec, rng);
    IclInstance probe = in;
    probe.split = spec.split;
    const auto [lo, hi] = covariance_spectrum(spec.split.empty() ? in : subset(probe, 1));
    if (lo >= spec.alpha && hi <= spec.beta) return in;
  }
  return std::nullopt;
}

SuiteResult verify(const std::string& suite, const WeightDoc* doc, const VerifyOptions& opts) {
  SuiteResult res;
  res.suite = suite;
  Checker ck{res, opts.fail_fast};
  SplitMix64 rng(mix64(opts.seed));
  try {
    if (suite == "norm-budget") {
      if (doc) {
        check_budget(ck, *doc);
        res.trials = 1;
      } else {
        for (const auto& text : budget_configs()) {
          ck.trial = res.trials++;
          check_budget(ck, construct(Config::parse(text, "budget")));
        }
      }
      return res;
    }
    if (suite == "adaptive") {
      if (doc) throw IoError("suite 'adaptive' runs on its own construction; omit the weight file");
      const AdaptiveSetup setup = adaptive_default();
      int nonzero = 0;
      for (int t = 0; t < opts.n_trials; ++t) {
        ck.trial = t;
        ++res.trials;
        trial_adaptive(ck, rng, setup, nonzero);
      }
      ck.trial = -1;
      ck.le("thres_nonzero_rate", static_cast<double>(nonzero) / std::max(1, opts.n_trials), 0.01 - 1e-12);
      return res;
    }
    const auto& table = trial_table();
    const auto it = table.find(suite);
    if (it == table.end()) {
      std::string valid;
      for (const auto& s : suite_names()) valid += (valid.empty() ? "" : ", ") + s;
      throw IoError("unknown suite '" + suite + "' (valid: " + valid + ")");
    }
    static const std::map<std::string, std::initializer_list<const char*>> kinds = {
        {"exact-grad", {"icgd", "ridge", "icpgd", "lasso"}},
        {"inexact-gd", {"icgd"}},
        {"ridge", {"ridge"}},
        {"lasso", {"lasso"}},
        {"glm", {"glm"}},
        {"nn", {"nn_gd"}},
        {"selection", {"ridge_select"}},
        {"tests", {"binary_test", "correlation_test", "adaptive_reg_cls", "confident_linreg", "decoder_convert"}},
    };
    require_kind(doc, kinds.at(suite), suite);
    for (int t = 0; t < opts.n_trials; ++t) {
      ck.trial = t;
      ++res.trials;
      it->second(ck, rng, doc);
    }
  } catch (const Stop&) {
  }
  return res;
}

}  // namespace icl
