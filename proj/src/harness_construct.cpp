#include "icl/harness.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

namespace icl {

namespace {

using FitKey = std::tuple<int, double, double, Index>;

SumOfRelus cached_fit(int which, const ScalarFn& f, int k, double R, double eps, Index M_max) {
  static std::mutex mu;
  static std::map<FitKey, SumOfRelus> cache;
  const FitKey key{which, R, eps, M_max};
  {
    std::lock_guard<std::mutex> lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  SumOfRelus rep = fit_smooth(f, k, R, eps, M_max);
  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(key, rep);
  return rep;
}

Index token_dim(const Config& c) { return static_cast<Index>(c.integer("D", 0)); }

Construction construct_icgd(const Config& c) {
  GdConfig g;
  g.d = c.integer("d");
  g.N = c.integer("N");
  g.eta = c.num("eta");
  g.steps = static_cast<int>(c.integer("steps"));
  g.lambda_l2 = c.num("lambda", 0.0);
  g.B_x = c.num("B_x", 1.0);
  g.B_w = c.num("B_w", 1.0);
  g.B_y = c.num("B_y", 1.0);
  g.D = token_dim(c);
  return build_icgd(g);
}

Regularizer regularizer_of(const Config& c) {
  const auto kind = c.str("reg", "none");
  const double p = c.num("reg_param", 0.0);
  if (kind == "none") return Regularizer::none();
  if (kind == "l1") return Regularizer::l1(p);
  if (kind == "l2") return Regularizer::l2(p);
  if (kind == "box") return Regularizer::box(p);
  throw IoError("unknown regularizer '" + kind + "' (valid: none, l1, l2, box)");
}

Construction construct_icpgd(const Config& c) {
  GdConfig g;
  g.d = c.integer("d");
  g.N = c.integer("N");
  g.eta = c.num("eta");
  g.steps = static_cast<int>(c.integer("steps"));
  g.B_x = c.num("B_x", 1.0);
  g.B_w = c.num("B_w", 1.0);
  g.B_y = c.num("B_y", 1.0);
  g.D = token_dim(c);
  return build_icpgd(g, regularizer_of(c));
}

GlmConfig glm_config(const Config& c, const std::string& p, Index d, Index N) {
  if (c.str(p + "link", "logistic") != "logistic") throw IoError("only the logistic link is available");
  GlmConfig g;
  g.d = d;
  g.N = N;
  g.L_g = 0.25;
  g.alpha = c.num(p + "alpha");
  g.beta = c.num(p + "beta");
  g.B_w = c.num(p + "B_w");
  g.B_x = c.num(p + "B_x", 1.0);
  g.B_y = c.num(p + "B_y", 1.0);
  g.eps = c.num(p + "eps");
  if (!(g.alpha > 0 && g.beta >= g.alpha && g.eps > 0 && g.B_w > 0 && g.B_x > 0))
    throw IoError("glm needs 0 < alpha <= beta and positive eps, B_w, B_x");
  const double tol = c.num(p + "link_eps", glm_link_tolerance(g));
  g.link = sigmoid_rep(g.B_x * g.B_w, tol, c.integer(p + "M_max", 4096));
  return g;
}

Construction construct_glm(const Config& c) {
  GlmConfig g = glm_config(c, "", c.integer("d"), c.integer("N"));
  g.D = token_dim(c);
  return build_glm(g);
}

Construction construct_nn(const Config& c) {
  if (c.str("act", "tanh") != "tanh") throw IoError("only the tanh activation is available");
  NnConfig n = tanh_nn_config(c.integer("d"), c.integer("N"), static_cast<int>(c.integer("K", 1)), c.num("eta"),
                              static_cast<int>(c.integer("steps")), c.num("R_w", 1.0), c.num("B_x", 1.0),
                              c.num("B_y", 1.0), c.num("act_eps", 1e-3), c.num("act_grad_eps", 3e-2),
                              c.integer("M_max", 2048));
  n.D = token_dim(c);
  Construction out = build_nn_gd(n);
  auto& v = out.report.values;
  v["K"] = n.K;
  v["R_w"] = n.box_radius;
  v["act_eps"] = n.act.eps;
  v["act_grad_eps"] = n.act_grad.eps;
  v["loss_eps"] = n.loss_grad.eps;
  v["act_bound"] = n.act_bound;
  v["M_act"] = static_cast<double>(n.act.M());
  v["M_act_grad"] = static_cast<double>(n.act_grad.M());
  v["M_loss"] = static_cast<double>(n.loss_grad.M());
  return out;
}

Construction construct_ridge_select(const Config& c) {
  RidgeSelectConfig r;
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
  return build_ridge_lambda_select(r);
}

Construction construct_adaptive(const Config& c) {
  AdaptiveConfig a;
  a.d = c.integer("d");
  a.N = c.integer("N");
  a.band = c.num("band");
  a.alpha = c.num("alpha");
  a.beta = c.num("beta");
  a.B_w = c.num("B_w");
  a.B_x = c.num("B_x", 1.0);
  a.B_y = c.num("B_y", 1.0);
  a.eps = c.num("eps");
  a.logistic = glm_config(c, "log_", a.d, a.N);
  return build_adaptive_reg_cls(a);
}

Construction construct_confident(const Config& c) {
  ConfidentConfig a;
  a.d = c.integer("d");
  a.N = c.integer("N");
  a.lambda_min = c.num("lambda_min");
  a.bw_star = c.num("bw_star");
  a.alpha = c.num("alpha");
  a.beta = c.num("beta");
  a.B_w = c.num("B_w");
  a.B_x = c.num("B_x", 1.0);
  a.B_y = c.num("B_y", 1.0);
  a.eps = c.num("eps");
  return build_confident_linreg(a);
}

Construction construct_decoder(const Config& c) {
  const Index d = c.integer("d");
  const Index D = c.integer("D", d + 6);
  Construction out;
  out.params = decoder_format_convert(d, D);
  out.layout.D = D;
  out.layout.d = d;
  out.layout.add("x", 0, d);
  out.layout.add("y", d);
  out.layout.add("pos", D - 3);
  out.layout.add("ones", D - 2);
  out.layout.add("parity", D - 1);
  finalize(out, "decoder_convert", 12, "12");
  return out;
}

}  // namespace

SumOfRelus sigmoid_rep(double R, double eps, Index M_max) {
  return cached_fit(0, [](const Vector& z) { return sigmoid(z(0)); }, 1, R, eps, M_max);
}

SumOfRelus tanh_rep(double R, double eps, Index M_max) {
  return cached_fit(1, [](const Vector& z) { return std::tanh(z(0)); }, 1, R, eps, M_max);
}

SumOfRelus tanh_grad_rep(double R, double eps, Index M_max) {
  return cached_fit(
      2,
      [](const Vector& z) {
        const double c = std::tanh(z(1));
        return z(0) * (1 - c * c);
      },
      2, R, eps, M_max);
}

NnConfig tanh_nn_config(Index d, Index N, int K, double eta, int steps, double R_w, double B_x, double B_y,
                        double act_eps, double act_grad_eps, Index M_max) {
  NnConfig n;
  n.d = d;
  n.N = N;
  n.K = K;
  n.eta = eta;
  n.steps = steps;
  n.box_radius = R_w;
  n.B_x = B_x;
  n.B_y = B_y;
  n.act = tanh_rep(n.radius_act(), act_eps, M_max);
  n.act_bound = std::tanh(n.radius_act());
  n.act_grad = tanh_grad_rep(n.radius_act_grad(), act_grad_eps, M_max);
  return n;
}

const std::vector<std::string>& construction_kinds() {
  static const std::vector<std::string> kinds = {
      "icgd",      "ridge",       "icpgd",            "lasso",            "glm",              "nn_gd",
      "ridge_select", "binary_test", "correlation_test", "adaptive_reg_cls", "confident_linreg", "decoder_convert"};
  return kinds;
}

WeightDoc construct(const Config& c) {
  const std::string kind = c.str("kind");
  Construction out;
  try {
    if (kind == "icgd") out = construct_icgd(c);
    else if (kind == "ridge")
      out = build_ridge(c.integer("d"), c.integer("N"), c.num("lambda"), c.num("alpha"), c.num("beta"), c.num("B_w"),
                        c.num("eps"), c.num("B_x", 1.0), c.num("B_y", 1.0));
    else if (kind == "icpgd") out = construct_icpgd(c);
    else if (kind == "lasso")
      out = build_lasso(c.integer("d"), c.integer("N"), c.num("lambda"), c.num("beta"), c.num("B_w"), c.num("eps"),
                        c.num("B_x", 1.0), c.num("B_y", 1.0));
    else if (kind == "glm") out = construct_glm(c);
    else if (kind == "nn_gd") out = construct_nn(c);
    else if (kind == "ridge_select") out = construct_ridge_select(c);
    else if (kind == "binary_test")
      out = build_binary_test(c.integer("d"), c.integer("N"), c.num("band"), c.flag("thresholded", true), token_dim(c));
    else if (kind == "correlation_test")
      out = build_correlation_test(c.integer("d"), c.integer("N"), c.num("lambda_min"), c.num("bw_star"), token_dim(c));
    else if (kind == "adaptive_reg_cls") out = construct_adaptive(c);
    else if (kind == "confident_linreg") out = construct_confident(c);
    else if (kind == "decoder_convert") out = construct_decoder(c);
    else {
      std::string valid;
      for (const auto& k : construction_kinds()) valid += (valid.empty() ? "" : ", ") + k;
      throw IoError("unknown kind '" + kind + "' (valid: " + valid + ")");
    }
  } catch (const std::invalid_argument& e) {
    throw IoError(kind + ": " + e.what());
  } catch (const FitError& e) {
    throw IoError(kind + ": " + e.what());
  }
  c.check_all_used();
  WeightDoc doc;
  doc.params = std::move(out.params);
  doc.layout = std::move(out.layout);
  doc.report = std::move(out.report);
  doc.config = c.entries();
  return doc;
}

}  // namespace icl
