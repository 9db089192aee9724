#include "icl/selection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace icl {

namespace {

AttnHead empty_head(Index D) { return {Matrix::Zero(D, D), Matrix::Zero(D, D), Matrix::Zero(D, D)}; }

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Compact token [x (d); y; ones; t; w (d); out] used for branches that are
// joined in parallel.
GdSlots compact_slots(Index d) {
  GdSlots s;
  s.D = 2 * d + 4;
  s.d = d;
  s.x = 0;
  s.y = d;
  s.ones = d + 1;
  s.t = d + 2;
  s.w = d + 3;
  s.out = 2 * d + 3;
  return s;
}

TransformerParams gd_branch(const GdSlots& s, const SumOfRelus& loss, double eta, double lambda, int steps,
                            double mask_R, double scale, const Layer& readout) {
  TransformerParams p;
  p.D = s.D;
  const Layer step = gd_step_attention(s, loss, eta, lambda, mask_R, scale);
  for (int l = 0; l < steps; ++l) p.layers.push_back(step);
  p.layers.push_back(readout);
  return p;
}

// Ψ^binary: one head per term of ψ, V picks t_j so that only training tokens count.
Layer binary_layer(Index D, Index y, Index ones, Index t, Index psi, double band, Index N) {
  const SumOfRelus rep = exact_binary_psi(band);
  const double scale = static_cast<double>(N + 1) / static_cast<double>(N);
  Layer layer;
  for (const auto& term : rep.terms) {
    AttnHead h = empty_head(D);
    h.Q(0, ones) = term.a(0);
    h.Q(1, ones) = term.a(1);
    h.K(0, y) = 1.0;
    h.K(1, ones) = 1.0;
    h.V(psi, t) = scale * term.c;
    layer.heads.push_back(std::move(h));
  }
  return layer;
}

// σ(2Ψ − 1) − σ(2Ψ − 2)
Layer threshold_layer(Index D, Index psi, Index thres, Index ones) {
  Layer layer;
  for (int m = 0; m < 2; ++m) {
    AttnHead h = empty_head(D);
    h.Q(0, psi) = 2.0;
    h.Q(0, ones) = m == 0 ? -1.0 : -2.0;
    h.K(0, ones) = 1.0;
    h.V(thres, ones) = m == 0 ? 1.0 : -1.0;
    layer.heads.push_back(std::move(h));
  }
  return layer;
}

double binary_bound(double band) {
  return std::max(1 + 2 * exact_binary_psi(band).C(), std::sqrt(8.0) + 2);
}

struct CorrSlots {
  Index D, d, x, y, ones, corr, sq, lin;
};

std::vector<Layer> correlation_layers(const CorrSlots& s, Index N, double A, double B) {
  const double scale = static_cast<double>(N + 1) / static_cast<double>(N);
  Layer l1, l2, l3;
  for (double sign : {1.0, -1.0}) {
    AttnHead h = empty_head(s.D);
    h.Q(0, s.ones) = scale;
    h.K(0, s.y) = sign;
    for (Index r = 0; r < s.d; ++r) h.V(s.corr + r, s.x + r) = sign;
    l1.heads.push_back(std::move(h));
  }
  {
    AttnHead h = empty_head(s.D);
    for (Index r = 0; r < s.d; ++r) {
      h.Q(r, s.corr + r) = 1.0;
      h.K(r, s.corr + r) = 1.0;
    }
    h.V(s.sq, s.ones) = 1.0;
    l2.heads.push_back(std::move(h));
  }
  for (int m = 0; m < 2; ++m) {
    AttnHead h = empty_head(s.D);
    h.Q(0, s.sq) = 1.0;
    h.Q(0, s.ones) = m == 0 ? -A : -B;
    h.K(0, s.ones) = 1.0;
    h.V(s.lin, s.ones) = (m == 0 ? 1.0 : -1.0) / (B - A);
    l3.heads.push_back(std::move(h));
  }
  return {l1, l2, l3};
}

std::pair<double, double> correlation_thresholds(double lambda_min, double bw_star) {
  const double A = std::pow(lambda_min * bw_star / 4, 2);
  const double B = std::pow(3 * lambda_min * bw_star / 4, 2);
  return {A, B};
}

double correlation_bound(double A, double B) { return std::max(4.0, std::sqrt(1 + B * B) + 2 / (B - A)); }

}  // namespace

std::vector<int> SelectionConfig::tags() const { return split.empty() ? half_split(N) : split; }

Index SelectionConfig::n_train() const {
  const auto t = tags();
  return std::count(t.begin(), t.end(), 1);
}

Index SelectionConfig::n_val() const {
  const auto t = tags();
  return std::count(t.begin(), t.end(), -1);
}

Layer build_eval_layer(const SelectionConfig& cfg) {
  require(cfg.K >= 1, "need at least one candidate");
  require(cfg.token_dim() >= cfg.d + 2 * cfg.K + 4, "token dimension too small for the selection slots");
  require(static_cast<Index>(cfg.tags().size()) == cfg.N, "split tags length differs from N");
  const Index n_val = cfg.n_val();
  require(n_val >= 1, "selection needs at least one validation example");
  const auto s = cfg.slots();
  const Index D = s.D;
  const double Rm = std::max(cfg.R, 1.0), rm = std::sqrt(Rm);
  const double n = static_cast<double>(cfg.N + 1);
  Layer layer;
  for (int k = 0; k < cfg.K; ++k) {
    if (!cfg.loss_rep) {
      // σ(±(f − y) − R(1 + t_j))·(±(f − y)) sums to (f − y)² on validation tokens
      for (double sign : {1.0, -1.0}) {
        AttnHead h = empty_head(D);
        h.Q(0, s.ones()) = sign;
        h.Q(1, s.ones()) = -sign;
        h.Q(2, s.ones()) = -rm;
        h.K(0, s.pred(k)) = 1.0;
        h.K(1, s.y()) = 1.0;
        h.K(2, s.ones()) = rm;
        h.K(2, s.t()) = rm;
        const double v = sign * n / (2.0 * static_cast<double>(n_val));
        h.V(s.loss(k), s.pred(k)) = v;
        h.V(s.loss(k), s.y()) = -v;
        layer.heads.push_back(std::move(h));
      }
    } else {
      require(cfg.loss_rep->k == 2, "loss representation must take two inputs");
      for (const auto& term : cfg.loss_rep->terms) {
        AttnHead h = empty_head(D);
        h.Q(0, s.ones()) = term.a(0);
        h.Q(1, s.ones()) = term.a(1);
        h.Q(2, s.ones()) = term.a(2);
        h.Q(3, s.ones()) = -rm;
        h.K(0, s.pred(k)) = 1.0;
        h.K(1, s.y()) = 1.0;
        h.K(2, s.ones()) = 1.0;
        h.K(3, s.ones()) = rm;
        h.K(3, s.t()) = rm;
        h.V(s.loss(k), s.ones()) = n / static_cast<double>(n_val) * term.c;
        layer.heads.push_back(std::move(h));
      }
    }
  }
  return layer;
}

TransformerParams build_selection_layers(const SelectionConfig& cfg) {
  require(cfg.K >= 1, "need at least one candidate");
  require(cfg.gamma > 0, "gamma must be positive");
  require(cfg.token_dim() >= cfg.d + 2 * cfg.K + 4, "token dimension too small for the selection slots");
  const auto s = cfg.slots();
  const Index D = s.D;
  const int K = cfg.K;

  // L_k → c_k
  Layer l1;
  const Index m1 = static_cast<Index>(K) * K + K;
  l1.mlp.W1 = Matrix::Zero(m1, D);
  l1.mlp.W2 = Matrix::Zero(D, m1);
  Index u = 0;
  for (int k = 0; k < K; ++k) {
    for (int l = 0; l < K; ++l) {
      if (l == k) continue;
      l1.mlp.W1(u, s.loss(k)) = 1.0;
      l1.mlp.W1(u, s.loss(l)) = -1.0;
      l1.mlp.W2(s.loss(k), u) = 1.0;
      ++u;
    }
    l1.mlp.W1(u, s.loss(k)) = 1.0;
    l1.mlp.W2(s.loss(k), u++) = -1.0;
    l1.mlp.W1(u, s.loss(k)) = -1.0;
    l1.mlp.W2(s.loss(k), u++) = 1.0;
  }

  // c_k → u_k
  Layer l2;
  l2.mlp.W1 = Matrix::Zero(3 * K, D);
  l2.mlp.W2 = Matrix::Zero(D, 3 * K);
  for (int k = 0; k < K; ++k) {
    const Index b = 3 * k;
    l2.mlp.W1(b, s.loss(k)) = 1.0;
    l2.mlp.W2(s.loss(k), b) = -1.0;
    l2.mlp.W1(b + 1, s.loss(k)) = -1.0;
    l2.mlp.W2(s.loss(k), b + 1) = 1.0;
    l2.mlp.W1(b + 2, s.ones()) = 1.0;
    l2.mlp.W1(b + 2, s.loss(k)) = -1.0 / cfg.gamma;
    l2.mlp.W2(s.loss(k), b + 2) = 1.0;
  }

  // Σ_{k=1}^{K+1} σ(1 − U_{k−1})(f_k − f_{k−1}) with f_0 = f_{K+1} = 0; each product
  // uses (f + R)σ(z) = σ((f + R)z) for f + R ≥ 0, the R parts cancelling in pairs.
  Layer l3;
  const double Rf = std::max(cfg.R, 1.0);
  for (int k = 1; k <= K + 1; ++k) {
    for (int w = 0; w < 2; ++w) {
      const int idx = k - w;
      AttnHead h = empty_head(D);
      if (idx >= 1 && idx <= K) h.Q(0, s.pred(idx - 1)) = 1.0;
      h.Q(0, s.ones()) = Rf;
      h.K(0, s.ones()) = 1.0;
      for (int l = 1; l < k; ++l) h.K(0, s.loss(l - 1)) = -1.0;
      const double sign = w == 0 ? 1.0 : -1.0;
      h.V(s.agg(), s.ones()) = sign;
      h.V(s.y(), s.ones()) = sign;
      l3.heads.push_back(std::move(h));
    }
  }

  TransformerParams p;
  p.D = D;
  p.layers = {l1, l2, l3};
  return p;
}

std::vector<double> telescoping_weights(const std::vector<double>& u) {
  std::vector<double> lambda(u.size());
  double U = 0;
  for (size_t k = 0; k < u.size(); ++k) {
    const double before = relu(1.0 - U);
    U += u[k];
    lambda[k] = before - relu(1.0 - U);
  }
  return lambda;
}

std::vector<double> selection_u(const std::vector<double>& losses, double gamma) {
  std::vector<double> u(losses.size());
  for (size_t k = 0; k < losses.size(); ++k) {
    double c = 0;
    for (size_t l = 0; l < losses.size(); ++l)
      if (l != k) c += relu(losses[k] - losses[l]);
    u[k] = relu(1.0 - c / gamma);
  }
  return u;
}

double selection_norm_bound(const SelectionConfig& cfg) {
  const double K = cfg.K;
  const double Rm = std::max(cfg.R, 1.0);
  const double ratio = static_cast<double>(cfg.N + 1) / static_cast<double>(cfg.n_val());
  const double qk = std::max(std::sqrt(2 + Rm), std::sqrt(1 + 2 * Rm));
  const double v_eval = cfg.loss_rep ? K * cfg.loss_rep->C() * ratio : std::sqrt(2.0) * K * ratio;
  const double mlp1 = std::sqrt(2 * K * (K - 1) + 2 * K) + std::sqrt(K * (K - 1) + 2 * K);
  const double L1 = qk + v_eval + mlp1;
  const double L2 = std::sqrt(K * (3 + 1 / (cfg.gamma * cfg.gamma))) + std::sqrt(3 * K);
  const double L3 = std::max(std::sqrt(1 + Rm * Rm), std::sqrt(K + 1)) + 2 * std::sqrt(2.0) * (K + 1);
  return std::max({L1, L2, L3});
}

int ridge_select_steps(const RidgeSelectConfig& cfg) {
  double kappa = 0;
  for (double lam : cfg.lambdas) kappa = std::max(kappa, (cfg.beta + lam) / (cfg.alpha + lam));
  return std::max(1, static_cast<int>(std::ceil(2 * kappa * std::log(cfg.B_x * cfg.B_w / (2 * cfg.eps)))));
}

Construction build_ridge_lambda_select(const RidgeSelectConfig& cfg) {
  const int K = static_cast<int>(cfg.lambdas.size());
  require(K >= 1, "need at least one ridge coefficient");
  require(cfg.alpha >= 0 && cfg.beta > 0 && cfg.alpha <= cfg.beta, "need 0 <= alpha <= beta, beta > 0");
  require(cfg.eps > 0 && cfg.eps < cfg.B_x * cfg.B_w / 2, "need 0 < eps < B_x*B_w/2");
  for (double lam : cfg.lambdas) require(lam >= 0 && cfg.alpha + lam > 0, "ridge coefficients must be >= 0 with alpha + lambda > 0");
  const Index d = cfg.d, N = cfg.N;

  SelectionConfig sel;
  sel.d = d;
  sel.N = N;
  sel.K = K;
  sel.gamma = cfg.gamma;
  sel.split = cfg.split.empty() ? half_split(N) : cfg.split;
  sel.R = std::max({cfg.B_x * cfg.B_w, cfg.B_y, 1.0});
  sel.D = d + 1 + K * d + 2 * K + 3;
  const Index n_train = sel.n_train();
  require(n_train >= 1 && sel.n_val() >= 1, "need at least one training and one validation example");

  // candidates on compact tokens, joined in parallel
  const int T = ridge_select_steps(cfg);
  const GdSlots cs = compact_slots(d);
  const double scale = static_cast<double>(N + 1) / static_cast<double>(n_train);
  TransformerParams joined;
  double gd_norm = 0;
  for (int k = 0; k < K; ++k) {
    const double lam = cfg.lambdas[static_cast<size_t>(k)];
    const double eta = 1.0 / (cfg.beta + lam);
    auto cand = gd_branch(cs, exact_square_loss_grad(), eta, lam, T, sel.R, scale, linear_readout(cs));
    joined = k == 0 ? cand : join_parallel(joined, cand, d + 3);
    gd_norm += 4 * scale * eta + eta * lam;
  }

  const Index D = sel.D;
  const auto ss = sel.slots();
  std::vector<Index> map(static_cast<size_t>(joined.D));
  for (Index i = 0; i <= d; ++i) map[static_cast<size_t>(i)] = i;
  map[static_cast<size_t>(d + 1)] = D - 2;
  map[static_cast<size_t>(d + 2)] = D - 1;
  for (int k = 0; k < K; ++k) {
    const Index base = d + 3 + k * (d + 1);
    for (Index r = 0; r < d; ++r) map[static_cast<size_t>(base + r)] = d + 1 + k * d + r;
    map[static_cast<size_t>(base + d)] = ss.pred(k);
  }
  TransformerParams body = embed(joined, map, D);

  TransformerParams tail = build_selection_layers(sel);
  tail.layers[0] = merge_layers(build_eval_layer(sel), tail.layers[0]);

  Construction c;
  c.params = concat(body, tail);
  c.layout.D = D;
  c.layout.d = d;
  c.layout.add("x", 0, d);
  c.layout.add("y", d);
  for (int k = 0; k < K; ++k) c.layout.add("w" + std::to_string(k), d + 1 + k * d, d);
  c.layout.add("pred", ss.pred(0), K);
  c.layout.add("loss", ss.loss(0), K);
  c.layout.add("agg", ss.agg());
  c.layout.add("ones", D - 2);
  c.layout.add("t", D - 1);
  auto& v = c.report.values;
  v["steps"] = T;
  v["gamma"] = cfg.gamma;
  v["n_train"] = static_cast<double>(n_train);
  v["n_val"] = static_cast<double>(sel.n_val());
  v["R"] = sel.R;
  const double bound = std::max({std::sqrt(1 + 2 * sel.R) + gd_norm, 1.0 + 2 * K, selection_norm_bound(sel)});
  finalize(c, "ridge_select", bound, "explicit: max(gd layer, prediction layer, selection layers)");
  return c;
}

Construction build_binary_test(Index d, Index N, double band, bool thresholded, Index D) {
  if (D == 0) D = d + 5;
  require(D >= d + 5, "binary test needs D >= d+5");
  require(N >= 1, "binary test needs N >= 1");
  Construction c;
  c.params.D = D;
  c.layout = standard_layout(d, D);
  c.layout.add("psi", d + 1);
  c.layout.add("psi_thres", d + 2);
  c.params.layers.push_back(binary_layer(D, d, D - 2, D - 1, d + 1, band, N));
  if (thresholded) c.params.layers.push_back(threshold_layer(D, d + 1, d + 2, D - 2));
  c.report.values["band"] = band;
  finalize(c, "binary_test", binary_bound(band), "max(1 + 2*C_psi, sqrt(8) + 2)");
  return c;
}

Construction build_correlation_test(Index d, Index N, double lambda_min, double bw_star, Index D) {
  if (D == 0) D = 2 * d + 5;
  require(D >= 2 * d + 5, "correlation test needs D >= 2d+5");
  require(N >= 1 && lambda_min > 0 && bw_star > 0, "correlation test needs N >= 1, lambda_min > 0, B_w* > 0");
  const auto [A, B] = correlation_thresholds(lambda_min, bw_star);
  Construction c;
  c.params.D = D;
  c.layout = standard_layout(d, D);
  c.layout.add("corr", d + 1, d);
  c.layout.add("corr_sq", 2 * d + 1);
  c.layout.add("psi_lin", 2 * d + 2);
  c.params.layers = correlation_layers({D, d, 0, d, D - 2, d + 1, 2 * d + 1, 2 * d + 2}, N, A, B);
  c.report.values["A"] = A;
  c.report.values["B"] = B;
  finalize(c, "correlation_test", correlation_bound(A, B), "max(4, sqrt(1 + B^2) + 2/(B - A))");
  return c;
}

Construction build_adaptive_reg_cls(const AdaptiveConfig& cfg) {
  const Index d = cfg.d, N = cfg.N;
  require(cfg.eps > 0 && cfg.eps < cfg.B_x * cfg.B_w / 2, "least-squares eps must be below B_x*B_w/2");
  require(cfg.alpha > 0 && cfg.beta >= cfg.alpha, "need 0 < alpha <= beta");
  const GdSlots cs = compact_slots(d);
  const double scale = static_cast<double>(N + 1) / static_cast<double>(N);

  const double R_ls = std::max({cfg.B_x * cfg.B_w, cfg.B_y, 1.0});
  const int T_ls = std::max(1, ridge_steps(0.0, cfg.alpha, cfg.beta, cfg.B_w, cfg.eps, cfg.B_x));
  const auto ls = gd_branch(cs, exact_square_loss_grad(), 1.0 / cfg.beta, 0.0, T_ls, R_ls, scale, linear_readout(cs));

  GlmConfig g = cfg.logistic;
  g.d = d;
  g.N = N;
  // reuse the stand-alone builder for validation and accounting
  const Construction glm_alone = build_glm(g);
  const SumOfRelus loss = g.loss_grad.terms.empty() ? lift_link_to_loss_grad(g.link) : g.loss_grad;
  const double R_log = std::max({g.B_x * g.B_w, g.B_y, 1.0});
  const int T_log = glm_steps(g);
  const auto lg = gd_branch(cs, loss, 1.0 / g.beta, 0.0, T_log, R_log, scale, link_readout(cs, g.link));

  TransformerParams bin;
  bin.D = d + 5;
  bin.layers.push_back(binary_layer(bin.D, d, d + 1, d + 2, d + 3, cfg.band, N));
  bin.layers.push_back(threshold_layer(bin.D, d + 3, d + 4, d + 1));

  TransformerParams joined = compact_to_standard(join_parallel(join_parallel(ls, lg, d + 3), bin, d + 3), d);
  const Index D = joined.D;  // 3d + 7
  const Index y_ls = 2 * d + 1, y_log = 3 * d + 2, thres = 3 * d + 4;

  Layer comb;
  for (double sign : {1.0, -1.0}) {
    AttnHead h{Matrix::Zero(D, D), Matrix::Zero(D, D), Matrix::Zero(D, D)};
    h.Q(0, y_ls) = sign;
    h.Q(1, y_log) = sign;
    h.K(0, D - 2) = 1.0;
    h.K(0, thres) = -1.0;
    h.K(1, thres) = 1.0;
    h.V(d, D - 2) = sign;
    comb.heads.push_back(std::move(h));
  }
  joined.layers.push_back(comb);

  Construction c;
  c.params = std::move(joined);
  c.layout = standard_layout(d, D);
  c.layout.add("y_ls", y_ls);
  c.layout.add("w_log", 2 * d + 2, d);
  c.layout.add("y_log", y_log);
  c.layout.add("psi", 3 * d + 3);
  c.layout.add("psi_thres", thres);
  auto& v = c.report.values;
  v["steps_ls"] = T_ls;
  v["steps_log"] = T_log;
  v["link_tolerance"] = glm_link_tolerance(g);
  const double bound_ls = 4 * R_ls + 8 / cfg.beta;
  const double bound = std::max(bound_ls + glm_alone.report.norm_bound + binary_bound(cfg.band), 4.0);
  finalize(c, "adaptive_reg_cls", bound, "max(sum of joined branch bounds, 4)");
  return c;
}

Construction build_confident_linreg(const ConfidentConfig& cfg) {
  const Index d = cfg.d, N = cfg.N;
  require(cfg.eps > 0 && cfg.eps < cfg.B_x * cfg.B_w / 2, "eps must be below B_x*B_w/2");
  require(cfg.alpha > 0 && cfg.beta >= cfg.alpha, "need 0 < alpha <= beta");
  const GdSlots cs = compact_slots(d);
  const double scale = static_cast<double>(N + 1) / static_cast<double>(N);
  const double R = std::max({cfg.B_x * cfg.B_w, cfg.B_y, 1.0});
  const int T = std::max(1, ridge_steps(0.0, cfg.alpha, cfg.beta, cfg.B_w, cfg.eps, cfg.B_x));
  const auto ls = gd_branch(cs, exact_square_loss_grad(), 1.0 / cfg.beta, 0.0, T, R, scale, linear_readout(cs));

  const auto [A, B] = correlation_thresholds(cfg.lambda_min, cfg.bw_star);
  TransformerParams corr;
  corr.D = 2 * d + 5;
  corr.layers = correlation_layers({corr.D, d, 0, d, d + 1, d + 3, 2 * d + 3, 2 * d + 4}, N, A, B);

  TransformerParams joined = compact_to_standard(join_parallel(ls, corr, d + 3), d);
  const Index D = joined.D;  // 3d + 6
  const Index y_ls = 2 * d + 1, lin = 3 * d + 3;
  Layer comb;
  for (double sign : {1.0, -1.0}) {
    AttnHead h{Matrix::Zero(D, D), Matrix::Zero(D, D), Matrix::Zero(D, D)};
    h.Q(0, y_ls) = sign;
    h.K(0, lin) = 1.0;
    h.V(d, D - 2) = sign;
    comb.heads.push_back(std::move(h));
  }
  joined.layers.push_back(comb);

  Construction c;
  c.params = std::move(joined);
  c.layout = standard_layout(d, D);
  c.layout.add("y_ls", y_ls);
  c.layout.add("corr", 2 * d + 2, d);
  c.layout.add("corr_sq", 3 * d + 2);
  c.layout.add("psi_lin", lin);
  c.report.values["steps"] = T;
  c.report.values["A"] = A;
  c.report.values["B"] = B;
  const double bound = std::max(4 * R + 8 / cfg.beta + correlation_bound(A, B), 3.0);
  finalize(c, "confident_linreg", bound, "max(ls bound + correlation bound, 3)");
  return c;
}

}  // namespace icl
