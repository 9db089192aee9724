#include "icl/builders.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace icl {

namespace {

Matrix zeros(Index D) { return Matrix::Zero(D, D); }

AttnHead empty_head(Index D) { return {zeros(D), zeros(D), zeros(D)}; }

// Builders reject weights that would make later layers blow up numerically.
constexpr double kMaxNorm = 1e8;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_rep_radius(const SumOfRelus& rep, double needed, const std::string& what) {
  if (!rep.exact && rep.R + 1e-12 < needed)
    throw std::invalid_argument(what + " representation covers radius " + std::to_string(rep.R) +
                                " but " + std::to_string(needed) + " is needed");
}

}  // namespace

void finalize(Construction& c, const std::string& kind, double bound, const std::string& formula) {
  auto& r = c.report;
  r.kind = kind;
  r.layers = static_cast<Index>(c.params.layers.size());
  r.heads.clear();
  r.hidden.clear();
  for (const auto& l : c.params.layers) {
    r.heads.push_back(static_cast<Index>(l.heads.size()));
    r.hidden.push_back(l.mlp.hidden());
  }
  r.op_norm = op_norm(c.params);
  r.norm_bound = bound;
  r.bound_formula = formula;
  if (!(r.op_norm <= kMaxNorm)) throw std::invalid_argument(kind + ": weights exceed the admissible norm 1e8");
}

GdSlots standard_slots(Index d, Index D) {
  GdSlots s;
  s.D = D;
  s.d = d;
  s.x = 0;
  s.y = d;
  s.w = d + 1;
  s.ones = D - 2;
  s.t = D - 1;
  s.out = d;
  return s;
}

Layer gd_step_attention(const GdSlots& s, const SumOfRelus& loss_grad, double eta, double lambda,
                        double mask_R, double value_scale) {
  require(loss_grad.k == 2, "loss derivative representation must take two inputs");
  require(s.D >= s.d + 3, "token dimension too small for the gradient step");
  const Index d = s.d;
  const double rm = std::sqrt(mask_R);
  Layer layer;
  for (const auto& term : loss_grad.terms) {
    AttnHead h = empty_head(s.D);
    // <Q h_i, K h_j> = a_s <w, x_j> + a_t y_j + a_c − R (1 − t_j)
    for (Index r = 0; r < d; ++r) {
      h.Q(r, s.w + r) = term.a(0);
      h.K(r, s.x + r) = 1.0;
    }
    h.Q(d, s.ones) = term.a(1);
    h.K(d, s.y) = 1.0;
    h.Q(d + 1, s.ones) = term.a(2);
    h.K(d + 1, s.ones) = 1.0;
    h.Q(d + 2, s.ones) = -rm;
    h.K(d + 2, s.ones) = rm;
    h.K(d + 2, s.t) = -rm;
    for (Index r = 0; r < d; ++r) h.V(s.w + r, s.x + r) = -value_scale * eta * term.c;
    layer.heads.push_back(std::move(h));
  }
  if (lambda > 0) {
    // constant unit score on every pair: adds −ηλw
    AttnHead h = empty_head(s.D);
    h.Q(0, s.ones) = 1.0;
    h.K(0, s.ones) = 1.0;
    for (Index r = 0; r < d; ++r) h.V(s.w + r, s.w + r) = -eta * lambda;
    layer.heads.push_back(std::move(h));
  }
  return layer;
}

Layer linear_readout(const GdSlots& s) {
  Layer layer;
  for (double sign : {1.0, -1.0}) {
    AttnHead h = empty_head(s.D);
    for (Index r = 0; r < s.d; ++r) {
      h.Q(r, s.x + r) = 1.0;
      h.K(r, s.w + r) = sign;
    }
    h.V(s.out, s.ones) = sign;
    layer.heads.push_back(std::move(h));
  }
  return layer;
}

Layer link_readout(const GdSlots& s, const SumOfRelus& g) {
  require(g.k == 1, "link representation must take one input");
  Layer layer;
  for (const auto& term : g.terms) {
    AttnHead h = empty_head(s.D);
    for (Index r = 0; r < s.d; ++r) {
      h.Q(r, s.x + r) = term.a(0);
      h.K(r, s.w + r) = 1.0;
    }
    h.Q(s.d, s.ones) = term.a(1);
    h.K(s.d, s.ones) = 1.0;
    h.V(s.out, s.ones) = term.c;
    layer.heads.push_back(std::move(h));
  }
  return layer;
}

MlpLayer prox_mlp(const GdSlots& s, const Regularizer& reg, double eta) {
  const Index d = s.d;
  MlpLayer m;
  using K = Regularizer::Kind;
  if (reg.kind == K::None) return m;
  require(reg.param >= 0, "regularizer parameter must be nonnegative");
  const Index units = reg.kind == K::L1 ? 4 * d : 2 * d;
  m.W1 = Matrix::Zero(units, s.D);
  m.W2 = Matrix::Zero(s.D, units);
  for (Index r = 0; r < d; ++r) {
    const Index w = s.w + r;
    switch (reg.kind) {
      case K::L1: {
        // soft(w) − w = σ(w − τ) − σ(−w − τ) − σ(w) + σ(−w)
        const double tau = eta * reg.param;
        const Index u = 4 * r;
        m.W1(u, w) = 1.0;
        m.W1(u, s.ones) = -tau;
        m.W1(u + 1, w) = -1.0;
        m.W1(u + 1, s.ones) = -tau;
        m.W1(u + 2, w) = 1.0;
        m.W1(u + 3, w) = -1.0;
        m.W2(w, u) = 1.0;
        m.W2(w, u + 1) = -1.0;
        m.W2(w, u + 2) = -1.0;
        m.W2(w, u + 3) = 1.0;
        break;
      }
      case K::L2: {
        // w/(1+ηλ) − w = −c(σ(w) − σ(−w)),  c = ηλ/(1+ηλ)
        const double c = eta * reg.param / (1.0 + eta * reg.param);
        m.W1(2 * r, w) = 1.0;
        m.W1(2 * r + 1, w) = -1.0;
        m.W2(w, 2 * r) = -c;
        m.W2(w, 2 * r + 1) = c;
        break;
      }
      case K::Box: {
        // Proj(w) − w = −σ(w − B) + σ(−w − B)
        m.W1(2 * r, w) = 1.0;
        m.W1(2 * r, s.ones) = -reg.param;
        m.W1(2 * r + 1, w) = -1.0;
        m.W1(2 * r + 1, s.ones) = -reg.param;
        m.W2(w, 2 * r) = -1.0;
        m.W2(w, 2 * r + 1) = 1.0;
        break;
      }
      default: break;
    }
  }
  // σ is positively homogeneous: W1/s, s·W2 computes the same map, and
  // s = √(‖W1‖/‖W2‖) minimises ‖W1‖ + ‖W2‖ (matters for the box bias column).
  const double n1 = spectral_norm(m.W1), n2 = spectral_norm(m.W2);
  if (n1 > 0 && n2 > 0) {
    const double sc = std::sqrt(n1 / n2);
    m.W1 /= sc;
    m.W2 *= sc;
  }
  return m;
}

double GdConfig::R() const { return std::max({B_x * B_w, B_y, 1.0}); }

void validate(const GdConfig& cfg) {
  require(cfg.d >= 1 && cfg.N >= 1, "gradient descent config needs d >= 1 and N >= 1");
  require(cfg.eta > 0, "step size must be positive");
  require(cfg.steps >= 1, "at least one gradient step is required");
  require(cfg.lambda_l2 >= 0, "ridge coefficient must be nonnegative");
  require(cfg.token_dim() >= 2 * cfg.d + 3, "token dimension must be at least 2d+3");
  require(cfg.loss_grad.k == 2, "loss derivative representation must take two inputs");
  check_rep_radius(cfg.loss_grad, cfg.R(), "loss derivative");
}

Layer build_gd_step_layer(const GdConfig& cfg) {
  validate(cfg);
  const auto s = standard_slots(cfg.d, cfg.token_dim());
  const double scale = static_cast<double>(cfg.N + 1) / static_cast<double>(cfg.N);
  return gd_step_attention(s, cfg.loss_grad, cfg.eta, cfg.lambda_l2, cfg.R(), scale);
}

Construction build_icgd(const GdConfig& cfg) {
  const Layer step = build_gd_step_layer(cfg);
  const Index D = cfg.token_dim();
  Construction c;
  c.params.D = D;
  c.layout = standard_layout(cfg.d, D);
  for (int l = 0; l < cfg.steps; ++l) c.params.layers.push_back(step);
  c.params.layers.push_back(linear_readout(standard_slots(cfg.d, D)));
  const double C = cfg.loss_grad.C();
  auto& v = c.report.values;
  v["eta"] = cfg.eta;
  v["steps"] = cfg.steps;
  v["R"] = cfg.R();
  v["C"] = C;
  v["M"] = static_cast<double>(cfg.loss_grad.M());
  v["lambda"] = cfg.lambda_l2;
  v["rep_eps"] = cfg.loss_grad.eps;
  if (cfg.lambda_l2 > 0)
    finalize(c, "icgd", 2 + cfg.R() + 2 * cfg.eta * C + cfg.eta * cfg.lambda_l2, "2 + R + 2*eta*C + eta*lambda");
  else
    finalize(c, "icgd", 2 + cfg.R() + 2 * cfg.eta * C, "2 + R + 2*eta*C");
  return c;
}

int ridge_steps(double lambda, double alpha, double beta, double B_w, double eps, double B_x) {
  const double kappa = (beta + lambda) / (alpha + lambda);
  return static_cast<int>(std::ceil(2 * kappa * std::log(B_x * B_w / (2 * eps))));
}

Construction build_ridge(Index d, Index N, double lambda, double alpha, double beta, double B_w, double eps,
                         double B_x, double B_y) {
  require(lambda >= 0, "ridge coefficient must be nonnegative");
  require(alpha >= 0 && beta > 0 && alpha <= beta, "need 0 <= alpha <= beta, beta > 0");
  require(alpha + lambda > 0, "alpha + lambda must be positive");
  require(B_w > 0 && B_x > 0 && eps > 0, "B_w, B_x, eps must be positive");
  require(eps < B_x * B_w / 2, "eps must be smaller than B_x*B_w/2");
  GdConfig cfg;
  cfg.d = d;
  cfg.N = N;
  cfg.eta = 1.0 / (beta + lambda);
  cfg.steps = std::max(1, ridge_steps(lambda, alpha, beta, B_w, eps, B_x));
  cfg.lambda_l2 = lambda;
  cfg.B_x = B_x;
  cfg.B_w = B_w;
  cfg.B_y = B_y;
  Construction c = build_icgd(cfg);
  c.report.values["kappa"] = (beta + lambda) / (alpha + lambda);
  c.report.values["eps"] = eps;
  finalize(c, "ridge", 4 * cfg.R() + 8 / (beta + lambda), "4R + 8/(beta+lambda)");
  return c;
}

namespace {

double prox_norm_budget(const Regularizer& reg, double eta) {
  switch (reg.kind) {
    case Regularizer::Kind::L1: return 4 + 2 * eta * reg.param;
    case Regularizer::Kind::L2: return 2 + 2 * eta * reg.param;
    case Regularizer::Kind::Box: return 2 + 2 * reg.param;
    default: return 0;
  }
}

}  // namespace

Construction build_icpgd(const GdConfig& cfg, const Regularizer& reg) {
  Layer step = build_gd_step_layer(cfg);
  const Index D = cfg.token_dim();
  const auto s = standard_slots(cfg.d, D);
  step.mlp = prox_mlp(s, reg, cfg.eta);
  Construction c;
  c.params.D = D;
  c.layout = standard_layout(cfg.d, D);
  for (int l = 0; l < cfg.steps; ++l) c.params.layers.push_back(step);
  c.params.layers.push_back(linear_readout(s));
  const double C = cfg.loss_grad.C();
  auto& v = c.report.values;
  v["eta"] = cfg.eta;
  v["steps"] = cfg.steps;
  v["R"] = cfg.R();
  v["C"] = C;
  v["C_prox"] = prox_norm_budget(reg, cfg.eta);
  v["reg_param"] = reg.param;
  finalize(c, "icpgd", 3 + cfg.R() + 2 * cfg.eta * C + prox_norm_budget(reg, cfg.eta),
           "3 + R + 2*eta*C + C'");
  return c;
}

Construction build_lasso(Index d, Index N, double lambda_N, double beta, double B_w, double eps, double B_x,
                         double B_y) {
  require(lambda_N >= 0, "lasso coefficient must be nonnegative");
  require(beta > 0 && B_w > 0 && eps > 0, "beta, B_w, eps must be positive");
  GdConfig cfg;
  cfg.d = d;
  cfg.N = N;
  cfg.eta = 1.0 / beta;
  cfg.steps = static_cast<int>(std::ceil(beta * B_w * B_w / eps));
  cfg.B_x = B_x;
  cfg.B_w = B_w;
  cfg.B_y = B_y;
  Construction c = build_icpgd(cfg, Regularizer::l1(lambda_N));
  c.report.values["eps"] = eps;
  finalize(c, "lasso", 10 * cfg.R() + (8 + 2 * lambda_N) / beta, "10R + (8 + 2*lambda_N)/beta");
  return c;
}

int glm_steps(const GlmConfig& cfg) {
  const double kappa = cfg.beta / cfg.alpha;
  return std::max(1, static_cast<int>(std::ceil(2 * kappa * std::log(cfg.L_g * cfg.B_w * cfg.B_x / cfg.eps))));
}

double glm_link_tolerance(const GlmConfig& cfg) {
  const double T = glm_steps(cfg);
  return 0.5 * cfg.eps / (1 + T * cfg.L_g * cfg.B_x * cfg.B_x / cfg.beta);
}

Construction build_glm(const GlmConfig& cfg) {
  require(cfg.alpha > 0 && cfg.beta >= cfg.alpha, "need 0 < alpha <= beta");
  require(cfg.eps > 0 && cfg.eps < cfg.B_w / 2, "need 0 < eps < B_w/2");
  require(cfg.link.k == 1, "link representation must take one input");
  const SumOfRelus loss = cfg.loss_grad.terms.empty() ? lift_link_to_loss_grad(cfg.link) : cfg.loss_grad;
  check_rep_radius(cfg.link, cfg.B_x * cfg.B_w, "link");
  GdConfig gd;
  gd.d = cfg.d;
  gd.N = cfg.N;
  gd.eta = 1.0 / cfg.beta;
  gd.steps = glm_steps(cfg);
  gd.loss_grad = loss;
  gd.B_x = cfg.B_x;
  gd.B_w = cfg.B_w;
  gd.B_y = cfg.B_y;
  gd.D = cfg.D;
  const Layer step = build_gd_step_layer(gd);
  const Index D = gd.token_dim();
  Construction c;
  c.params.D = D;
  c.layout = standard_layout(cfg.d, D);
  for (int l = 0; l < gd.steps; ++l) c.params.layers.push_back(step);
  c.params.layers.push_back(link_readout(standard_slots(cfg.d, D), cfg.link));
  auto& v = c.report.values;
  v["eta"] = gd.eta;
  v["steps"] = gd.steps;
  v["kappa"] = cfg.beta / cfg.alpha;
  v["R"] = gd.R();
  v["C"] = loss.C();
  v["C_g"] = cfg.link.C();
  v["link_eps"] = cfg.link.eps;
  v["link_tolerance"] = glm_link_tolerance(cfg);
  const double bound = std::max(2 + gd.R() + 2 * gd.eta * loss.C(), 1 + cfg.link.C());
  finalize(c, "glm", bound, "max(2 + R + 2*eta*C, 1 + C_g)");
  return c;
}

double NnConfig::B_v() const { return std::sqrt(static_cast<double>(d)) * box_radius; }

double NnConfig::radius_act() const { return std::max(B_x * B_v(), 1.0); }

double NnConfig::radius_loss() const {
  return std::max({K * B_u() * (act_bound + act.eps), B_y, 1.0});
}

double NnConfig::radius_act_grad() const {
  const double B_g = K * B_u() * (act_bound + act.eps) + B_y + loss_grad.eps;
  return std::max({B_x * B_v(), B_g * B_u(), 1.0});
}

Index NnConfig::token_dim() const { return D ? D : (K + 1) * (d + 1) + 4; }

Layout nn_layout(const NnConfig& cfg) {
  const Index D = cfg.token_dim();
  const Index d = cfg.d;
  Layout L;
  L.D = D;
  L.d = d;
  L.add("x", 0, d);
  L.add("y", d);
  L.add("w", d + 1, cfg.K * (d + 1));
  L.add("pred", d + 1 + cfg.K * (d + 1));
  L.add("g", d + 2 + cfg.K * (d + 1));
  L.add("ones", D - 2);
  L.add("t", D - 1);
  return L;
}

Construction build_nn_gd(const NnConfig& cfg) {
  require(cfg.d >= 1 && cfg.N >= 1 && cfg.K >= 1, "network config needs d, N, K >= 1");
  require(cfg.eta > 0 && cfg.steps >= 1 && cfg.box_radius > 0, "need eta > 0, steps >= 1, R_w > 0");
  require(cfg.act.k == 1 && cfg.act_grad.k == 2 && cfg.loss_grad.k == 2, "representation arities are (1, 2, 2)");
  require(cfg.token_dim() >= (cfg.K + 1) * (cfg.d + 1) + 4,
          "token dimension too small for K(d+1) weights plus scratch slots");
  check_rep_radius(cfg.act, cfg.radius_act(), "activation");
  check_rep_radius(cfg.loss_grad, cfg.radius_loss(), "loss derivative");
  check_rep_radius(cfg.act_grad, cfg.radius_act_grad(), "activation derivative");

  const Index d = cfg.d, D = cfg.token_dim();
  const Layout L = nn_layout(cfg);
  const Index y = L.index("y"), w = L.index("w"), P = L.index("pred"), G = L.index("g");
  const Index one = L.index("ones"), t = L.index("t");
  auto v_of = [&](int k) { return w + k * (d + 1); };
  auto u_of = [&](int k) { return w + k * (d + 1) + d; };
  const double R2 = cfg.radius_loss(), R3 = cfg.radius_act_grad();
  const double scale = static_cast<double>(cfg.N + 1) / static_cast<double>(cfg.N);

  // Layer A: prediction Σ_k u_k r(<v_k, x_i>) into P, then the masked loss derivative into G.
  Layer A;
  for (int k = 0; k < cfg.K; ++k)
    for (const auto& term : cfg.act.terms) {
      AttnHead h = empty_head(D);
      for (Index r = 0; r < d; ++r) {
        h.Q(r, r) = term.a(0);
        h.K(r, v_of(k) + r) = 1.0;
      }
      h.Q(d, one) = term.a(1);
      h.K(d, one) = 1.0;
      h.V(P, u_of(k)) = term.c;
      A.heads.push_back(std::move(h));
    }
  const Index M_l = cfg.loss_grad.M();
  A.mlp.W1 = Matrix::Zero(M_l, D);
  A.mlp.W2 = Matrix::Zero(D, M_l);
  for (Index m = 0; m < M_l; ++m) {
    const auto& term = cfg.loss_grad.terms[static_cast<size_t>(m)];
    A.mlp.W1(m, P) = term.a(0);
    A.mlp.W1(m, y) = term.a(1);
    A.mlp.W1(m, one) = term.a(2) - R2;
    A.mlp.W1(m, t) = R2;
    A.mlp.W2(G, m) = term.c;
  }

  // Layer B: gradient assembly into the weight slots, then projection and scratch reset.
  Layer B;
  const double rm = std::sqrt(R3);
  for (int k = 0; k < cfg.K; ++k) {
    for (const auto& term : cfg.act_grad.terms) {
      // σ(a1 u_k g_j + a2 <v_k, x_j> + a3 − R3(1 − t_j)) ≈ term of u_k g_j r'(<v_k, x_j>)
      AttnHead h = empty_head(D);
      h.Q(0, u_of(k)) = term.a(0);
      h.K(0, G) = 1.0;
      for (Index r = 0; r < d; ++r) {
        h.Q(1 + r, v_of(k) + r) = term.a(1);
        h.K(1 + r, r) = 1.0;
      }
      h.Q(d + 1, one) = term.a(2);
      h.K(d + 1, one) = 1.0;
      h.Q(d + 2, one) = -rm;
      h.K(d + 2, one) = rm;
      h.K(d + 2, t) = -rm;
      for (Index r = 0; r < d; ++r) h.V(v_of(k) + r, r) = -scale * cfg.eta * term.c;
      B.heads.push_back(std::move(h));
    }
    for (const auto& term : cfg.act.terms) {
      AttnHead h = empty_head(D);
      for (Index r = 0; r < d; ++r) {
        h.Q(r, v_of(k) + r) = term.a(0);
        h.K(r, r) = 1.0;
      }
      h.Q(d, one) = term.a(1);
      h.K(d, one) = 1.0;
      h.V(u_of(k), G) = -scale * cfg.eta * term.c;
      B.heads.push_back(std::move(h));
    }
  }
  const Index nw = cfg.K * (d + 1);
  B.mlp.W1 = Matrix::Zero(2 * nw + 4, D);
  B.mlp.W2 = Matrix::Zero(D, 2 * nw + 4);
  for (Index j = 0; j < nw; ++j) {
    B.mlp.W1(2 * j, w + j) = 1.0;
    B.mlp.W1(2 * j, one) = -cfg.box_radius;
    B.mlp.W1(2 * j + 1, w + j) = -1.0;
    B.mlp.W1(2 * j + 1, one) = -cfg.box_radius;
    B.mlp.W2(w + j, 2 * j) = -1.0;
    B.mlp.W2(w + j, 2 * j + 1) = 1.0;
  }
  for (Index j = 0; j < 2; ++j) {
    const Index slot = j == 0 ? P : G, u = 2 * nw + 2 * j;
    B.mlp.W1(u, slot) = 1.0;
    B.mlp.W1(u + 1, slot) = -1.0;
    B.mlp.W2(slot, u) = -1.0;
    B.mlp.W2(slot, u + 1) = 1.0;
  }

  Construction c;
  c.params.D = D;
  c.layout = L;
  for (int l = 0; l < cfg.steps; ++l) {
    c.params.layers.push_back(A);
    c.params.layers.push_back(B);
  }
  const double C_w = spectral_norm(B.mlp.W1) + spectral_norm(B.mlp.W2);
  const double normA = 1 + cfg.K * cfg.act.C() + std::sqrt(static_cast<double>(M_l)) * (1 + 2 * R2) +
                       cfg.loss_grad.C();
  const double normB = std::sqrt(1 + 2 * R3) + 2 * cfg.eta * cfg.K * (cfg.act_grad.C() + cfg.act.C()) + C_w;
  auto& v = c.report.values;
  v["R_act"] = cfg.radius_act();
  v["R_loss"] = R2;
  v["R_act_grad"] = R3;
  v["C_w"] = C_w;
  v["eta"] = cfg.eta;
  v["steps"] = cfg.steps;
  finalize(c, "nn_gd", std::max(normA, normB),
           "max(1 + K*C_r + sqrt(M_l)*(1 + 2*R_loss) + C_l, sqrt(1 + 2*R_act_grad) + 2*eta*K*(C_p + C_r) + C_w)");
  return c;
}

TransformerParams compact_to_standard(const TransformerParams& p, Index d) {
  const Index D = p.D;
  std::vector<Index> map(static_cast<size_t>(D));
  for (Index i = 0; i < D; ++i) {
    Index target;
    if (i <= d) target = i;
    else if (i == d + 1) target = D - 2;
    else if (i == d + 2) target = D - 1;
    else target = i - 2;
    map[static_cast<size_t>(i)] = target;
  }
  return embed(p, map, D);
}

}  // namespace icl
