#include "icl/harness.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace icl;

namespace {

IclInstance toy() {
  IclInstance in;
  in.xs = Matrix::Ones(2, 1);
  in.ys = (Vector(2) << 1, 3).finished();
  in.x_query = Vector::Constant(1, 2.0);
  return in;
}

IclInstance sphere_data(std::uint64_t seed, Index N, Index d, double noise = 0.1) {
  CondSpec s;
  s.d = d;
  s.N = N;
  s.noise = noise;
  s.B_y = 10;
  SplitMix64 rng(seed);
  return sphere_instance(s, rng);
}

GdConfig gd(Index d, Index N, double eta, int steps) {
  GdConfig g;
  g.d = d;
  g.N = N;
  g.eta = eta;
  g.steps = steps;
  return g;
}

}  // namespace

// ---- one gradient step ----

TEST(GdStep, HandValues) {
  TransformerParams p;
  const GdConfig g = gd(1, 2, 0.5, 1);
  p.D = g.token_dim();
  p.layers.push_back(build_gd_step_layer(g));
  Tokens H = encode_icl(toy(), p.D);
  H = tf_forward(p, H);
  EXPECT_NEAR(read_w(H, 2, 1)(0), 1.0, 1e-14);
  H = tf_forward(p, H);
  EXPECT_NEAR(read_w(H, 2, 1)(0), 1.5, 1e-14);
}

TEST(GdStep, RidgeHeadShrinks) {
  // y_i = <w, x_i> so the data gradient vanishes at w = 2
  IclInstance in = toy();
  in.ys = (Vector(2) << 2, 2).finished();
  GdConfig g = gd(1, 2, 0.5, 1);
  g.lambda_l2 = 1.0;
  g.B_w = 4;  // the start w = 2 must lie inside the construction's domain
  TransformerParams p;
  p.D = g.token_dim();
  p.layers.push_back(build_gd_step_layer(g));
  Tokens H = encode_icl(in, p.D);
  write_w(H, Vector::Constant(1, 2.0), 1);
  EXPECT_NEAR(read_w(tf_forward(p, H), 2, 1)(0), 1.0, 1e-14);
}

TEST(GdStep, QueryLabelDoesNotLeakIntoGradient) {
  const IclInstance in = sphere_data(3, 12, 3);
  GdConfig g = gd(3, 12, 0.3, 5);
  g.B_y = 20;  // masking is exact for every token within the bound
  const auto c = build_icgd(g);
  Tokens H = encode_icl(in, c.params.D);
  const Tokens a = tf_forward(c.params, H);
  H(3, 12) = 17.0;  // y-slot of the query token
  const Tokens b = tf_forward(c.params, H);
  EXPECT_EQ(read_w(a, 12, 3), read_w(b, 12, 3));
}

TEST(GdStep, ValidationTokensAreMasked) {
  IclInstance in = sphere_data(4, 10, 2);
  GdConfig g = gd(2, 10, 0.3, 4);
  g.B_y = 10;
  const auto c = build_icgd(g);
  std::vector<int> tags(10, 1);
  for (int i = 6; i < 10; ++i) tags[static_cast<size_t>(i)] = -1;
  // labels of validation tokens must not reach the weight slot
  Tokens H = encode_icl(in, c.params.D, tags);
  const Vector w_a = read_w(tf_forward(c.params, H), 10, 2);
  for (int i = 6; i < 10; ++i) H(2, i) += 5.0;
  const Vector w_b = read_w(tf_forward(c.params, H), 10, 2);
  EXPECT_EQ(w_a, w_b);
}

TEST(Icgd, ZeroStepsRejected) { EXPECT_THROW(build_icgd(gd(2, 4, 0.1, 0)), std::invalid_argument); }

TEST(Icgd, ExactIteratesAndReadout) {
  const IclInstance in = sphere_data(5, 40, 5);
  const auto c = build_icgd(gd(5, 40, 0.8, 30));
  std::vector<Tokens> trace;
  tf_forward(c.params, encode_icl(in, c.params.D), std::nullopt, &trace);
  // independent oracle: w ← w − η Xᵀ(Xw − y)/N
  Vector w = Vector::Zero(5);
  for (int l = 1; l <= 30; ++l) {
    w -= 0.8 * in.xs.transpose() * (in.xs * w - in.ys) / 40.0;
    for (Index i = 0; i <= 40; ++i) EXPECT_NEAR((read_w(trace[static_cast<size_t>(l)], i, 5) - w).cwiseAbs().maxCoeff(), 0, 1e-12);
  }
  EXPECT_NEAR(read_y(trace.back(), 5), w.dot(in.x_query), 1e-12);
  EXPECT_EQ(c.params.layers.size(), 31u);
}

TEST(Icgd, FittedLogisticDerivativeErrorGrowsAtMostLinearly) {
  const double eps_g = 1e-3, B_x = 1, B_w = 4, eta = 1.0;
  GdConfig g = gd(2, 30, eta, 20);
  g.B_w = B_w;
  g.loss_grad = lift_link_to_loss_grad(sigmoid_rep(B_x * B_w, eps_g));
  const auto c = build_icgd(g);
  SplitMix64 rng(21);
  CondSpec s;
  s.d = 2;
  s.N = 30;
  IclInstance in = sphere_instance(s, rng);
  for (Index i = 0; i < 30; ++i) in.ys(i) = rng.uniform() < 0.5 ? 1 : 0;
  std::vector<Tokens> trace;
  tf_forward(c.params, encode_icl(in, c.params.D), std::nullopt, &trace);
  const auto ref = gd_trajectory(in, eta, 20, 0.0, logistic_loss_grad());
  for (int l = 1; l <= 20; ++l)
    EXPECT_LE((read_w(trace[static_cast<size_t>(l)], 30, 2) - ref[static_cast<size_t>(l)]).norm(), l * eta * B_x * eps_g);
}

// ---- ridge ----

TEST(Ridge, LayerFormula) {
  // κ = 10 (α = 0.1, β = 1, λ = 0), B_x B_w = 1, ε = 0.01
  EXPECT_EQ(ridge_steps(0.0, 0.1, 1.0, 1.0, 0.01, 1.0) + 1, 80);
  EXPECT_EQ(80, static_cast<int>(std::ceil(20 * std::log(50.0))) + 1);
}

TEST(Ridge, SpecConfigLayerCount) {
  const auto c = build_ridge(2, 16, 0.1, 0.25, 4, 4, 1e-3);
  const double kappa = 4.1 / 0.35;
  EXPECT_EQ(static_cast<double>(c.params.layers.size()), std::ceil(2 * kappa * std::log(4 / (2 * 1e-3))) + 1);
  EXPECT_LE(c.report.op_norm, 4 * 4 + 8 / 4.1);
  for (const auto& l : c.params.layers) {
    EXPECT_LE(l.heads.size(), 3u);
    EXPECT_EQ(l.mlp.hidden(), 0);
  }
}

TEST(Ridge, EpsilonTooLargeRejected) {
  EXPECT_THROW(build_ridge(2, 16, 0.1, 0.25, 4, 2.0, 1.0), std::invalid_argument);
  EXPECT_THROW(build_ridge(2, 16, 0.1, 0.25, 4, 2.0, 1.5), std::invalid_argument);
}

TEST(Ridge, ToyInstance) {
  // XᵀX/N = 1 so α = β = 1 is admissible; w_ridge = 1 for λ = 1
  const double eps = 1e-3;
  const auto c = build_ridge(1, 2, 1.0, 1.0, 1.0, 4.0, eps, 1.0, 3.0);
  const Tokens out = tf_forward(c.params, encode_icl(toy(), c.params.D));
  EXPECT_NEAR(read_y(out, 1), 2.0, eps);
}

// ---- proximal ----

TEST(Prox, SoftThresholdAndBoxMlps) {
  const GdSlots s = standard_slots(2, 7);
  Tokens H = Tokens::Zero(7, 1);
  H(s.ones, 0) = 1;
  H(s.w, 0) = 1.0;
  H(s.w + 1, 0) = -0.2;
  const Tokens soft = mlp_forward(prox_mlp(s, Regularizer::l1(0.3), 1.0), H);
  EXPECT_NEAR(soft(s.w, 0), 0.7, 1e-15);
  EXPECT_NEAR(soft(s.w + 1, 0), 0.0, 1e-15);
  H(s.w, 0) = 1.5;
  const Tokens box = mlp_forward(prox_mlp(s, Regularizer::box(1.0), 1.0), H);
  EXPECT_NEAR(box(s.w, 0), 1.0, 1e-15);
  EXPECT_NEAR(box(s.w + 1, 0), -0.2, 1e-15);
}

TEST(Prox, MlpsMatchOperatorsAndStayWithinBudget) {
  std::mt19937_64 g(4);
  std::uniform_real_distribution<double> u(-3, 3);
  for (Index d : {1, 4, 32}) {
    const GdSlots s = standard_slots(d, 2 * d + 3);
    for (const Regularizer& reg : {Regularizer::l1(0.4), Regularizer::l2(0.7), Regularizer::box(1.0)}) {
      const MlpLayer m = prox_mlp(s, reg, 0.5);
      Tokens H = Tokens::Zero(s.D, 5);
      H.row(s.ones).setOnes();
      for (Index j = 0; j < 5; ++j)
        for (Index r = 0; r < d; ++r) H(s.w + r, j) = u(g);
      const Tokens out = mlp_forward(m, H);
      for (Index j = 0; j < 5; ++j) {
        const Vector expect = prox(reg, H.col(j).segment(s.w, d), 0.5);
        EXPECT_LE((out.col(j).segment(s.w, d) - expect).cwiseAbs().maxCoeff(), 1e-13);
      }
      // Stated budgets: 4 + 2ηλ (ℓ1), 2 + 2ηλ (ℓ2), 2 + 2B (box).  The bias column
      // grows like √d, so for large d they are out of reach for any exact relu MLP.
      if (d > 4) continue;
      const double budget = reg.kind == Regularizer::Kind::L1   ? 4 + 2 * 0.5 * 0.4
                            : reg.kind == Regularizer::Kind::L2 ? 2 + 2 * 0.5 * 0.7
                                                                : 2 + 2 * 1.0;
      EXPECT_LE(spectral_norm(Matrix(m.W1)) + spectral_norm(Matrix(m.W2)), budget + 1e-12) << "d=" << d;
    }
  }
}

TEST(Lasso, OneStepHandValue) {
  const auto c = build_icpgd(gd(1, 2, 1.0, 1), Regularizer::l1(1.0));
  const Tokens out = tf_forward(c.params, encode_icl(toy(), c.params.D));
  EXPECT_NEAR(read_w(out, 2, 1)(0), 1.0, 1e-14);
}

TEST(Lasso, ZeroPenaltyIsPlainGd) {
  const IclInstance in = sphere_data(6, 20, 3);
  const auto c = build_lasso(3, 20, 0.0, 1.0, 2.0, 0.1);
  std::vector<Tokens> trace;
  tf_forward(c.params, encode_icl(in, c.params.D), std::nullopt, &trace);
  const auto ref = gd_trajectory(in, 1.0, static_cast<int>(c.params.layers.size()) - 1, 0.0, square_loss_grad());
  for (size_t l = 0; l < ref.size(); ++l) EXPECT_LE((read_w(trace[l], 20, 3) - ref[l]).norm(), 1e-12);
}

TEST(Lasso, SmallSparseInstanceLossGap) {
  SplitMix64 rng(31);
  CondSpec s;
  s.d = 2;
  s.N = 8;
  s.sparsity = 1;
  s.noise = 0.05;
  s.w_norm = 0.5;
  s.alpha = 0.05;
  const auto in = conditioned_instance(s, rng);
  ASSERT_TRUE(in);
  const double lam = 0.02, beta = 1.05 * covariance_spectrum(*in).second, B_w = 2, eps = 0.02;
  const auto c = build_lasso(2, 8, lam, beta, B_w, eps);
  EXPECT_EQ(static_cast<double>(c.params.layers.size()), std::ceil(beta * B_w * B_w / eps) + 1);
  const Tokens out = tf_forward(c.params, encode_icl(*in, c.params.D));
  // reference optimum: subgradient-certified solver
  const Vector opt = lasso_solve(*in, lam);
  EXPECT_LE(lasso_objective(*in, read_w(out, 8, 2), lam) - lasso_objective(*in, opt, lam), eps);
}

// ---- GLM ----

TEST(Glm, IdentityLinkMatchesSquareLossGd) {
  GlmConfig g;
  g.d = 2;
  g.N = 16;
  g.link = exact_identity(8.0);
  g.L_g = 1;
  g.alpha = 0.2;
  g.beta = 1.0;
  g.B_w = 4;
  g.eps = 0.1;
  const auto c = build_glm(g);
  const IclInstance in = sphere_data(9, 16, 2);
  const int T = glm_steps(g);
  const Tokens out = tf_forward(c.params, encode_icl(in, c.params.D));
  const Vector w = gd_trajectory(in, 1.0, T, 0.0, square_loss_grad()).back();
  EXPECT_NEAR(read_y(out, 2), w.dot(in.x_query), 1e-10);
}

TEST(Glm, LogisticOnOverlappingToy) {
  GlmConfig g;
  g.d = 2;
  g.N = 4;
  const double eps_g = 1e-3;
  g.link = sigmoid_rep(8.0, eps_g);
  g.L_g = 0.25;
  g.alpha = 0.01;
  g.beta = 0.25;
  g.B_w = 8;
  g.eps = 0.5;
  const auto c = build_glm(g);
  EXPECT_EQ(static_cast<Index>(c.params.layers.back().heads.size()), g.link.M());
  IclInstance in;
  in.xs = (Matrix(4, 2) << 0.6, 0.8, 0.8, 0.6, -0.6, -0.8, -0.8, -0.6).finished();
  in.ys = (Vector(4) << 1, 1, 0, 1).finished();  // not separable: bounded minimiser
  in.x_query = (Vector(2) << 1, 0).finished();
  const Tokens out = tf_forward(c.params, encode_icl(in, c.params.D));
  const int T = glm_steps(g);
  const Vector w = gd_trajectory(in, 1 / g.beta, T, 0.0, logistic_loss_grad()).back();
  ASSERT_LE(w.norm(), g.B_w);
  const double y = read_y(out, 2);
  EXPECT_GT(y, 0);
  EXPECT_LT(y, 1);
  const double traj = T * (1 / g.beta) * eps_g;
  EXPECT_NEAR(y, sigmoid(w.dot(in.x_query)), eps_g + 0.25 * traj);
}

// ---- two-layer network ----

namespace {

// (s, t) ↦ s exactly: the derivative of a linear activation times s.
SumOfRelus exact_first_coordinate() {
  SumOfRelus r;
  r.k = 2;
  r.exact = true;
  r.R = 1;
  r.terms = {{1.0, (Vector(3) << 1, 0, 0).finished()}, {-1.0, (Vector(3) << -1, 0, 0).finished()}};
  return r;
}

}  // namespace

TEST(NnGd, LinearActivationDegeneratesToLinearGd) {
  NnConfig n;
  n.d = 2;
  n.N = 12;
  n.K = 1;
  n.act = exact_identity(1.0);
  n.act.exact = true;
  n.act_grad = exact_first_coordinate();
  n.box_radius = 10;
  n.eta = 0.2;
  n.steps = 4;
  n.act_bound = 10;
  const auto c = build_nn_gd(n);
  EXPECT_EQ(c.params.layers.size(), 8u);
  const IclInstance in = sphere_data(10, 12, 2);
  Tokens H = encode_icl(in, c.params.D);
  const Index w = c.layout.index("w");
  const Vector w0 = (Vector(3) << 0.3, -0.2, 1.0).finished();
  for (Index i = 0; i < H.cols(); ++i) H.col(i).segment(w, 3) = w0;
  const Tokens out = tf_forward(c.params, H);
  const auto ref = nn_gd_trajectory(in, 1, Activation::identity(), 0.2, 4, 10, w0);
  EXPECT_LE((out.col(12).segment(w, 3) - ref.back()).norm(), 1e-6);
}

TEST(NnGd, TokenTooSmallRejected) {
  NnConfig n = tanh_nn_config(2, 8, 1, 0.1, 1, 0.5, 1, 1, 1e-3, 3e-2);
  n.D = (n.K + 1) * (n.d + 1) + 3;
  EXPECT_THROW(build_nn_gd(n), std::invalid_argument);
}

TEST(NnGd, PerturbedTrajectoryWithinGronwallBound) {
  // oracle-level statement: projected GD under per-step gradient errors of norm ε
  std::mt19937_64 g(17);
  std::normal_distribution<double> n01;
  const IclInstance in = sphere_data(11, 16, 2);
  const int K = 2;
  const double eta = 0.1, R = 0.5, eps = 1e-3;
  const Activation act = Activation::tanh();
  Vector w0 = Vector::NullaryExpr(K * 3, [&] { return 0.3 * n01(g); });
  const auto ref = nn_gd_trajectory(in, K, act, eta, 10, R, w0);
  // smoothness bound for tanh units, |x| = 1, |y| ≤ B_y, box R
  const double B_u = R, B_r = std::tanh(std::sqrt(2.0) * R), L_r2 = 4 / (3 * std::sqrt(3.0));
  const double B_y = 2;
  const double L_f = K * (B_u * B_u + B_r * B_r) + (K * B_u * B_r + B_y) * (B_u * L_r2 + 1);
  Vector w = w0;
  for (int l = 1; l <= 10; ++l) {
    Vector e = Vector::NullaryExpr(K * 3, [&] { return n01(g); });
    e *= eps / e.norm();
    w = box_project(w - eta * (nn_grad(in, w, K, act) + e), R);
    EXPECT_LE((w - ref[static_cast<size_t>(l)]).norm(), std::pow(1 + eta * L_f, l) * eps / L_f);
  }
}

TEST(NnGd, StationarityOfProjectedGd) {
  const IclInstance in = sphere_data(12, 16, 2);
  const int K = 2, L = 40;
  const double R = 0.5;
  const Activation act = Activation::tanh();
  const double eta = 0.05;
  Vector w0 = Vector::Constant(K * 3, 0.2);
  const auto traj = nn_gd_trajectory(in, K, act, eta, L, R, w0);
  double avg = 0;
  double inf_f = 0;  // objective is nonnegative
  for (int l = 0; l < L; ++l) {
    const Vector& w = traj[static_cast<size_t>(l)];
    const Vector G = (w - box_project(w - eta * nn_grad(in, w, K, act), R)) / eta;
    avg += G.squaredNorm() / L;
  }
  EXPECT_LE(avg, 8 * (nn_objective(in, w0, K, act) - inf_f) / (eta * L));
}
