#include "icl/oracles.hpp"
#include "icl/relu_approx.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace icl;

namespace {

IclInstance toy() {
  // d = 1, x = (1, 1), y = (1, 3)
  IclInstance in;
  in.xs = Matrix::Ones(2, 1);
  in.ys = (Vector(2) << 1, 3).finished();
  in.x_query = Vector::Constant(1, 2.0);
  return in;
}

IclInstance random_instance(std::mt19937_64& g, Index N, Index d, double noise = 0.1) {
  std::normal_distribution<double> n01;
  IclInstance in;
  in.xs = Matrix::NullaryExpr(N, d, [&] { return n01(g); });
  const Vector w = Vector::NullaryExpr(d, [&] { return n01(g); });
  in.ys = in.xs * w + noise * Vector::NullaryExpr(N, [&] { return n01(g); });
  in.x_query = Vector::NullaryExpr(d, [&] { return n01(g); });
  return in;
}

double logistic(double t) { return 1 / (1 + std::exp(-t)); }

}  // namespace

// ---- sum-of-relus ----

TEST(SumOfRelus, ExactSquareLossDerivative) {
  const SumOfRelus r = exact_square_loss_grad();
  EXPECT_DOUBLE_EQ(r.eval(3, 1), 2);
  EXPECT_DOUBLE_EQ(r.eval(0, 0), 0);
  for (double s = -4; s <= 4; s += 0.37)
    for (double t = -4; t <= 4; t += 0.41) EXPECT_NEAR(r.eval(s, t), s - t, 1e-14);
}

TEST(SumOfRelus, CertifyExactRepIsZeroAndDroppedTermIsNot) {
  SumOfRelus r = exact_square_loss_grad();
  const ScalarFn f = [](const Vector& z) { return z(0) - z(1); };
  EXPECT_NEAR(certify(r, f, 65), 0.0, 1e-14);
  r.terms.pop_back();
  EXPECT_GT(certify(r, f, 65), 0.1);
}

TEST(SumOfRelus, BinaryPsi) {
  const SumOfRelus psi = exact_binary_psi(0.1);
  EXPECT_NEAR(psi.eval(0.0), 1, 1e-14);
  EXPECT_NEAR(psi.eval(1.0), 1, 1e-14);
  EXPECT_NEAR(psi.eval(0.5), 0, 1e-14);
  EXPECT_NEAR(psi.eval(0.95), 0.5, 1e-14);
  EXPECT_NEAR(psi.eval(-0.05), 0.5, 1e-14);
  EXPECT_NEAR(psi.eval(3.0), 0, 1e-13);
}

TEST(FitSmooth, IdentityIsRecovered) {
  const SumOfRelus r = fit_smooth([](const Vector& z) { return z(0); }, 1, 1.0, 1e-9, 64);
  for (double z = -1; z <= 1; z += 0.01) EXPECT_NEAR(r.eval(z), z, 1e-9);
}

TEST(FitSmooth, SigmoidCertified) {
  const SumOfRelus r = fit_smooth([](const Vector& z) { return logistic(z(0)); }, 1, 5.0, 1e-3, 4096);
  EXPECT_LE(r.eps, 1e-3);
  // independent check on an offset grid the certifier never saw
  double worst = 0;
  for (double z = -5 + 0.0013; z < 5; z += 0.0071) worst = std::max(worst, std::abs(r.eval(z) - logistic(z)));
  EXPECT_LE(worst, 1.2e-3);
  for (const auto& t : r.terms) EXPECT_LE(t.a.lpNorm<1>(), 1 + 1e-12);
}

TEST(FitSmooth, ActivationDerivativeProductCertified) {
  const ScalarFn f = [](const Vector& z) {
    const double c = std::cosh(z(1));
    return z(0) / (c * c);
  };
  const SumOfRelus r = fit_smooth(f, 2, 3.0, 1e-2, 2048);
  EXPECT_LE(r.eps, 1e-2);
  EXPECT_NEAR(r.eval(1.3, -0.4), f((Vector(2) << 1.3, -0.4).finished()), 1.5e-2);
}

TEST(FitSmooth, BudgetExhaustedCarriesBestError) {
  try {
    fit_smooth([](const Vector& z) { return std::sin(8 * z(0)); }, 1, 3.0, 1e-8, 16);
    FAIL() << "expected FitError";
  } catch (const FitError& e) {
    EXPECT_GT(e.best_eps(), 1e-8);
    EXPECT_TRUE(std::isfinite(e.best_eps()));
  }
}

// ---- closed forms and trajectories ----

TEST(Ridge, HandValues) {
  EXPECT_NEAR(ridge_closed_form(toy(), 1.0)(0), 1.0, 1e-14);
  EXPECT_NEAR(ridge_closed_form(toy(), 0.0)(0), 2.0, 1e-14);
  EXPECT_NEAR(least_squares(toy())(0), 2.0, 1e-14);
}

TEST(Ridge, FirstOrderConditionAndShrinkage) {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 20; ++trial) {
    const IclInstance in = random_instance(g, 12, 4);
    const double lam = 0.01 + trial * 0.3;
    const Vector w = ridge_closed_form(in, lam);
    const double N = static_cast<double>(in.N());
    const Vector residual = in.xs.transpose() * (in.xs * w - in.ys) / N + lam * w;
    EXPECT_LE(residual.norm(), 1e-10);
    EXPECT_LE(w.norm(), (in.xs.transpose() * in.ys / N).norm() / lam + 1e-12);
  }
}

TEST(Ridge, UnderdeterminedLeastSquaresRejected) {
  std::mt19937_64 g(1);
  EXPECT_THROW(ridge_closed_form(random_instance(g, 2, 5), 0.0), std::runtime_error);
}

TEST(Trajectory, GdHandValues) {
  const auto w = gd_trajectory(toy(), 0.5, 3, 0.0, square_loss_grad());
  EXPECT_DOUBLE_EQ(w[0](0), 0.0);
  EXPECT_DOUBLE_EQ(w[1](0), 1.0);
  EXPECT_DOUBLE_EQ(w[2](0), 1.5);
  for (const auto& v : gd_trajectory(toy(), 0.0, 5, 0.0, square_loss_grad())) EXPECT_EQ(v(0), 0.0);
}

TEST(Trajectory, GdDecreasesStronglyConvexLoss) {
  std::mt19937_64 g(5);
  const IclInstance in = random_instance(g, 30, 5);
  const double L = covariance_spectrum(in).second;
  const auto w = gd_trajectory(in, 1 / L, 40, 0.0, square_loss_grad());
  for (size_t t = 1; t < w.size(); ++t) EXPECT_LE(square_risk(in, w[t]), square_risk(in, w[t - 1]) + 1e-15);
}

TEST(Trajectory, ProxHandValueAndMonotone) {
  const auto w = prox_gd_trajectory(toy(), 1.0, 1, Regularizer::l1(1.0));
  EXPECT_DOUBLE_EQ(w[1](0), 1.0);
  std::mt19937_64 g(9);
  const IclInstance in = random_instance(g, 25, 6);
  const double beta = covariance_spectrum(in).second;
  const auto traj = prox_gd_trajectory(in, 1 / beta, 60, Regularizer::l1(0.05));
  for (size_t t = 1; t < traj.size(); ++t)
    EXPECT_LE(lasso_objective(in, traj[t], 0.05), lasso_objective(in, traj[t - 1], 0.05) + 1e-15);
}

TEST(Prox, Operators) {
  const Vector v = (Vector(3) << 1.0, -0.2, 1.5).finished();
  const Vector s = prox(Regularizer::l1(0.3), v, 1.0);
  EXPECT_NEAR(s(0), 0.7, 1e-15);
  EXPECT_EQ(s(1), 0.0);
  EXPECT_EQ(prox(Regularizer::box(1.0), v, 0.7)(2), 1.0);
  EXPECT_NEAR(prox(Regularizer::l2(1.0), v, 0.5)(0), 1.0 / 1.5, 1e-15);
  EXPECT_EQ(prox(Regularizer::none(), v, 0.5), v);
}

TEST(Lasso, SolverSatisfiesSubgradientCondition) {
  std::mt19937_64 g(11);
  const IclInstance in = random_instance(g, 40, 6);
  const double lam = 0.1;
  const Vector w = lasso_solve(in, lam);
  const Vector grad = in.xs.transpose() * (in.xs * w - in.ys) / static_cast<double>(in.N());
  for (Index j = 0; j < w.size(); ++j) {
    if (w(j) != 0) EXPECT_NEAR(grad(j), -lam * (w(j) > 0 ? 1 : -1), 1e-8);
    else EXPECT_LE(std::abs(grad(j)), lam + 1e-8);
  }
}

TEST(Logistic, RegressionZeroesTheGradient) {
  std::mt19937_64 g(2);
  IclInstance in = random_instance(g, 60, 3);
  std::uniform_real_distribution<double> u;
  for (Index i = 0; i < in.N(); ++i) in.ys(i) = u(g) < logistic(0.5 * in.xs.row(i).sum()) ? 1 : 0;
  const Vector w = logistic_regression(in);
  Vector grad = Vector::Zero(3);
  for (Index i = 0; i < in.N(); ++i) grad += (logistic(in.xs.row(i).dot(w)) - in.ys(i)) * in.xs.row(i).transpose();
  EXPECT_LE(grad.norm() / static_cast<double>(in.N()), 1e-9);
}

// ---- two-layer network ----

TEST(Network, GradientMatchesCentralDifferences) {
  std::mt19937_64 g(4);
  const IclInstance in = random_instance(g, 10, 3);
  const int K = 2;
  std::normal_distribution<double> n01;
  const Vector w = 0.5 * Vector::NullaryExpr(K * 4, [&] { return n01(g); });
  const Activation act = Activation::tanh();
  const Vector grad = nn_grad(in, w, K, act);
  for (Index j = 0; j < w.size(); ++j) {
    const double h = 1e-5;
    Vector wp = w, wm = w;
    wp(j) += h;
    wm(j) -= h;
    const double fd = (nn_objective(in, wp, K, act) - nn_objective(in, wm, K, act)) / (2 * h);
    EXPECT_NEAR(grad(j), fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Network, LinearSingleUnitIsLinearGd) {
  // K = 1, identity activation and u fixed at 1 by the box: pred = <v, x>
  std::mt19937_64 g(8);
  const IclInstance in = random_instance(g, 20, 2);
  const Vector w0 = (Vector(3) << 0.0, 0.0, 1.0).finished();
  const auto traj = nn_gd_trajectory(in, 1, Activation::identity(), 0.1, 1, 100.0, w0);
  const Vector g_lin = empirical_grad(in, Vector::Zero(2), square_loss_grad());
  EXPECT_TRUE(traj[1].head(2).isApprox(-0.1 * g_lin, 1e-12));
}

TEST(Network, BoxProjectionClamps) {
  const Vector w = (Vector(3) << 2.0, -3.0, 0.1).finished();
  EXPECT_EQ(box_project(w, 0.5), (Vector(3) << 0.5, -0.5, 0.1).finished());
}

// ---- mixed-noise Bayes ----

TEST(Bayes, SingleComponentIsRidge) {
  std::mt19937_64 g(6);
  const IclInstance in = random_instance(g, 15, 4, 0.3);
  const double sigma = 0.3;
  const double lam = 4 * sigma * sigma / 15.0;
  const double bayes = bayes_mixed_noise_predict({{sigma}, {1.0}}, in);
  EXPECT_NEAR(bayes, ridge_closed_form(in, lam).dot(in.x_query), 1e-10);
}

TEST(Bayes, PermutationInvariantAndNormalized) {
  std::mt19937_64 g(7);
  const IclInstance in = random_instance(g, 20, 3, 0.5);
  std::vector<double> post;
  const double a = bayes_mixed_noise_predict({{0.1, 0.5, 2.0}, {0.2, 0.5, 0.3}}, in, &post);
  const double b = bayes_mixed_noise_predict({{2.0, 0.1, 0.5}, {0.3, 0.2, 0.5}}, in);
  EXPECT_NEAR(a, b, 1e-12);
  double s = 0;
  for (double p : post) s += p;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Bayes, ExtremeScalesStayFinite) {
  std::mt19937_64 g(12);
  const IclInstance in = random_instance(g, 512, 4, 1.0);
  std::vector<double> post;
  const double y = bayes_mixed_noise_predict({{1e-3, 1.0, 1e3}, {1 / 3.0, 1 / 3.0, 1 / 3.0}}, in, &post);
  EXPECT_TRUE(std::isfinite(y));
  double s = 0;
  for (double p : post) {
    EXPECT_TRUE(std::isfinite(p));
    s += p;
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Bayes, PosteriorConcentratesOnTrueNoise) {
  std::mt19937_64 g(13);
  double prev = 0;
  for (Index N : {8, 64, 256}) {
    double mean = 0;
    for (int r = 0; r < 20; ++r) {
      const IclInstance in = random_instance(g, N, 4, 0.1);
      std::vector<double> post;
      bayes_mixed_noise_predict({{0.1, 1.0}, {0.5, 0.5}}, in, &post);
      mean += post[0] / 20;
    }
    EXPECT_GE(mean, prev - 0.02);
    prev = mean;
  }
  EXPECT_GT(prev, 0.99);
}

// ---- validation loss, baselines ----

TEST(ValLoss, SinglePoint) {
  IclInstance in;
  in.xs = (Matrix(2, 1) << 5, 1).finished();
  in.ys = (Vector(2) << 0, 2).finished();
  in.x_query = Vector::Zero(1);
  in.split = {1, -1};
  EXPECT_DOUBLE_EQ(val_loss(in, [](const Vector& x) { return x(0); }), 0.5);
}

TEST(Baselines, AveragingFormula) {
  std::mt19937_64 g(14);
  const IclInstance in = random_instance(g, 9, 3);
  Vector w = Vector::Zero(3);
  for (Index i = 0; i < in.N(); ++i) w += in.ys(i) * in.xs.row(i).transpose() / 9.0;
  EXPECT_NEAR(averaging_predict(in), w.dot(in.x_query), 1e-13);
}

TEST(Baselines, NearestNeighbourDuplicateOfQuery) {
  std::mt19937_64 g(15);
  IclInstance in = random_instance(g, 10, 2);
  in.x_query = in.xs.row(4).transpose();
  EXPECT_DOUBLE_EQ(knn_predict(in, 3), in.ys(4));
}

TEST(ScalarTests, BinaryAndLinearReferences) {
  IclInstance in;
  in.xs = Matrix::Ones(4, 1);
  in.ys = (Vector(4) << 0, 1, 1, 0).finished();
  in.x_query = Vector::Ones(1);
  ScalarTests t = scalar_tests(in, 0.1, 1, 1);
  EXPECT_DOUBLE_EQ(t.binary, 1);
  EXPECT_DOUBLE_EQ(t.binary_thres, 1);
  in.xs = Matrix::Ones(2, 1);
  in.ys = (Vector(2) << 0, 0.95).finished();
  t = scalar_tests(in, 0.1, 1, 1);
  EXPECT_NEAR(t.binary, 0.75, 1e-14);
  EXPECT_NEAR(t.binary_thres, 0.5, 1e-14);
  in.ys = (Vector(2) << 0.5, 0.5).finished();
  t = scalar_tests(in, 0.1, 1, 1);
  EXPECT_EQ(t.binary, 0);
  EXPECT_EQ(t.binary_thres, 0);

  in.xs = (Matrix(2, 1) << 1, -1).finished();
  in.ys = (Vector(2) << 1, -1).finished();
  t = scalar_tests(in, 0.1, 1, 1);
  EXPECT_DOUBLE_EQ(t.corr_sq, 1.0);
  EXPECT_DOUBLE_EQ(t.linear, 1.0);
  in.ys.setZero();
  EXPECT_DOUBLE_EQ(scalar_tests(in, 0.1, 1, 1).linear, 0.0);
  // |t̂|² = (A + B)/2 with A = 1/16, B = 9/16: t̂ = √(5/16)
  in.ys = (Vector(2) << std::sqrt(5.0 / 16), -std::sqrt(5.0 / 16)).finished();
  EXPECT_NEAR(scalar_tests(in, 0.1, 1, 1).linear, 0.5, 1e-12);
}
