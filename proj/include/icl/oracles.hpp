#pragma once

#include "icl/instance.hpp"

#include <functional>
#include <vector>

namespace icl {

// ∂_1 ℓ(s, y): derivative of a loss in its prediction argument.
using LossGrad = std::function<double(double s, double y)>;

double sigmoid(double t);
LossGrad square_loss_grad();    // ℓ = (s - y)² / 2
LossGrad logistic_loss_grad();  // ℓ = -ys + log(1 + e^s)

// argmin (1/2N)|Xw - y|² + (λ/2)|w|², via (XᵀX/N + λI) w = Xᵀy/N.
Vector ridge_closed_form(const IclInstance& inst, double lambda);
Vector least_squares(const IclInstance& inst);

// (1/N) Σ ∂_1ℓ(<w, x_i>, y_i) x_i + λ w
Vector empirical_grad(const IclInstance& inst, const Vector& w, const LossGrad& grad, double lambda = 0);

// w^0 = w0 (zero when empty), w^{t+1} = w^t - η ∇L̂(w^t); returns w^0..w^steps.
std::vector<Vector> gd_trajectory(const IclInstance& inst, double eta, int steps, double lambda_l2,
                                  const LossGrad& grad, const Vector& w0 = Vector());

struct Regularizer {
  enum class Kind { None, L1, L2, Box } kind = Kind::None;
  double param = 0;  // λ for L1 / L2, radius for Box

  static Regularizer none() { return {}; }
  static Regularizer l1(double lam) { return {Kind::L1, lam}; }
  static Regularizer l2(double lam) { return {Kind::L2, lam}; }
  static Regularizer box(double radius) { return {Kind::Box, radius}; }
  double value(const Vector& w) const;
};

// prox_{ηR}(v)
Vector prox(const Regularizer& reg, const Vector& v, double eta);

// Proximal gradient on the square loss: w^{t+1} = prox_{ηR}(w^t - η ∇L̂(w^t)).
std::vector<Vector> prox_gd_trajectory(const IclInstance& inst, double eta, int steps,
                                       const Regularizer& reg);

double square_risk(const IclInstance& inst, const Vector& w);  // (1/2N)|Xw - y|²
double lasso_objective(const IclInstance& inst, const Vector& w, double lambda);
double logistic_objective(const IclInstance& inst, const Vector& w);

// Lasso minimiser by accelerated proximal gradient run to a tight tolerance.
Vector lasso_solve(const IclInstance& inst, double lambda, int max_iter = 20000, double tol = 1e-13);

// Unregularised logistic regression via damped Newton.
Vector logistic_regression(const IclInstance& inst, int max_iter = 100, double tol = 1e-12);

// λ_min and λ_max of XᵀX/N.
std::pair<double, double> covariance_spectrum(const IclInstance& inst);

// Smallest eigenvalue of the logistic-loss Hessian at w.
double logistic_curvature(const IclInstance& inst, const Vector& w);

// Two-layer network pred(x; w) = Σ_k u_k r(<v_k, x>), w = [v_1; u_1; ...; v_K; u_K].
struct Activation {
  std::function<double(double)> r, dr, ddr;
  static Activation tanh();
  static Activation identity();
};

double nn_predict(const Vector& x, const Vector& w, int K, const Activation& act);
// Objective (1/N) Σ (pred - y)² / 2 and its gradient.
double nn_objective(const IclInstance& inst, const Vector& w, int K, const Activation& act);
Vector nn_grad(const IclInstance& inst, const Vector& w, int K, const Activation& act);
Vector box_project(const Vector& w, double radius);
// w^{t+1} = Proj_box(w^t - η ∇L̂(w^t)) from w0.
std::vector<Vector> nn_gd_trajectory(const IclInstance& inst, int K, const Activation& act, double eta,
                                     int steps, double box_radius, const Vector& w0);

struct MixedNoiseModel {
  std::vector<double> sigmas;
  std::vector<double> weights;  // prior Λ on the noise levels
};

// Posterior-mean prediction for w* ~ N(0, I/d), noise level k ~ Λ.
// `posterior`, when given, receives P(k | D).
double bayes_mixed_noise_predict(const MixedNoiseModel& model, const IclInstance& inst,
                                 std::vector<double>* posterior = nullptr);

// (1/N_val) Σ_{val} (f(x_i) - y_i)² / 2
double val_loss(const IclInstance& inst, const std::function<double(const Vector&)>& f);

struct ScalarTests {
  double binary = 0;         // Ψ^binary
  double binary_thres = 0;   // σ(2(Ψ - 1/2)) - σ(2(Ψ - 1))
  double linear = 0;         // Ψ^lin
  double corr_sq = 0;        // |(1/N) Σ x_i y_i|²
};
double binary_psi(double y, double band);
ScalarTests scalar_tests(const IclInstance& inst, double band, double lambda_min, double bw_star);

// Baselines
double averaging_predict(const IclInstance& inst);
double knn_predict(const IclInstance& inst, int k = 3);

}  // namespace icl
