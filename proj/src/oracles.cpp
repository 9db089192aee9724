#include "icl/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace icl {

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

LossGrad square_loss_grad() {
  return [](double s, double y) { return s - y; };
}

LossGrad logistic_loss_grad() {
  return [](double s, double y) { return sigmoid(s) - y; };
}

namespace {

// Solves a symmetric system, Cholesky first, dense LU as the fallback.
Vector solve_spd(const Matrix& A, const Vector& b) {
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() == Eigen::Success) return llt.solve(b);
  Eigen::FullPivLU<Matrix> lu(A);
  if (!lu.isInvertible()) throw std::runtime_error("singular linear system");
  const double rcond = lu.rcond();
  if (rcond < 1e-12) std::cerr << "warning: ill-conditioned solve, rcond " << rcond << "\n";
  return lu.solve(b);
}

double log1pexp(double s) { return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

}  // namespace

Vector ridge_closed_form(const IclInstance& inst, double lambda) {
  if (lambda < 0) throw std::invalid_argument("ridge coefficient must be nonnegative");
  const double N = static_cast<double>(inst.N());
  if (lambda == 0 && inst.N() < inst.d()) throw std::runtime_error("least squares is singular with N < d");
  Matrix A = inst.xs.transpose() * inst.xs / N;
  A.diagonal().array() += lambda;
  return solve_spd(A, inst.xs.transpose() * inst.ys / N);
}

Vector least_squares(const IclInstance& inst) {
  if (inst.N() >= inst.d()) {
    try {
      return ridge_closed_form(inst, 0.0);
    } catch (const std::runtime_error&) {
    }
  }
  // minimum-norm solution when underdetermined or singular
  return inst.xs.completeOrthogonalDecomposition().solve(inst.ys);
}

Vector empirical_grad(const IclInstance& inst, const Vector& w, const LossGrad& grad, double lambda) {
  const Vector s = inst.xs * w;
  Vector r(inst.N());
  for (Index i = 0; i < inst.N(); ++i) r(i) = grad(s(i), inst.ys(i));
  Vector g = inst.xs.transpose() * r / static_cast<double>(inst.N());
  if (lambda != 0) g += lambda * w;
  return g;
}

std::vector<Vector> gd_trajectory(const IclInstance& inst, double eta, int steps, double lambda_l2,
                                  const LossGrad& grad, const Vector& w0) {
  if (steps < 0) throw std::invalid_argument("steps must be nonnegative");
  std::vector<Vector> traj;
  Vector w = w0.size() ? w0 : Vector::Zero(inst.d());
  traj.push_back(w);
  for (int t = 0; t < steps; ++t) {
    w = w - eta * empirical_grad(inst, w, grad, lambda_l2);
    traj.push_back(w);
  }
  return traj;
}

double Regularizer::value(const Vector& w) const {
  switch (kind) {
    case Kind::L1: return param * w.lpNorm<1>();
    case Kind::L2: return 0.5 * param * w.squaredNorm();
    case Kind::Box: return w.lpNorm<Eigen::Infinity>() <= param ? 0.0 : std::numeric_limits<double>::infinity();
    default: return 0.0;
  }
}

Vector prox(const Regularizer& reg, const Vector& v, double eta) {
  switch (reg.kind) {
    case Regularizer::Kind::L1: {
      const double tau = eta * reg.param;
      return v.unaryExpr([tau](double x) { return x > tau ? x - tau : (x < -tau ? x + tau : 0.0); });
    }
    case Regularizer::Kind::L2: return v / (1.0 + eta * reg.param);
    case Regularizer::Kind::Box: return box_project(v, reg.param);
    default: return v;
  }
}

std::vector<Vector> prox_gd_trajectory(const IclInstance& inst, double eta, int steps, const Regularizer& reg) {
  std::vector<Vector> traj;
  Vector w = Vector::Zero(inst.d());
  traj.push_back(w);
  const auto g = square_loss_grad();
  for (int t = 0; t < steps; ++t) {
    w = prox(reg, w - eta * empirical_grad(inst, w, g), eta);
    traj.push_back(w);
  }
  return traj;
}

double square_risk(const IclInstance& inst, const Vector& w) {
  return 0.5 * (inst.xs * w - inst.ys).squaredNorm() / static_cast<double>(inst.N());
}

double lasso_objective(const IclInstance& inst, const Vector& w, double lambda) {
  return square_risk(inst, w) + lambda * w.lpNorm<1>();
}

double logistic_objective(const IclInstance& inst, const Vector& w) {
  const Vector s = inst.xs * w;
  double out = 0;
  for (Index i = 0; i < inst.N(); ++i) out += -inst.ys(i) * s(i) + log1pexp(s(i));
  return out / static_cast<double>(inst.N());
}

std::pair<double, double> covariance_spectrum(const IclInstance& inst) {
  const Matrix S = inst.xs.transpose() * inst.xs / static_cast<double>(inst.N());
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  return {es.eigenvalues()(0), es.eigenvalues()(es.eigenvalues().size() - 1)};
}

Vector lasso_solve(const IclInstance& inst, double lambda, int max_iter, double tol) {
  const double beta = std::max(covariance_spectrum(inst).second, 1e-12);
  const double eta = 1.0 / beta;
  const auto g = square_loss_grad();
  const auto reg = Regularizer::l1(lambda);
  Vector w = Vector::Zero(inst.d()), z = w;
  double theta = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    const Vector next = prox(reg, z - eta * empirical_grad(inst, z, g), eta);
    const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    z = next + ((theta - 1.0) / theta_next) * (next - w);
    const double change = (next - w).norm();
    w = next;
    theta = theta_next;
    if (change <= tol) break;
  }
  return w;
}

Vector logistic_regression(const IclInstance& inst, int max_iter, double tol) {
  const Index d = inst.d();
  const double N = static_cast<double>(inst.N());
  Vector w = Vector::Zero(d);
  for (int it = 0; it < max_iter; ++it) {
    const Vector s = inst.xs * w;
    Vector r(inst.N()), curv(inst.N());
    for (Index i = 0; i < inst.N(); ++i) {
      const double p = sigmoid(s(i));
      r(i) = p - inst.ys(i);
      curv(i) = p * (1 - p);
    }
    const Vector g = inst.xs.transpose() * r / N;
    if (g.norm() <= tol) break;
    Matrix Hs = inst.xs.transpose() * curv.asDiagonal() * inst.xs / N;
    Hs.diagonal().array() += 1e-14;
    const Vector step = solve_spd(Hs, g);
    double a = 1.0;
    const double f0 = logistic_objective(inst, w);
    while (a > 1e-10 && logistic_objective(inst, w - a * step) > f0 - 1e-4 * a * g.dot(step)) a *= 0.5;
    w -= a * step;
  }
  return w;
}

double logistic_curvature(const IclInstance& inst, const Vector& w) {
  const Vector s = inst.xs * w;
  Vector curv(inst.N());
  for (Index i = 0; i < inst.N(); ++i) {
    const double p = sigmoid(s(i));
    curv(i) = p * (1 - p);
  }
  const Matrix Hs = inst.xs.transpose() * curv.asDiagonal() * inst.xs / static_cast<double>(inst.N());
  Eigen::SelfAdjointEigenSolver<Matrix> es(Hs, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

Activation Activation::tanh() {
  return {[](double t) { return std::tanh(t); },
          [](double t) {
            const double c = std::tanh(t);
            return 1 - c * c;
          },
          [](double t) {
            const double c = std::tanh(t);
            return -2 * c * (1 - c * c);
          }};
}

Activation Activation::identity() {
  return {[](double t) { return t; }, [](double) { return 1.0; }, [](double) { return 0.0; }};
}

double nn_predict(const Vector& x, const Vector& w, int K, const Activation& act) {
  const Index d = x.size();
  double out = 0;
  for (int k = 0; k < K; ++k) {
    const Index o = k * (d + 1);
    out += w(o + d) * act.r(w.segment(o, d).dot(x));
  }
  return out;
}

double nn_objective(const IclInstance& inst, const Vector& w, int K, const Activation& act) {
  double out = 0;
  for (Index i = 0; i < inst.N(); ++i) {
    const double e = nn_predict(inst.xs.row(i).transpose(), w, K, act) - inst.ys(i);
    out += 0.5 * e * e;
  }
  return out / static_cast<double>(inst.N());
}

Vector nn_grad(const IclInstance& inst, const Vector& w, int K, const Activation& act) {
  const Index d = inst.d();
  Vector g = Vector::Zero(w.size());
  for (Index i = 0; i < inst.N(); ++i) {
    const Vector x = inst.xs.row(i).transpose();
    const double e = nn_predict(x, w, K, act) - inst.ys(i);
    for (int k = 0; k < K; ++k) {
      const Index o = k * (d + 1);
      const double z = w.segment(o, d).dot(x);
      g.segment(o, d) += e * w(o + d) * act.dr(z) * x;
      g(o + d) += e * act.r(z);
    }
  }
  return g / static_cast<double>(inst.N());
}

Vector box_project(const Vector& w, double radius) { return w.cwiseMax(-radius).cwiseMin(radius); }

std::vector<Vector> nn_gd_trajectory(const IclInstance& inst, int K, const Activation& act, double eta,
                                     int steps, double box_radius, const Vector& w0) {
  if (w0.size() != K * (inst.d() + 1)) throw std::invalid_argument("w0 must have K(d+1) entries");
  std::vector<Vector> traj{w0};
  Vector w = w0;
  for (int t = 0; t < steps; ++t) {
    w = box_project(w - eta * nn_grad(inst, w, K, act), box_radius);
    traj.push_back(w);
  }
  return traj;
}

double bayes_mixed_noise_predict(const MixedNoiseModel& model, const IclInstance& inst,
                                 std::vector<double>* posterior) {
  const size_t K = model.sigmas.size();
  if (K == 0 || model.weights.size() != K) throw std::invalid_argument("mixture needs matching sigmas and weights");
  const Index d = inst.d();
  const double N = static_cast<double>(inst.N());
  const Matrix XtX = inst.xs.transpose() * inst.xs;
  const Vector Xty = inst.xs.transpose() * inst.ys;
  const double yy = inst.ys.squaredNorm();

  std::vector<double> logw(K, -std::numeric_limits<double>::infinity());
  std::vector<Vector> what(K);
  for (size_t k = 0; k < K; ++k) {
    const double s = model.sigmas[k];
    if (!(s > 0)) throw std::invalid_argument("noise levels must be positive");
    Matrix A = XtX;
    A.diagonal().array() += static_cast<double>(d) * s * s;
    Eigen::LLT<Matrix> llt(A);
    what[k] = llt.solve(Xty);
    if (model.weights[k] <= 0) continue;
    const double logdet = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
    logw[k] = std::log(model.weights[k]) - (N - static_cast<double>(d)) * std::log(s) - 0.5 * logdet -
              (yy - Xty.dot(what[k])) / (2 * s * s);
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  std::vector<double> p(K);
  double total = 0;
  for (size_t k = 0; k < K; ++k) total += p[k] = std::exp(logw[k] - top);
  Vector w = Vector::Zero(d);
  for (size_t k = 0; k < K; ++k) {
    p[k] /= total;
    w += p[k] * what[k];
  }
  if (posterior) *posterior = p;
  return w.dot(inst.x_query);
}

double val_loss(const IclInstance& inst, const std::function<double(const Vector&)>& f) {
  double total = 0;
  Index n = 0;
  for (Index i = 0; i < inst.N(); ++i) {
    if (inst.tag(i) != -1) continue;
    const double e = f(inst.xs.row(i).transpose()) - inst.ys(i);
    total += 0.5 * e * e;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("instance has no validation examples");
  return total / static_cast<double>(n);
}

double binary_psi(double y, double band) {
  const double dist = std::min(std::abs(y), std::abs(y - 1));
  return std::max(0.0, 1.0 - dist / band);
}

ScalarTests scalar_tests(const IclInstance& inst, double band, double lambda_min, double bw_star) {
  ScalarTests out;
  for (Index i = 0; i < inst.N(); ++i) out.binary += binary_psi(inst.ys(i), band);
  out.binary /= static_cast<double>(inst.N());
  out.binary_thres = relu(2 * (out.binary - 0.5)) - relu(2 * (out.binary - 1.0));
  const Vector t = inst.xs.transpose() * inst.ys / static_cast<double>(inst.N());
  out.corr_sq = t.squaredNorm();
  const double A = std::pow(lambda_min * bw_star / 4, 2), B = std::pow(3 * lambda_min * bw_star / 4, 2);
  out.linear = (relu(out.corr_sq - A) - relu(out.corr_sq - B)) / (B - A);
  return out;
}

double averaging_predict(const IclInstance& inst) {
  const Vector w = inst.xs.transpose() * inst.ys / static_cast<double>(inst.N());
  return w.dot(inst.x_query);
}

// Inverse-distance weighted k-NN; an exact match takes all the weight.
double knn_predict(const IclInstance& inst, int k) {
  const Index N = inst.N();
  std::vector<std::pair<double, Index>> dist(static_cast<size_t>(N));
  for (Index i = 0; i < N; ++i)
    dist[static_cast<size_t>(i)] = {(inst.xs.row(i).transpose() - inst.x_query).norm(), i};
  const size_t kk = std::min<size_t>(static_cast<size_t>(k), dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(kk), dist.end());
  double exact = 0;
  int n_exact = 0;
  for (size_t j = 0; j < kk; ++j)
    if (dist[j].first == 0) {
      exact += inst.ys(dist[j].second);
      ++n_exact;
    }
  if (n_exact) return exact / n_exact;
  double num = 0, den = 0;
  for (size_t j = 0; j < kk; ++j) {
    num += inst.ys(dist[j].second) / dist[j].first;
    den += 1.0 / dist[j].first;
  }
  return num / den;
}

}  // namespace icl
