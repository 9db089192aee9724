#pragma once

#include "icl/tf.hpp"

#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace icl {

// c · σ(<a, [z; 1]>) with |a|_1 <= 1.
struct ReluTerm {
  double c = 0;
  Vector a;
};

// f(z) = Σ_m c_m σ(<a_m, [z; 1]>), certified to within `eps` on [-R, R]^k.
struct SumOfRelus {
  int k = 1;
  double R = 1;
  std::vector<ReluTerm> terms;
  double eps = 0;       // certified sup-error on the domain
  int grid = 0;         // grid points per axis used to certify (0 = exact by construction)
  bool exact = false;   // the identity holds on all of R^k, not only on the grid

  Index M() const { return static_cast<Index>(terms.size()); }
  double C() const;     // Σ |c_m|
  double eval(const Vector& z) const;
  double eval(double z) const;
  double eval(double s, double t) const;
};

using ScalarFn = std::function<double(const Vector&)>;

class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, double best) : std::runtime_error(what), best_(best) {}
  double best_eps() const { return best_; }

 private:
  double best_;
};

// (s, t) ↦ s − t = 2σ((s−t)/2) − 2σ(−(s−t)/2).
SumOfRelus exact_square_loss_grad(double R = 1.0);

// z ↦ z = σ(z) − σ(−z).
SumOfRelus exact_identity(double R = 1.0);

// Hat functions of half-width `band` around 0 and 1; equals 1 on {0, 1}, 0 outside
// the two bands, linear in between.
SumOfRelus exact_binary_psi(double band);

struct FitOptions {
  Index M_start = 8;
  int certify_grid = 0;     // 0 picks a default per arity (>= 64 per axis)
  double ridge = 1e-12;     // relative Tikhonov weight on the coefficients
};

// Deterministic fitter: fixed quasi-uniform directions on the l1 sphere of R^{k+1},
// least-squares coefficients on a grid, M doubled until the certified error meets
// target_eps.  Throws FitError carrying the best error if M_max is reached.
SumOfRelus fit_smooth(const ScalarFn& f, int k, double R, double target_eps, Index M_max,
                      const FitOptions& opts = {});

// Max |rep(z) − f(z)| on the uniform grid over [-R, R]^k; stores it in rep.
double certify(SumOfRelus& rep, const ScalarFn& f, int grid_points_per_axis);

// Lifts a one-variable rep of g to the two-variable rep of (s, t) ↦ g(s) − t.
SumOfRelus lift_link_to_loss_grad(const SumOfRelus& g);

// Quasi-uniform unit-l1 directions in R^{k+1} used by the fitter.
std::vector<Vector> l1_sphere_directions(Index M, int k);

}  // namespace icl
