#include "icl/relu_approx.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace icl {

double SumOfRelus::C() const {
  double s = 0;
  for (const auto& t : terms) s += std::abs(t.c);
  return s;
}

double SumOfRelus::eval(const Vector& z) const {
  double out = 0;
  for (const auto& t : terms) out += t.c * relu(t.a.head(k).dot(z) + t.a(k));
  return out;
}

double SumOfRelus::eval(double z) const {
  double out = 0;
  for (const auto& t : terms) out += t.c * relu(t.a(0) * z + t.a(1));
  return out;
}

double SumOfRelus::eval(double s, double t) const {
  double out = 0;
  for (const auto& term : terms) out += term.c * relu(term.a(0) * s + term.a(1) * t + term.a(2));
  return out;
}

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Rescales a to unit l1 norm when it exceeds 1, moving the factor into c.
ReluTerm normalised(double c, Vector a) {
  const double n1 = a.lpNorm<1>();
  if (n1 > 1.0) {
    a /= n1;
    c *= n1;
  }
  return {c, std::move(a)};
}

double halton(Index i, int base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};

std::vector<Vector> grid_points(int k, double R, int per_axis) {
  std::vector<Vector> pts;
  Index total = 1;
  for (int j = 0; j < k; ++j) total *= per_axis;
  pts.reserve(static_cast<size_t>(total));
  const double step = per_axis > 1 ? 2 * R / (per_axis - 1) : 0.0;
  for (Index idx = 0; idx < total; ++idx) {
    Vector z(k);
    Index rem = idx;
    for (int j = 0; j < k; ++j) {
      z(j) = -R + step * static_cast<double>(rem % per_axis);
      rem /= per_axis;
    }
    pts.push_back(z);
  }
  return pts;
}

int default_certify_grid(int k) {
  switch (k) {
    case 1: return 2049;
    case 2: return 129;
    default: return 64;
  }
}

int fit_grid(int k, Index M) {
  const double want = 4.0 * static_cast<double>(M);
  switch (k) {
    case 1: return static_cast<int>(std::max(256.0, want));
    case 2: return std::max(64, static_cast<int>(std::ceil(std::sqrt(want))));
    default: return std::max(24, static_cast<int>(std::ceil(std::cbrt(want))));
  }
}

}  // namespace

SumOfRelus exact_square_loss_grad(double R) {
  SumOfRelus rep;
  rep.k = 2;
  rep.R = R;
  rep.exact = true;
  rep.terms = {{2.0, vec({0.5, -0.5, 0.0})}, {-2.0, vec({-0.5, 0.5, 0.0})}};
  return rep;
}

SumOfRelus exact_identity(double R) {
  SumOfRelus rep;
  rep.k = 1;
  rep.R = R;
  rep.exact = true;
  rep.terms = {{1.0, vec({1.0, 0.0})}, {-1.0, vec({-1.0, 0.0})}};
  return rep;
}

SumOfRelus exact_binary_psi(double band) {
  if (!(band > 0) || band >= 0.5) throw std::invalid_argument("binary band must lie in (0, 1/2)");
  SumOfRelus rep;
  rep.k = 1;
  rep.R = 1.0 + 2 * band;
  rep.exact = true;
  // σ((y - y0)/band) with weights (1, -2, 1) at each of the two hats.
  const double knots[6] = {-band, 0.0, band, 1 - band, 1.0, 1 + band};
  const double weight[6] = {1, -2, 1, 1, -2, 1};
  for (int m = 0; m < 6; ++m)
    rep.terms.push_back(normalised(weight[m] / band, vec({1.0, -knots[m]})));
  return rep;
}

std::vector<Vector> l1_sphere_directions(Index M, int k) {
  std::vector<Vector> dirs;
  dirs.reserve(static_cast<size_t>(M));
  if (k == 1) {
    // evenly spaced along the perimeter of the l1 diamond in R^2
    for (Index m = 0; m < M; ++m) {
      const double p = 4.0 * (static_cast<double>(m) + 0.5) / static_cast<double>(M);
      const int edge = static_cast<int>(p);
      const double r = p - edge;
      Vector w(2);
      switch (edge) {
        case 0: w << 1 - r, r; break;
        case 1: w << -r, 1 - r; break;
        case 2: w << -(1 - r), -r; break;
        default: w << r, -(1 - r); break;
      }
      dirs.push_back(w);
    }
    return dirs;
  }
  // Halton points pushed through the exponential-spacings map, which sends
  // uniform points to uniform points on the l1 sphere.
  const int dim = k + 1;
  for (Index m = 1; m <= M; ++m) {
    Vector w(dim);
    double total = 0;
    for (int j = 0; j < dim; ++j) {
      const double u = halton(m, kPrimes[j]);
      w(j) = -std::log1p(-u);
      total += w(j);
    }
    for (int j = 0; j < dim; ++j) {
      const double s = halton(m, kPrimes[dim + j]);
      w(j) = (s < 0.5 ? 1.0 : -1.0) * w(j) / total;
    }
    dirs.push_back(w);
  }
  return dirs;
}

double certify(SumOfRelus& rep, const ScalarFn& f, int grid_points_per_axis) {
  if (grid_points_per_axis < 64) throw std::invalid_argument("certification grid needs >= 64 points per axis");
  double worst = 0;
  for (const auto& z : grid_points(rep.k, rep.R, grid_points_per_axis))
    worst = std::max(worst, std::abs(rep.eval(z) - f(z)));
  rep.eps = worst;
  rep.grid = grid_points_per_axis;
  return worst;
}

SumOfRelus fit_smooth(const ScalarFn& f, int k, double R, double target_eps, Index M_max,
                      const FitOptions& opts) {
  if (k < 1 || k > 3) throw std::invalid_argument("fit_smooth supports 1 to 3 variables");
  if (!(R > 0) || !(target_eps > 0)) throw std::invalid_argument("fit_smooth needs R > 0 and eps > 0");
  const int cgrid = opts.certify_grid ? opts.certify_grid : default_certify_grid(k);

  double best = std::numeric_limits<double>::infinity();
  std::vector<Index> sizes;
  for (Index M = std::min(opts.M_start, M_max); M < M_max; M *= 2) sizes.push_back(M);
  sizes.push_back(M_max);
  for (const Index M : sizes) {
    const auto dirs = l1_sphere_directions(M, k);
    // a_m = [w_{1:k} / R; w_{k+1}] so that inputs on [-R, R]^k are rescaled to the unit box
    std::vector<Vector> a(dirs.size());
    for (size_t m = 0; m < dirs.size(); ++m) {
      a[m] = dirs[m];
      a[m].head(k) /= R;
    }
    const auto pts = grid_points(k, R, fit_grid(k, M));
    const Index n = static_cast<Index>(pts.size());
    Matrix Phi(n, M);
    Vector y(n);
    for (Index i = 0; i < n; ++i) {
      y(i) = f(pts[static_cast<size_t>(i)]);
      for (Index m = 0; m < M; ++m)
        Phi(i, m) = relu(a[static_cast<size_t>(m)].head(k).dot(pts[static_cast<size_t>(i)]) +
                         a[static_cast<size_t>(m)](k));
    }
    Matrix G = Matrix::Zero(M, M);
    G.selfadjointView<Eigen::Lower>().rankUpdate(Phi.transpose());
    G = G.selfadjointView<Eigen::Lower>();
    const double scale = G.diagonal().mean();
    G.diagonal().array() += opts.ridge * (scale > 0 ? scale : 1.0);
    const Vector coef = G.ldlt().solve(Phi.transpose() * y);

    SumOfRelus rep;
    rep.k = k;
    rep.R = R;
    for (Index m = 0; m < M; ++m)
      if (coef(m) != 0) rep.terms.push_back(normalised(coef(m), a[static_cast<size_t>(m)]));
    const double err = certify(rep, f, cgrid);
    best = std::min(best, err);
    if (err <= target_eps) return rep;
  }
  std::ostringstream msg;
  msg << "fit_smooth: budget M_max=" << M_max << " exhausted, best sup-error " << best
      << " > target " << target_eps;
  throw FitError(msg.str(), best);
}

SumOfRelus lift_link_to_loss_grad(const SumOfRelus& g) {
  if (g.k != 1) throw std::invalid_argument("link rep must have one input");
  SumOfRelus out;
  out.k = 2;
  out.R = g.R;
  out.eps = g.eps;
  out.grid = g.grid;
  out.exact = g.exact;
  for (const auto& t : g.terms) {
    Vector a(3);
    a << t.a(0), 0.0, t.a(1);
    out.terms.push_back({t.c, a});
  }
  // −t = −σ(t) + σ(−t), exact
  out.terms.push_back({-1.0, vec({0.0, 1.0, 0.0})});
  out.terms.push_back({1.0, vec({0.0, -1.0, 0.0})});
  return out;
}

}  // namespace icl
