#include "vstop/dispersion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace vstop {

cplx a_interior(const Profile& prof, cplx z, double eps) {
  if (z.imag() > -0.5 * eps) throw std::domain_error("a_interior needs Im z <= -eps; use a_boundary");
  if (prof.empty()) return 0.0;
  const double x = z.real(), y = z.imag();
  if (prof.compact()) {
    // a(z) = int m'(u)/(u+z) du over the support, with the near pole at u = -x subtracted.
    const double R = prof.velocity_cutoff();
    const double u0 = std::clamp(-x, -R, R);
    const double f0 = prof.marginal_deriv(u0);
    auto g = [&](double u) -> cplx { return (prof.marginal_deriv(u) - f0) / (u + z); };
    cplx s = 0.0;
    if (u0 > -R) s += adaptive(g, -R, u0, 1e-12);
    if (u0 < R) s += adaptive(g, u0, R, 1e-12);
    return s + f0 * (std::log(R + z) - std::log(-R + z));
  }
  const double p_lim = std::min(prof.mu_hat_cutoff(), 40.0 / -y);
  auto g = [&](double p) -> cplx {
    return -p * prof.mu_hat_fast(p) * std::exp(p * y) * std::polar(1.0, -p * x);
  };
  double width = std::min(2.0, 4.0 * kPi / std::max(std::abs(x), 1e-12));
  int panels = std::max(1, static_cast<int>(std::ceil(p_lim / width)));
  cplx s = 0.0;
  for (int i = 0; i < panels; ++i)
    s += adaptive_abs(g, p_lim * i / panels, p_lim * (i + 1) / panels, 1e-12 / panels, 12);
  return s;
}

cplx a_boundary(const Profile& prof, double x) {
  if (prof.empty()) return 0.0;
  const double W = prof.velocity_cutoff();
  auto f = [&](double w) { return prof.marginal_deriv(w); };
  const double ax = std::abs(x);
  double re;
  if (ax > W) {
    // Folded form, no singularity inside [0, W].
    re = adaptive([&](double w) { return f(w) * 2.0 * w / (w * w - x * x); }, 0.0, W, 1e-13);
  } else {
    // Symmetric pairing about the pole removes the odd singular part.
    auto h = [&](double s) { return (f(x + s) - f(x - s)) / s; };
    double brk = W - ax;
    re = 0.0;
    if (brk > 0) re += adaptive(h, 0.0, brk, 1e-13);
    re += adaptive(h, brk, W + ax, 1e-13);
  }
  return {re, -kPi * f(x)};
}

std::vector<double> default_x_grid(const Profile& prof, int n) {
  double X = prof.velocity_cutoff() + 8.0;
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = -X + 2.0 * X * i / std::max(1, n - 1);
  return g;
}

std::vector<double> default_xi_grid(int n) {
  std::vector<double> g{0.0};
  for (int i = 0; i < n - 1; ++i) g.push_back(std::pow(10.0, -3.0 + 5.0 * i / std::max(1, n - 2)));
  return g;
}

PenroseReport penrose_margin(const Profile& prof, const std::vector<double>& xi_grid,
                             const std::vector<double>& x_grid, double kappa_min) {
  if (xi_grid.empty() || x_grid.empty()) throw std::invalid_argument("penrose_margin: empty grid");
  PenroseReport rep;
  rep.x = x_grid;
  rep.gamma.resize(x_grid.size());
  parallel_for(x_grid.size(), [&](std::size_t i) { rep.gamma[i] = a_boundary(prof, x_grid[i]); });

  // Interior samples below the axis.
  std::vector<cplx> zint;
  const double W = prof.velocity_cutoff();
  for (int i = 0; i < 41; ++i) {
    double re = -(W + 2.0) + 2.0 * (W + 2.0) * i / 40.0;
    for (int j = 0; j < 11; ++j) zint.emplace_back(re, -std::pow(10.0, -4.0 + 0.5 * j));
  }
  std::vector<cplx> aint(zint.size(), 0.0);
  if (!prof.empty()) parallel_for(zint.size(), [&](std::size_t i) { aint[i] = a_interior(prof, zint[i]); });

  std::vector<double> kap(xi_grid.size());
  parallel_for(xi_grid.size(), [&](std::size_t q) {
    double b = phi_hat(xi_grid[q]);
    double m = std::numeric_limits<double>::infinity();
    for (auto& g : rep.gamma) m = std::min(m, std::abs(1.0 - b * g));
    for (auto& a : aint) m = std::min(m, std::abs(1.0 - b * a));
    kap[q] = m;
  });
  std::size_t worst = std::min_element(kap.begin(), kap.end()) - kap.begin();
  rep.kappa = kap[worst];
  rep.worst_xi = xi_grid[worst];

  rep.margin_at_x.resize(x_grid.size());
  for (std::size_t i = 0; i < x_grid.size(); ++i) {
    double m = std::numeric_limits<double>::infinity();
    for (double k : xi_grid) m = std::min(m, std::abs(1.0 - phi_hat(k) * rep.gamma[i]));
    rep.margin_at_x[i] = m;
  }

  // Winding number of x -> 1 - b* gamma(x), closed through the value 1 at |x| = inf.
  const double bs = phi_hat(rep.worst_xi);
  std::vector<cplx> curve{1.0};
  for (auto& g : rep.gamma) curve.push_back(1.0 - bs * g);
  curve.push_back(1.0);
  double total = 0.0;
  bool coarse = false;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    double d = std::arg(curve[i] / curve[i - 1]);
    if (std::abs(d) > 0.5 * kPi) coarse = true;
    total += d;
  }
  rep.winding = static_cast<int>(std::lround(total / (2.0 * kPi)));
  if (coarse) rep.warnings.push_back("x grid too coarse for a reliable winding number");

  // Crossing of the half-line {y > 1/phi_hat_max} on the real axis.
  double bmax = 0.0;
  for (double k : xi_grid) bmax = std::max(bmax, phi_hat(k));
  for (std::size_t i = 1; i < rep.gamma.size(); ++i) {
    cplx g0 = rep.gamma[i - 1], g1 = rep.gamma[i];
    if ((g0.imag() > 0) != (g1.imag() > 0)) {
      double t = g0.imag() / (g0.imag() - g1.imag());
      double re = g0.real() + t * (g1.real() - g0.real());
      if (re > 1.0 / bmax) rep.crosses_half_line = true;
    }
  }
  rep.stable = rep.kappa >= kappa_min && rep.winding == 0 && !rep.crosses_half_line;
  return rep;
}

}  // namespace vstop
