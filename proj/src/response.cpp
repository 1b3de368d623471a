#include "vstop/response.hpp"

#include "vstop/dispersion.hpp"
#include "vstop/greens.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vstop {

namespace {

// Speed direction and magnitude; rejects V* = 0.
std::pair<Vec3, double> split_velocity(const Vec3& Vstar) {
  double V = Vstar.norm();
  if (!(V > 0.0)) throw std::invalid_argument("Vstar must be nonzero");
  return {Vstar / V, V};
}

double auto_k_max(const Profile& prof, const ForceGrid& g) {
  if (g.k_max > 0.0) return g.k_max;
  // Phi_hat^2 k^3 below e^-80 relative.
  return std::sqrt(80.0) / prof.params().Phi_width;
}

// Beyond this p, |p mu_hat(p)| < 1e-10: the memory of every mode ends at p/k.
double memory_p(const Profile& prof) {
  double pc = prof.mu_hat_cutoff();
  const double step = 0.01;
  for (double p = pc; p > 0.0; p -= step)
    if (std::abs(p * prof.mu_hat_fast(p)) > 1e-10) return p + step;
  return step;
}

StoppingResult finish(const Vec3& Vstar, double F_par, ForceRoute route) {
  auto [e, V] = split_velocity(Vstar);
  StoppingResult r;
  r.Vstar = Vstar;
  r.force = F_par * e;
  r.A_est = -V * V * F_par;
  r.route = route;
  return r;
}

bool trivial(const Profile& prof) { return prof.empty() || prof.params().Phi_amplitude == 0.0; }

// One demodulated mode sigma(t) = rho_hat(t, xi) e^{i xi.V* (t - R)} at R = t,
// advanced by product integration against hat functions.
class ModeMarch {
 public:
  ModeMarch(const Profile& prof, double k, double omega, double p_mem)
      : prof_(&prof), k_(k), omega_(omega), dt_(std::min(0.05, 0.2 / k)) {
    static const QuadRule q = gauss_legendre(8, 0.0, 1.0);
    const double ph = phi_hat(k), Ph = prof.Phi_hat(k);
    const int e0 = prof.e0();
    auto Kom = [&](double u) {
      return -ph * k * k * u * prof.mu_hat_fast(u * k) * std::polar(1.0, omega * u);
    };
    std::size_t mem = static_cast<std::size_t>(std::ceil(p_mem / (k * dt_))) + 1;
    w_.assign(mem + 1, 0.0);
    // Weights of the hat functions centred at j dt, interval by interval.
    for (std::size_t n = 0; n < mem; ++n) {
      double a = n * dt_;
      for (std::size_t i = 0; i < q.x.size(); ++i) {
        double s = q.x[i], u = a + s * dt_;
        cplx v = q.w[i] * dt_ * Kom(u);
        w_[n] += v * (1.0 - s);
        w_[n + 1] += v * s;
      }
    }
    if (std::abs(w_[0]) >= 0.5) throw NumericalFailure("mode march is not a contraction; reduce dt");
    // Source increments e0 Phi_hat k^2 int u mu_hat(uk) e^{i omega u} du, exact per interval.
    b_scale_ = e0 * Ph * k * k;
    sigma_.push_back(0.0);
    B_ = 0.0;
  }

  double dt() const { return dt_; }

  // Advances to time t (rounded down to the grid) and returns sigma there.
  cplx advance_to(double t) {
    static const QuadRule q = gauss_legendre(8, 0.0, 1.0);
    std::size_t target = static_cast<std::size_t>(std::floor(t / dt_ + 1e-9));
    while (sigma_.size() <= target) {
      std::size_t n = sigma_.size();
      double a = (n - 1) * dt_;
      for (std::size_t i = 0; i < q.x.size(); ++i) {
        double u = a + q.x[i] * dt_;
        B_ += q.w[i] * dt_ * b_scale_ * u * prof_mu(u) * std::polar(1.0, omega_ * u);
      }
      std::size_t J = std::min(n, w_.size() - 1);
      cplx acc = B_;
      for (std::size_t j = 1; j <= J; ++j) acc += w_[j] * sigma_[n - j];
      sigma_.push_back(acc / (1.0 - w_[0]));
    }
    return sigma_[target];
  }

 private:
  double prof_mu(double u) const { return prof_->mu_hat_fast(u * k_); }
  const Profile* prof_;
  double k_, omega_, dt_;
  double b_scale_ = 0.0;
  cplx B_ = 0.0;
  std::vector<cplx> w_;
  std::vector<cplx> sigma_;
};

}  // namespace

std::string route_name(ForceRoute r) { return r == ForceRoute::timedomain ? "timedomain" : "steadystate"; }

ForceGrid force_grid_from(const Config& c) {
  ForceGrid g;
  g.k_nodes = static_cast<int>(c.integer("numerics.k_nodes"));
  g.c_nodes = static_cast<int>(c.integer("numerics.c_nodes"));
  g.plateau_window = c.num("numerics.plateau_window");
  g.plateau_tol = c.num("numerics.plateau_tol");
  g.R_max = c.num("numerics.R_max");
  g.kappa_min = c.num("numerics.kappa_min");
  return g;
}

cplx source_hat(const Profile& prof, double R, const Vec3& Vstar, double t, const Vec3& xi, const Vec3& Xstar) {
  if (t < 0.0 || t > R) throw std::invalid_argument("source_hat needs 0 <= t <= R");
  if (trivial(prof) || t == 0.0) return 0.0;
  const double k = xi.norm();
  if (k == 0.0) return 0.0;
  auto f = [&](double s) -> cplx {
    Vec3 X = Xstar - (R - s) * Vstar;
    return (t - s) * prof.mu_hat_fast((t - s) * k) * std::polar(1.0, -xi.dot(X));
  };
  // mu_hat_fast vanishes for (t-s)k beyond the cutoff.
  const double s0 = std::max(0.0, t - prof.mu_hat_cutoff() / k);
  // Panels short enough to resolve both the phase and the decay of mu_hat.
  double scale = std::min(std::min(1.0, 1.0 / k), kPi / std::max(1e-12, std::abs(xi.dot(Vstar))));
  int panels = std::max(1, static_cast<int>(std::ceil((t - s0) / scale)));
  panels = std::min(panels, 4000);
  const double tol = 1e-14 * std::max(1.0, t) / panels;
  cplx s = 0.0;
  for (int i = 0; i < panels; ++i)
    s += adaptive_abs(f, s0 + (t - s0) * i / panels, s0 + (t - s0) * (i + 1) / panels, tol, 10);
  return prof.e0() * prof.Phi_hat(k) * k * k * s;
}

ModeSeries solve_rho(const Profile& prof, const std::function<cplx(double)>& shat, const Vec3& xi,
                     const std::vector<double>& t_grid) {
  ModeSeries m;
  m.xi = xi;
  m.t_grid = t_grid;
  if (t_grid.empty()) return m;
  if (t_grid.front() != 0.0) throw std::invalid_argument("solve_rho: t grid must start at 0");
  const std::size_t n = t_grid.size();
  double dt = n > 1 ? t_grid[1] : 0.0;
  for (std::size_t i = 1; i < n; ++i)
    if (std::abs(t_grid[i] - i * dt) > 1e-9 * std::max(1.0, t_grid.back()))
      throw std::invalid_argument("solve_rho: t grid must be uniform");
  m.shat.resize(n);
  std::vector<double> K(n);
  for (std::size_t i = 0; i < n; ++i) {
    m.shat[i] = shat(t_grid[i]);
    K[i] = volterra_kernel(prof, t_grid[i], xi);
  }
  m.rhohat = n > 1 ? volterra_march(K, m.shat, dt) : m.shat;
  return m;
}

cplx steady_mode(const Profile& prof, const Vec3& Vstar, const Vec3& xi) {
  if (trivial(prof)) return 0.0;
  double k = xi.norm();
  if (k == 0.0) return 0.0;
  cplx g = a_boundary(prof, -xi.dot(Vstar) / k);
  return -double(prof.e0()) * prof.Phi_hat(k) * g / (1.0 - phi_hat(k) * g);
}

StoppingResult force_steadystate(const Profile& prof, const Vec3& Vstar, const ForceGrid& grid) {
  const double V = split_velocity(Vstar).second;
  if (trivial(prof)) return finish(Vstar, 0.0, ForceRoute::steadystate);
  // With x = c V, int_0^1 c Im sigma dc = V^-2 int_0^V x Im sigma dx, and
  // Im sigma vanishes once x leaves the velocity support.
  const double xmax = std::min(V, prof.velocity_cutoff());
  QuadRule qx = gauss_legendre(grid.c_nodes, 0.0, xmax);
  QuadRule qk = gauss_legendre(grid.k_nodes, 0.0, auto_k_max(prof, grid));
  std::vector<cplx> gam(qx.x.size());
  parallel_for(qx.x.size(), [&](std::size_t i) { gam[i] = a_boundary(prof, -qx.x[i]); });
  double F = 0.0;
  for (std::size_t a = 0; a < qk.x.size(); ++a) {
    double k = qk.x[a], ph = phi_hat(k);
    double inner = 0.0;
    for (std::size_t i = 0; i < qx.x.size(); ++i) {
      cplx den = 1.0 - ph * gam[i];
      if (std::abs(den) < grid.kappa_min)
        throw NumericalFailure("resonant denominator below kappa_min: profile is not Penrose stable");
      cplx sig = -double(prof.e0()) * prof.Phi_hat(k) * gam[i] / den;
      inner += qx.w[i] * qx.x[i] * sig.imag();
    }
    F += qk.w[a] * k * k * k * ph * inner;
  }
  F *= -prof.e0() * 2.0 / (4.0 * kPi * kPi) / (V * V);
  return finish(Vstar, F, ForceRoute::steadystate);
}

StoppingResult force_timedomain(const Profile& prof, const Vec3& Vstar, const ForceGrid& grid) {
  const double V = split_velocity(Vstar).second;
  StoppingResult res;
  if (trivial(prof)) return finish(Vstar, 0.0, ForceRoute::timedomain);
  QuadRule qk = gauss_legendre(grid.k_nodes, 0.0, auto_k_max(prof, grid));
  // c in [0,1], split where the resonance leaves the velocity support.
  double cs = std::min(1.0, prof.velocity_cutoff() / V);
  QuadRule qc = gauss_legendre(grid.c_nodes, 0.0, cs);
  if (cs < 1.0) {
    QuadRule q2 = gauss_legendre(std::max(8, grid.c_nodes / 4), cs, 1.0);
    qc.x.insert(qc.x.end(), q2.x.begin(), q2.x.end());
    qc.w.insert(qc.w.end(), q2.w.begin(), q2.w.end());
  }
  const double pm = memory_p(prof);
  const std::size_t nk = qk.x.size(), nc = qc.x.size();
  std::vector<ModeMarch> modes;
  modes.reserve(nk * nc);
  for (std::size_t a = 0; a < nk; ++a)
    for (std::size_t b = 0; b < nc; ++b) {
      modes.emplace_back(prof, qk.x[a], qk.x[a] * qc.x[b] * V, pm);
    }
  std::vector<double> contrib(modes.size());
  const double pref = -prof.e0() * 2.0 / (4.0 * kPi * kPi);
  double prev = 0.0;
  for (int step = 1;; ++step) {
    double R = step * grid.plateau_window;
    if (R > grid.R_max + 1e-12) throw NumericalFailure("force did not plateau by R_max");
    parallel_for(modes.size(), [&](std::size_t m) {
      std::size_t a = m / nc, b = m % nc;
      double k = qk.x[a];
      cplx s = modes[m].advance_to(R);
      contrib[m] = qk.w[a] * k * k * k * phi_hat(k) * qc.w[b] * qc.x[b] * s.imag();
    });
    double F = 0.0;
    for (double c : contrib) F += c;
    F *= pref;
    res.R_samples.push_back(R);
    res.F_samples.push_back(F);
    if (step > 1 && std::abs(F - prev) < grid.plateau_tol * std::abs(F)) {
      StoppingResult out = finish(Vstar, F, ForceRoute::timedomain);
      out.R = R;
      out.R_samples = std::move(res.R_samples);
      out.F_samples = std::move(res.F_samples);
      return out;
    }
    prev = F;
  }
}

double stopping_coefficient(const Profile& prof, const Vec3& Vstar, const ForceGrid& grid, ForceRoute route) {
  return route == ForceRoute::timedomain ? force_timedomain(prof, Vstar, grid).A_est
                                         : force_steadystate(prof, Vstar, grid).A_est;
}

}  // namespace vstop
