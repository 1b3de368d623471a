#include "vstop/greens.hpp"

#include "vstop/dispersion.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>

namespace vstop {

namespace {

double sinc(double x) { return std::abs(x) < 1e-4 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }

// Sum_j c_j e^{i p r_j} for r_j = r0 + j h.
cplx phase_sum(const std::vector<cplx>& c, double r0, double h, double p) {
  cplx step = std::polar(1.0, p * h);
  cplx acc = 0.0;
  std::size_t n = c.size();
  for (std::size_t b = 0; b < n; b += 512) {
    cplx e = std::polar(1.0, p * (r0 + b * h));
    std::size_t hi = std::min(n, b + 512);
    for (std::size_t j = b; j < hi; ++j) {
      acc += c[j] * e;
      e *= step;
    }
  }
  return acc;
}

std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

template <class T>
std::vector<T> march(const std::vector<double>& K, const std::vector<T>& S, double dt) {
  if (K.size() != S.size()) throw std::invalid_argument("volterra_march: size mismatch");
  std::size_t n = K.size();
  double kmax = 0.0;
  for (double k : K) kmax = std::max(kmax, std::abs(k));
  if (kmax * dt >= 0.5) throw NumericalFailure("Volterra step contraction |K| dt < 1/2 violated");
  std::vector<T> y(n, T(0));
  if (n == 0) return y;
  y[0] = S[0];
  const double denom = 1.0 - 0.5 * dt * K[0];
  for (std::size_t i = 1; i < n; ++i) {
    T acc = 0.5 * K[i] * y[0];
    for (std::size_t j = 1; j < i; ++j) acc += K[i - j] * y[j];
    y[i] = (S[i] + dt * acc) / denom;
  }
  return y;
}

}  // namespace

double volterra_kernel(const Profile& prof, double t, double k) {
  if (prof.empty()) return 0.0;
  return -phi_hat(k) * k * k * t * prof.mu_hat_fast(t * k);
}

double volterra_kernel(const Profile& prof, double t, const Vec3& xi) { return volterra_kernel(prof, t, xi.norm()); }

std::vector<double> volterra_march(const std::vector<double>& K, const std::vector<double>& S, double dt) {
  return march(K, S, dt);
}

std::vector<cplx> volterra_march(const std::vector<double>& K, const std::vector<cplx>& S, double dt) {
  return march(K, S, dt);
}

std::vector<double> ghat_resolvent(const Profile& prof, double k, double dt, std::size_t n_steps) {
  std::vector<double> K(n_steps + 1);
  for (std::size_t i = 0; i <= n_steps; ++i) K[i] = volterra_kernel(prof, i * dt, k);
  return march(K, K, dt);
}

SpectralGreen::SpectralGreen(const Profile& prof, double h, double extent, double kappa_min)
    : prof_(prof), h_(h), kappa_min_(kappa_min) {
  if (!(h > 0) || !(extent > h)) throw std::invalid_argument("SpectralGreen: bad r grid");
  std::size_t half = static_cast<std::size_t>(std::llround(extent / h));
  r_.resize(2 * half + 1);
  for (std::size_t j = 0; j < r_.size(); ++j) r_[j] = (static_cast<double>(j) - static_cast<double>(half)) * h;
  gamma_.assign(r_.size(), 0.0);
  if (prof.empty()) return;
  // gamma(-r) = conj gamma(r)
  parallel_for(half + 1, [&](std::size_t i) { gamma_[half + i] = a_boundary(prof_, r_[half + i]); });
  for (std::size_t i = 1; i <= half; ++i) gamma_[half - i] = std::conj(gamma_[half + i]);
}

double SpectralGreen::min_denominator(double beta) const {
  double m = 1.0;
  for (auto& g : gamma_) m = std::min(m, std::abs(1.0 - beta * g));
  return m;
}

double SpectralGreen::reference_hat(double p) { return p > 0 ? -(p + p * p) * std::exp(-p) : 0.0; }

std::vector<cplx> SpectralGreen::coefficients(double beta) const {
  const std::size_t n = r_.size();
  std::vector<cplx> f(n);
  const cplx I(0.0, 1.0);
  for (std::size_t j = 0; j < n; ++j) {
    cplx d = 1.0 - beta * gamma_[j];
    if (std::abs(d) < kappa_min_)
      throw NumericalFailure("1 - phi_hat a(r) below kappa_min on the r grid (Penrose instability)");
    cplx s = r_[j] - I;
    f[j] = gamma_[j] / d - (1.0 / (s * s) - 2.0 * I / (s * s * s));
  }
  // Interpolating cubic B-spline: (c[j-1] + 4 c[j] + c[j+1]) / 6 = f[j], c[-1] = c[n] = 0.
  std::vector<double> cp(n);
  std::vector<cplx> d(n);
  const double a = 1.0 / 6.0, b = 4.0 / 6.0;
  cp[0] = a / b;
  d[0] = f[0] / b;
  for (std::size_t j = 1; j < n; ++j) {
    double m = b - a * cp[j - 1];
    cp[j] = a / m;
    d[j] = (f[j] - a * d[j - 1]) / m;
  }
  for (std::size_t j = n - 1; j-- > 0;) d[j] -= cp[j] * d[j + 1];
  return d;
}

std::vector<cplx> SpectralGreen::psi_hat(double beta, const std::vector<double>& p) const {
  std::vector<cplx> out(p.size(), 0.0);
  if (prof_.empty()) return out;
  std::vector<cplx> c = coefficients(beta);
  for (std::size_t i = 0; i < p.size(); ++i) {
    double s = sinc(0.5 * p[i] * h_);
    cplx S = phase_sum(c, r_.front(), h_, p[i]);
    out[i] = h_ / (2.0 * kPi) * s * s * s * s * S + reference_hat(p[i]);
  }
  return out;
}

std::vector<double> SpectralGreen::ghat(double k, const std::vector<double>& t) const {
  std::vector<double> out(t.size(), 0.0);
  if (prof_.empty()) return out;
  std::vector<double> p(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) p[i] = t[i] * k;
  std::vector<cplx> ps = psi_hat(phi_hat(k), p);
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = phi_hat(k) * k * ps[i].real();
  return out;
}

double SpectralGreen::ghat(double k, double t) const { return ghat(k, std::vector<double>{t})[0]; }

double ghat_spectral(const Profile& prof, double k, double t) { return SpectralGreen(prof).ghat(k, t); }

GreenInterpolant::GreenInterpolant(const SpectralGreen& sg, int beta_nodes) : h_(sg.spacing()) {
  const Profile& prof = sg.profile();
  v_scale_ = prof.mu_kind() == MuKind::gaussian ? prof.params().sigma : prof.params().radius;
  const std::size_t n = sg.r().size();
  std::size_t nfft = 1;
  while (nfft < 3 * n) nfft <<= 1;
  dp_ = 2.0 * kPi / (nfft * h_);
  const std::size_t keep = static_cast<std::size_t>(kPi / h_ / dp_);
  beta_.resize(beta_nodes);
  for (int i = 0; i < beta_nodes; ++i) beta_[i] = 0.5 * (1.0 + std::cos(kPi * (i + 0.5) / beta_nodes));
  table_.assign(beta_nodes, std::vector<cplx>(keep, 0.0));
  if (prof.empty()) return;

  fftw_complex* buf;
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lk(fftw_plan_mutex());
    buf = fftw_alloc_complex(nfft);
    plan = fftw_plan_dft_1d(static_cast<int>(nfft), buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  const double r0 = sg.r().front();
  for (int i = 0; i < beta_nodes; ++i) {
    std::vector<cplx> c = sg.coefficients(beta_[i]);
    for (std::size_t j = 0; j < nfft; ++j) {
      buf[j][0] = j < n ? c[j].real() : 0.0;
      buf[j][1] = j < n ? c[j].imag() : 0.0;
    }
    fftw_execute(plan);
    for (std::size_t q = 0; q < keep; ++q)
      table_[i][q] = cplx(buf[q][0], buf[q][1]) * std::polar(1.0, q * dp_ * r0);
  }
  {
    std::lock_guard<std::mutex> lk(fftw_plan_mutex());
    fftw_destroy_plan(plan);
    fftw_free(buf);
  }
  for (std::size_t i = 0; i < table_.size(); ++i)
    for (std::size_t q = 0; q < keep; ++q)
      if (std::abs(psi_node(i, q * dp_)) > 1e-12) p_extent_ = std::max(p_extent_, q * dp_);
}

double GreenInterpolant::psi_node(std::size_t node, double p) const {
  const auto& tab = table_[node];
  double u = p / dp_;
  long q0 = static_cast<long>(std::floor(u)) - 1;
  q0 = std::max(0L, std::min<long>(q0, static_cast<long>(tab.size()) - 4));
  cplx S = 0.0;
  for (int a = 0; a < 4; ++a) {
    double l = 1.0;
    for (int b = 0; b < 4; ++b)
      if (b != a) l *= (u - (q0 + b)) / static_cast<double>(a - b);
    S += l * tab[q0 + a];
  }
  double s = sinc(0.5 * p * h_);
  return (h_ / (2.0 * kPi) * s * s * s * s * S).real() + SpectralGreen::reference_hat(p);
}

double GreenInterpolant::ghat(double t, double k) const {
  double p = t * k;
  if (p >= (table_.empty() ? 0.0 : (table_[0].size() - 3) * dp_)) return 0.0;
  if (p_extent_ == 0.0) return 0.0;
  double beta = phi_hat(k);
  // Barycentric formula for Chebyshev points of the first kind.
  double num = 0.0, den = 0.0;
  const int n = static_cast<int>(beta_.size());
  for (int i = 0; i < n; ++i) {
    double w = ((i % 2) ? -1.0 : 1.0) * std::sin(kPi * (i + 0.5) / n);
    double d = beta - beta_[i];
    if (d == 0.0) return phi_hat(k) * k * psi_node(i, p);
    num += w / d * psi_node(i, p);
    den += w / d;
  }
  return phi_hat(k) * k * num / den;
}

GreenSlice::GreenSlice(const GreenInterpolant& gi, double t, double r_max, int refine) : t_(t) {
  if (t <= 0.0 || gi.p_extent() == 0.0) return;
  double k_cap = std::min(400.0, (gi.p_extent() + 1.0) / t);
  double wp = std::min(0.5, 1.5 / std::max(1.0, r_max)) / refine;
  int panels = static_cast<int>(std::ceil(k_cap / wp));
  QuadRule q = composite_gauss_legendre(10, panels, 0.0, panels * wp);
  std::vector<double> g(q.x.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = gi.ghat(t, q.x[i]);
  double peak = 0.0;
  for (double v : g) peak = std::max(peak, std::abs(v));
  std::size_t last = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (std::abs(g[i]) > 1e-10 * peak) last = i;
  std::size_t end = std::min(g.size(), (last / 10 + 1) * 10);
  k_.assign(q.x.begin(), q.x.begin() + end);
  w_.assign(q.w.begin(), q.w.begin() + end);
  g_.assign(g.begin(), g.begin() + end);
  kmax_ = end ? (end / 10) * wp : 0.0;
}

double GreenSlice::G(double r) const {
  double s = 0.0;
  if (std::abs(r) < 1e-8) {
    for (std::size_t i = 0; i < k_.size(); ++i) s += w_[i] * k_[i] * k_[i] * g_[i];
    return s / (2.0 * kPi * kPi);
  }
  for (std::size_t i = 0; i < k_.size(); ++i) s += w_[i] * k_[i] * std::sin(k_[i] * r) * g_[i];
  return s / (2.0 * kPi * kPi * r);
}

double GreenSlice::gradG(double r) const {
  const double d = 1e-3;
  return (G(r + d) - G(r - d)) / (2.0 * d);
}

double GreenSlice::L1(double r_l1, int refine) const {
  if (k_.empty()) return 0.0;
  int panels = static_cast<int>(std::ceil(r_l1 / (0.25 / refine)));
  QuadRule q = composite_gauss_legendre(8, panels, 0.0, r_l1);
  double s = 0.0;
  for (std::size_t i = 0; i < q.x.size(); ++i) s += q.w[i] * q.x[i] * q.x[i] * std::abs(G(q.x[i]));
  return 4.0 * kPi * s;
}

double g_pointwise(const GreenInterpolant& gi, double t, const Vec3& x) {
  double r = x.norm();
  return GreenSlice(gi, t, r + 1.0).G(r);
}

DecayReport decay_report(const GreenInterpolant& gi, const std::vector<double>& t_grid,
                         const std::vector<double>& x_grid, int refine) {
  if (t_grid.empty() || x_grid.empty()) throw std::invalid_argument("decay_report: empty grid");
  DecayReport rep;
  rep.t = t_grid;
  rep.L1.assign(t_grid.size(), 0.0);
  const std::size_t nx = x_grid.size();
  rep.samples.resize(t_grid.size() * nx);
  double xmax = *std::max_element(x_grid.begin(), x_grid.end());
  parallel_for(t_grid.size(), [&](std::size_t it) {
    double t = t_grid[it];
    double r_l1 = 10.0 + 6.0 * t * gi.velocity_scale();
    GreenSlice sl(gi, t, std::max(xmax, r_l1) + 0.01, refine);
    rep.L1[it] = sl.L1(r_l1, refine);
    for (std::size_t ix = 0; ix < nx; ++ix) {
      double r = x_grid[ix];
      rep.samples[it * nx + ix] = {t, r, sl.G(r), sl.gradG(r)};
    }
  });
  for (std::size_t it = 0; it < t_grid.size(); ++it) {
    rep.sup_L1 = std::max(rep.sup_L1, (1.0 + t_grid[it]) * rep.L1[it]);
  }
  for (auto& s : rep.samples) {
    rep.sup_point = std::max(rep.sup_point, (std::pow(s.t, 4) + std::pow(s.r, 4)) * std::abs(s.G));
    rep.sup_grad = std::max(rep.sup_grad, (std::pow(s.t, 5) + std::pow(s.r, 5)) * std::abs(s.gradG));
  }
  return rep;
}

DecayReport decay_report(const Profile& prof, const std::vector<double>& t_grid, const std::vector<double>& x_grid,
                         int refine) {
  SpectralGreen sg(prof);
  GreenInterpolant gi(sg);
  return decay_report(gi, t_grid, x_grid, refine);
}

GreenTable build_green_table(const SpectralGreen& sg, const std::vector<double>& xi_grid,
                             const std::vector<double>& t_grid, const std::vector<double>& r_grid) {
  GreenTable tab;
  tab.xi_grid = xi_grid;
  tab.t_grid = t_grid;
  tab.ghat.resize(xi_grid.size());
  parallel_for(xi_grid.size(), [&](std::size_t i) { tab.ghat[i] = sg.ghat(xi_grid[i], t_grid); });
  if (!r_grid.empty()) {
    GreenInterpolant gi(sg);
    const std::size_t nr = r_grid.size();
    const double rmax = *std::max_element(r_grid.begin(), r_grid.end());
    tab.g_samples.resize(t_grid.size() * nr);
    parallel_for(t_grid.size(), [&](std::size_t it) {
      GreenSlice sl(gi, t_grid[it], rmax + 0.01);
      for (std::size_t ir = 0; ir < nr; ++ir)
        tab.g_samples[it * nr + ir] = {t_grid[it], r_grid[ir], sl.G(r_grid[ir]), sl.gradG(r_grid[ir])};
    });
  }
  return tab;
}

}  // namespace vstop
