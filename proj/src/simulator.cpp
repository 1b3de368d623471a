#include "vstop/simulator.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <random>
#include <sstream>

namespace vstop {

SimOptions sim_options_from(const Config& c) {
  SimOptions o;
  o.box.length = c.num("numerics.box_length");
  o.box.n = static_cast<int>(c.integer("numerics.grid_n"));
  o.markers = static_cast<std::size_t>(c.integer("numerics.markers"));
  o.dt = c.num("numerics.sim_dt");
  o.seed = static_cast<std::uint64_t>(c.integer("numerics.seed"));
  o.snapshot_every = static_cast<int>(c.integer("numerics.snapshot_every"));
  return o;
}

double SimState::total_f() const {
  double s = 0.0;
  for (double a : w) s += a;
  return s;
}

std::string Snapshot::csv(int precision) const {
  std::ostringstream o;
  o << std::setprecision(precision);
  o << "x1,x2,rho\n";
  int k = static_cast<int>(std::lround((X[2] - lo[2]) / h));
  k = ((k % n) + n) % n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      o << lo[0] + i * h << ',' << lo[1] + j * h << ',' << rho[(static_cast<std::size_t>(i) * n + j) * n + k] << '\n';
  return o.str();
}

namespace {

std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

double radical_inverse(std::uint64_t i, unsigned base) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

// Inverse CDF of the radial density r^2 (mu(r) + floor) on [0, R].
struct RadialSampler {
  std::vector<double> r, cdf;
  double floor = 0.0, norm = 0.0;  // g(v) = (mu(|v|) + floor) / norm

  RadialSampler(const Profile& prof, double R, double floor_frac) {
    const int n = 8192;
    double mx = 0.0;
    for (int i = 0; i <= n; ++i) mx = std::max(mx, prof.mu_radial(R * i / n));
    floor = floor_frac * mx;
    r.resize(n + 1);
    cdf.assign(n + 1, 0.0);
    auto dens = [&](double s) { return s * s * (prof.mu_radial(s) + floor); };
    auto gl = gauss_legendre(4, 0.0, 1.0);
    for (int i = 0; i <= n; ++i) r[i] = R * i / n;
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t q = 0; q < gl.x.size(); ++q) acc += gl.w[q] * dens(r[i] + (r[i + 1] - r[i]) * gl.x[q]);
      cdf[i + 1] = cdf[i] + acc * (r[i + 1] - r[i]);
    }
    norm = 4.0 * kPi * cdf.back();
  }
  double sample(double u) const {
    double target = u * cdf.back();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
    std::size_t i = std::clamp<std::size_t>(it - cdf.begin(), 1, cdf.size() - 1) - 1;
    double f = (target - cdf[i]) / std::max(cdf[i + 1] - cdf[i], 1e-300);
    return r[i] + f * (r[i + 1] - r[i]);
  }
};

struct Cic {
  int i[3];
  double f[3];
};

Cic cic(const SimState& s, const Vec3& lo, const Vec3& x) {
  Cic c;
  const double inv_h = s.box.n / s.box.length;
  const int n = s.box.n;
  for (int d = 0; d < 3; ++d) {
    double u = (x[d] - lo[d]) * inv_h;
    double fl = std::floor(u);
    c.f[d] = u - fl;
    int i = static_cast<int>(fl);
    c.i[d] = (i >= 0 && i < n) ? i : ((i % n) + n) % n;
  }
  return c;
}

// Flat indices and weights of the 8 cloud-in-cell nodes around x.
struct Stencil {
  std::size_t id[8];
  double w[8];
};

inline Stencil stencil(const SimState& s, const Vec3& lo, const Vec3& x) {
  Cic q = cic(s, lo, x);
  const int n = s.box.n;
  std::size_t a[2] = {static_cast<std::size_t>(q.i[0]), static_cast<std::size_t>(q.i[0] + 1 == n ? 0 : q.i[0] + 1)};
  std::size_t b[2] = {static_cast<std::size_t>(q.i[1]), static_cast<std::size_t>(q.i[1] + 1 == n ? 0 : q.i[1] + 1)};
  std::size_t c[2] = {static_cast<std::size_t>(q.i[2]), static_cast<std::size_t>(q.i[2] + 1 == n ? 0 : q.i[2] + 1)};
  double wa[2] = {1 - q.f[0], q.f[0]}, wb[2] = {1 - q.f[1], q.f[1]}, wc[2] = {1 - q.f[2], q.f[2]};
  Stencil st;
  int m = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k, ++m) {
        st.id[m] = (a[i] * n + b[j]) * n + c[k];
        st.w[m] = wa[i] * wb[j] * wc[k];
      }
  return st;
}

inline Stencil stencil(const SimState& s, const Vec3& x) { return stencil(s, s.lo, x); }

template <class T>
void permute(std::vector<T>& a, const std::vector<std::uint32_t>& perm) {
  std::vector<T> b(a.size());
  for (std::size_t i = 0; i < perm.size(); ++i) b[i] = a[perm[i]];
  a.swap(b);
}

// Reorders markers by grid cell so that gathers and scatters stay local.
void sort_by_cell(SimState& s, std::vector<double>& mu_ig) {
  const std::size_t N = s.x.size();
  std::vector<std::pair<std::size_t, std::uint32_t>> key(N);
  for (std::size_t i = 0; i < N; ++i) key[i] = {stencil(s, s.x[i]).id[0], static_cast<std::uint32_t>(i)};
  std::sort(key.begin(), key.end());
  std::vector<std::uint32_t> perm(N);
  for (std::size_t i = 0; i < N; ++i) perm[i] = key[i].second;
  permute(s.x, perm);
  permute(s.v, perm);
  permute(s.w, perm);
  permute(s.inv_g, perm);
  permute(mu_ig, perm);
}

// Fixed number of deposit chunks so the summation order does not depend on
// the worker count.
constexpr std::size_t kChunks = 16;
constexpr int kSortEvery = 20;

}  // namespace

SimState init_state(const Profile& prof, const Vec3& V0, const SimOptions& opt) {
  if (opt.box.n < 4 || !(opt.box.length > 0.0)) throw std::invalid_argument("simulation box needs n >= 4 and L > 0");
  if (opt.markers == 0 || !(opt.dt > 0.0)) throw std::invalid_argument("simulation needs markers > 0 and dt > 0");
  SimState s;
  s.box = opt.box;
  s.seed = opt.seed;
  s.e0 = prof.e0();
  s.V = V0;
  const double L = opt.box.length;
  s.lo = Vec3(-opt.box.charge_frac * L, -0.5 * L, -0.5 * L);
  const std::size_t n3 = static_cast<std::size_t>(opt.box.n) * opt.box.n * opt.box.n;
  s.rho.assign(n3, 0.0);
  for (auto& e : s.E) e.assign(n3, 0.0);

  const std::size_t N = opt.markers;
  s.x.resize(N);
  s.v.resize(N);
  s.w.assign(N, 0.0);
  s.inv_g.resize(N);
  if (prof.empty()) {
    // No plasma: markers carry nothing.
    for (std::size_t i = 0; i < N; ++i) {
      s.x[i] = s.lo;
      s.v[i].setZero();
      s.inv_g[i] = 0.0;
    }
    return s;
  }
  const double R = prof.compact() ? prof.support_speed() : 6.0 * prof.params().sigma;
  RadialSampler rs(prof, R, opt.floor_frac);
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double shift[6];
  for (double& a : shift) a = u01(rng);
  const unsigned primes[6] = {2, 3, 5, 7, 11, 13};
  const double vol = L * L * L;
  parallel_for(N, [&](std::size_t i) {
    double u[6];
    for (int d = 0; d < 6; ++d) {
      u[d] = radical_inverse(i + 1, primes[d]) + shift[d];
      u[d] -= std::floor(u[d]);
    }
    s.x[i] = s.lo + L * Vec3(u[0], u[1], u[2]);
    double r = rs.sample(u[3]);
    double c = 2.0 * u[4] - 1.0, sn = std::sqrt(std::max(0.0, 1.0 - c * c)), ph = 2.0 * kPi * u[5];
    s.v[i] = r * Vec3(c, sn * std::cos(ph), sn * std::sin(ph));
    double g = (prof.mu_radial(r) + rs.floor) / rs.norm;
    s.inv_g[i] = vol / (static_cast<double>(N) * g);
  });
  return s;
}

namespace {

// rho from per-chunk deposits, merged in chunk order.
void merge_deposits(SimState& s, const std::vector<std::vector<double>>& part) {
  const double h = s.h(), inv_h3 = 1.0 / (h * h * h);
  std::fill(s.rho.begin(), s.rho.end(), 0.0);
  for (auto& g : part)
    for (std::size_t i = 0; i < s.rho.size(); ++i) s.rho[i] += g[i];
  for (double& r : s.rho) r *= inv_h3;
}

// E = -grad phi * rho by FFT.
void spectral_field(SimState& s) {
  const int n = s.box.n;
  const std::size_t n3 = static_cast<std::size_t>(n) * n * n;
  const int nh = n / 2 + 1;
  const std::size_t nc = static_cast<std::size_t>(n) * n * nh;
  double* in = fftw_alloc_real(n3);
  fftw_complex* spec = fftw_alloc_complex(nc);
  fftw_complex* work = fftw_alloc_complex(nc);
  fftw_plan fwd, bwd;
  {
    std::lock_guard<std::mutex> lk(plan_mutex());
    fwd = fftw_plan_dft_r2c_3d(n, n, n, in, spec, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_c2r_3d(n, n, n, work, in, FFTW_ESTIMATE);
  }
  std::copy(s.rho.begin(), s.rho.end(), in);
  fftw_execute(fwd);
  const double dk = 2.0 * kPi / s.box.length;
  auto freq = [&](int i) { return dk * (i <= n / 2 ? i : i - n); };
  for (int d = 0; d < 3; ++d) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < nh; ++k) {
          std::size_t id = (static_cast<std::size_t>(i) * n + j) * nh + k;
          bool nyq = 2 * i == n || 2 * j == n || 2 * k == n;
          Vec3 xi(freq(i), freq(j), freq(k));
          double m = nyq ? 0.0 : xi[d] * phi_hat(xi) / static_cast<double>(n3);
          // -i xi_d phi_hat rho_hat
          work[id][0] = m * spec[id][1];
          work[id][1] = -m * spec[id][0];
        }
    fftw_execute(bwd);
    std::copy(in, in + n3, s.E[d].begin());
  }
  {
    std::lock_guard<std::mutex> lk(plan_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
  }
  fftw_free(in);
  fftw_free(spec);
  fftw_free(work);
}

}  // namespace

void solve_fields(SimState& s) {
  const std::size_t n3 = s.rho.size();
  std::vector<std::vector<double>> part(kChunks);
  const std::size_t N = s.x.size();
  parallel_for(kChunks, [&](std::size_t c) {
    auto& g = part[c];
    g.assign(n3, 0.0);
    std::size_t a = N * c / kChunks, b = N * (c + 1) / kChunks;
    for (std::size_t p = a; p < b; ++p) {
      if (s.w[p] == 0.0) continue;
      Stencil st = stencil(s, s.x[p]);
      for (int m = 0; m < 8; ++m) g[st.id[m]] += s.w[p] * st.w[m];
    }
  });
  merge_deposits(s, part);
  spectral_field(s);
}

Vec3 field_at(const SimState& s, const Vec3& x) {
  Stencil st = stencil(s, x);
  Vec3 e = Vec3::Zero();
  for (int m = 0; m < 8; ++m) e += st.w[m] * Vec3(s.E[0][st.id[m]], s.E[1][st.id[m]], s.E[2][st.id[m]]);
  return e;
}

Vec3 force_on_charge(const SimState& s) { return -double(s.e0) * field_at(s, s.X); }

SimResult run_deltaf(const Profile& prof, double V0, double t_end, const SimOptions& opt,
                     const std::function<void(const SimState&)>& observer) {
  if (!(t_end >= 0.0)) throw std::invalid_argument("run_deltaf needs t_end >= 0");
  if (!(V0 > prof.support_speed())) throw std::invalid_argument("run_deltaf needs V0 above the support speed");
  SimResult res;
  SimState& s = res.final;
  s = init_state(prof, Vec3(V0, 0, 0), opt);
  const double dt = opt.dt, h = s.h(), L = s.box.length, alpha = prof.alpha(), e0 = prof.e0();
  const std::size_t N = s.x.size();
  const int steps = static_cast<int>(std::ceil(t_end / dt - 1e-9));

  for (std::size_t i = 0; i < N; ++i)
    if (s.v[i].cwiseAbs().maxCoeff() * dt > h) throw NumericalFailure("marker speed violates the CFL bound |v| dt <= h");

  solve_fields(s);
  Vec3 F = force_on_charge(s);
  auto record = [&] {
    res.traj.t.push_back(s.t);
    res.traj.X.push_back(s.X);
    res.traj.V.push_back(s.V);
    res.traj.F.push_back(F);
  };
  auto snap = [&] {
    if (opt.snapshot_every > 0 && s.step % opt.snapshot_every == 0)
      res.snapshots.push_back({s.step, s.t, s.lo, h, s.box.n, s.rho, s.X});
  };
  res.traj.alpha = alpha;
  record();
  snap();
  if (observer) observer(s);

  // Correction coefficient from the previous pass, and mu/g per marker.
  double corr = 0.0;
  std::vector<double> mu_ig(N);
  for (std::size_t p = 0; p < N; ++p) mu_ig[p] = prof.mu_eval(s.v[p]) * s.inv_g[p];
  // Beyond this distance grad Phi is below 1e-10 of its peak.
  const double phi_reach2 = std::pow(7.0 * prof.params().Phi_width, 2);
  std::vector<double> sum_w(kChunks), sum_mu(kChunks), dsum(kChunks);
  std::vector<char> cfl(kChunks);
  std::vector<std::vector<double>> part(kChunks, std::vector<double>(s.rho.size()));
  // E interleaved per node for the marker gather.
  std::vector<std::array<double, 3>> Ei(s.rho.size());
  auto interleave = [&] {
    for (std::size_t i = 0; i < Ei.size(); ++i) Ei[i] = {s.E[0][i], s.E[1][i], s.E[2][i]};
  };
  interleave();
  for (int n = 0; n < steps; ++n) {
    if (n % kSortEvery == 0) sort_by_cell(s, mu_ig);
    const Vec3 Xn = s.X;
    const Vec3 Vhalf = s.V + 0.5 * dt * alpha * F;
    const Vec3 Xnext = Xn + dt * Vhalf;
    Vec3 lo_next = s.lo;
    lo_next[0] = Xnext[0] - s.box.charge_frac * L;
    const bool first = n == 0;
    parallel_for(kChunks, [&](std::size_t c) {
      std::size_t a = N * c / kChunks, b = N * (c + 1) / kChunks;
      double sw = 0.0, sm = 0.0, ds = 0.0;
      bool bad = false;
      auto& g = part[c];
      std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t p = a; p < b; ++p) {
        if (s.inv_g[p] == 0.0) continue;
        Vec3& x = s.x[p];
        Vec3& v = s.v[p];
        double& w = s.w[p];
        w -= corr * mu_ig[p];
        Vec3 Eb = Vec3::Zero();
        {
          Stencil st = stencil(s, x);
          for (int m = 0; m < 8; ++m) {
            const auto& e = Ei[st.id[m]];
            Eb += st.w[m] * Vec3(e[0], e[1], e[2]);
          }
        }
        const Vec3 y = x - Xn;
        if (y.squaredNorm() < phi_reach2) Eb += e0 * prof.Phi_grad(y);
        double w0 = w;
        if (first) {
          w -= 0.5 * dt * Eb.dot(prof.mu_grad(v)) * s.inv_g[p];
          v += 0.5 * dt * Eb;
        } else {
          Vec3 vn = v + 0.5 * dt * Eb;
          w -= dt * Eb.dot(prof.mu_grad(vn)) * s.inv_g[p];
          v = vn + 0.5 * dt * Eb;
        }
        ds += w - w0;
        x += dt * v;
        if (x[0] < lo_next[0]) {
          // Leaves through the rear: re-enters at the front as undisturbed plasma.
          x[0] += L;
          w = 0.0;
        } else if (x[0] >= lo_next[0] + L) {
          x[0] -= L;
        }
        for (int d = 1; d < 3; ++d) {
          if (x[d] < lo_next[d]) x[d] += L;
          else if (x[d] >= lo_next[d] + L) x[d] -= L;
        }
        bad = bad || v.cwiseAbs().maxCoeff() * dt > h;
        if (w != 0.0) {
          Stencil st = stencil(s, lo_next, x);
          for (int m = 0; m < 8; ++m) g[st.id[m]] += w * st.w[m];
        }
        sw += w;
        mu_ig[p] = prof.mu_eval(v) * s.inv_g[p];
        sm += mu_ig[p];
      }
      sum_w[c] = sw;
      sum_mu[c] = sm;
      dsum[c] = ds;
      cfl[c] = bad;
    });
    if (std::any_of(cfl.begin(), cfl.end(), [](char b) { return b != 0; }))
      throw NumericalFailure("marker speed violates the CFL bound |v| dt <= h");
    double SW = 0.0, SM = 0.0, DS = 0.0;
    for (std::size_t c = 0; c < kChunks; ++c) {
      SW += sum_w[c];
      SM += sum_mu[c];
      DS += dsum[c];
    }
    res.raw_f_drift = std::max(res.raw_f_drift, std::abs(DS) / dt);
    corr = SM > 0.0 ? SW / SM : 0.0;

    s.X = Xnext;
    s.lo = lo_next;
    s.t = (n + 1 == steps) ? t_end : s.t + dt;
    ++s.step;
    merge_deposits(s, part);
    spectral_field(s);
    interleave();
    F = force_on_charge(s);
    s.V = Vhalf + 0.5 * dt * alpha * F;
    record();
    snap();
    if (observer) observer(s);
    res.f_residual = std::max(res.f_residual, std::abs(SW - corr * SM));
  }
  // Apply the last correction so the returned weights integrate to zero.
  for (std::size_t p = 0; p < N; ++p) s.w[p] -= corr * mu_ig[p];
  return res;
}

FieldSampler simulator_field(const SimState& s, const ChargePath& path) {
  const int n = s.box.n;
  const Vec3 rel = s.lo - s.X;
  const Vec3 len = Vec3::Constant(s.box.length);
  auto comps = std::make_shared<std::array<PeriodicGrid3, 3>>(
      std::array<PeriodicGrid3, 3>{PeriodicGrid3(rel, len, n, n, n), PeriodicGrid3(rel, len, n, n, n),
                                   PeriodicGrid3(rel, len, n, n, n)});
  for (int d = 0; d < 3; ++d) (*comps)[d].data() = s.E[d];
  return grid_field(comps, path, FieldKind::simulator);
}

}  // namespace vstop
