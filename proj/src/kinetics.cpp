#include "vstop/kinetics.hpp"

#include "vstop/dispersion.hpp"
#include "vstop/response.hpp"

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <stdexcept>

namespace vstop {

// ---------------------------------------------------------------- charge path

namespace {

// Cubic Hermite basis on [0,1].
struct Hermite {
  double h00, h10, h01, h11, d00, d10, d01, d11;
  explicit Hermite(double u) {
    double u2 = u * u, u3 = u2 * u;
    h00 = 2 * u3 - 3 * u2 + 1;
    h10 = u3 - 2 * u2 + u;
    h01 = -2 * u3 + 3 * u2;
    h11 = u3 - u2;
    d00 = 6 * u2 - 6 * u;
    d10 = 3 * u2 - 4 * u + 1;
    d01 = -6 * u2 + 6 * u;
    d11 = 3 * u2 - 2 * u;
  }
};

}  // namespace

ChargePath ChargePath::straight(double V0, double T) {
  if (!(V0 > 0.0) || !(T >= 0.0)) throw std::invalid_argument("straight path needs V0 > 0 and T >= 0");
  ChargePath p;
  p.t_ = {0.0, std::max(T, 1e-12)};
  p.X_ = {Vec3::Zero(), Vec3(V0 * p.t_[1], 0, 0)};
  p.V_ = {Vec3(V0, 0, 0), Vec3(V0, 0, 0)};
  p.A_ = {Vec3::Zero(), Vec3::Zero()};
  p.T_ = T;
  p.vmin_ = V0;
  return p;
}

ChargePath ChargePath::from_trajectory(const Trajectory& tr) {
  if (tr.t.size() < 2) throw std::invalid_argument("charge path needs at least two samples");
  ChargePath p;
  p.t_ = tr.t;
  p.X_ = tr.X;
  p.V_ = tr.V;
  p.A_.resize(tr.F.size());
  for (std::size_t i = 0; i < tr.F.size(); ++i) p.A_[i] = tr.alpha * tr.F[i];
  p.T_ = tr.t.back();
  p.vmin_ = tr.V.front()[0];
  for (auto& v : tr.V) p.vmin_ = std::min(p.vmin_, v[0]);
  if (!(p.vmin_ > 0.0)) throw std::invalid_argument("charge path needs V_1 > 0");
  return p;
}

Vec3 ChargePath::X(double s) const {
  if (s <= 0.0) return X_.front() + s * V_.front();
  if (s >= t_.back()) return X_.back() + (s - t_.back()) * V_.back();
  std::size_t i = std::upper_bound(t_.begin(), t_.end(), s) - t_.begin() - 1;
  double h = t_[i + 1] - t_[i];
  Hermite b((s - t_[i]) / h);
  return b.h00 * X_[i] + b.h10 * h * V_[i] + b.h01 * X_[i + 1] + b.h11 * h * V_[i + 1];
}

Vec3 ChargePath::V(double s) const {
  if (s <= 0.0) return V_.front();
  if (s >= t_.back()) return V_.back();
  std::size_t i = std::upper_bound(t_.begin(), t_.end(), s) - t_.begin() - 1;
  double h = t_[i + 1] - t_[i];
  Hermite b((s - t_[i]) / h);
  return b.h00 * V_[i] + b.h10 * h * A_[i] + b.h01 * V_[i + 1] + b.h11 * h * A_[i + 1];
}

// ---------------------------------------------------------------- fields

std::string field_kind_name(FieldKind k) {
  switch (k) {
    case FieldKind::zero:
      return "zero";
    case FieldKind::linear_response:
      return "linear_response";
    case FieldKind::simulator:
      return "simulator";
    case FieldKind::synthetic:
      break;
  }
  return "synthetic";
}

FieldSampler FieldSampler::zero() {
  return {[](double, const Vec3&) { return Vec3::Zero().eval(); }, [](double, const Vec3&) { return Mat3::Zero().eval(); },
          FieldKind::zero};
}

FieldSampler FieldSampler::constant(const Vec3& E0) {
  return {[E0](double, const Vec3&) { return E0; }, [](double, const Vec3&) { return Mat3::Zero().eval(); },
          FieldKind::synthetic};
}

FieldSampler FieldSampler::following(double delta, const ChargePath& path) {
  auto E = [delta, path](double t, const Vec3& x) -> Vec3 {
    Vec3 y = x - path.X(t);
    return delta * y * std::pow(1.0 + y.squaredNorm(), -1.5);
  };
  auto G = [delta, path](double t, const Vec3& x) -> Mat3 {
    Vec3 y = x - path.X(t);
    double q = 1.0 + y.squaredNorm();
    return delta * (std::pow(q, -1.5) * Mat3::Identity() - 3.0 * std::pow(q, -2.5) * y * y.transpose());
  };
  return {E, G, FieldKind::synthetic};
}

FieldSampler FieldSampler::custom(std::function<Vec3(double, const Vec3&)> E,
                                  std::function<Mat3(double, const Vec3&)> gradE) {
  return {std::move(E), std::move(gradE), FieldKind::synthetic};
}

PeriodicGrid3::PeriodicGrid3(const Vec3& lo, const Vec3& length, int n1, int n2, int n3)
    : lo_(lo), len_(length), n_{n1, n2, n3}, data_(static_cast<std::size_t>(n1) * n2 * n3, 0.0) {
  if (n1 < 4 || n2 < 4 || n3 < 4) throw std::invalid_argument("PeriodicGrid3 needs at least 4 points per axis");
  h_ = Vec3(length[0] / n1, length[1] / n2, length[2] / n3);
}

std::size_t PeriodicGrid3::index(int i, int j, int k) const {
  auto wrap = [](int a, int n) { return ((a % n) + n) % n; };
  return (static_cast<std::size_t>(wrap(i, n_[0])) * n_[1] + wrap(j, n_[1])) * n_[2] + wrap(k, n_[2]);
}

template <bool Grad>
void PeriodicGrid3::eval(const Vec3& x, double& v, Vec3& g) const {
  int base[3];
  double w[3][4], d[3][4];
  for (int a = 0; a < 3; ++a) {
    double u = (x[a] - lo_[a]) / h_[a];
    double fl = std::floor(u);
    double f = u - fl;
    base[a] = static_cast<int>(fl) - 1;
    double f2 = f * f, f3 = f2 * f;
    w[a][0] = 0.5 * (-f3 + 2 * f2 - f);
    w[a][1] = 0.5 * (3 * f3 - 5 * f2 + 2);
    w[a][2] = 0.5 * (-3 * f3 + 4 * f2 + f);
    w[a][3] = 0.5 * (f3 - f2);
    if (Grad) {
      d[a][0] = 0.5 * (-3 * f2 + 4 * f - 1) / h_[a];
      d[a][1] = 0.5 * (9 * f2 - 10 * f) / h_[a];
      d[a][2] = 0.5 * (-9 * f2 + 8 * f + 1) / h_[a];
      d[a][3] = 0.5 * (3 * f2 - 2 * f) / h_[a];
    }
  }
  v = 0.0;
  g.setZero();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k) {
        double c = data_[index(base[0] + i, base[1] + j, base[2] + k)];
        v += w[0][i] * w[1][j] * w[2][k] * c;
        if (Grad) {
          g[0] += d[0][i] * w[1][j] * w[2][k] * c;
          g[1] += w[0][i] * d[1][j] * w[2][k] * c;
          g[2] += w[0][i] * w[1][j] * d[2][k] * c;
        }
      }
}

double PeriodicGrid3::value(const Vec3& x) const {
  double v;
  Vec3 g;
  eval<false>(x, v, g);
  return v;
}

Vec3 PeriodicGrid3::gradient(const Vec3& x) const {
  double v;
  Vec3 g;
  eval<true>(x, v, g);
  return g;
}

FieldSampler grid_field(std::shared_ptr<const std::array<PeriodicGrid3, 3>> comps, const ChargePath& path,
                        FieldKind kind) {
  auto E = [comps, path](double t, const Vec3& x) -> Vec3 {
    Vec3 y = x - path.X(t);
    return Vec3((*comps)[0].value(y), (*comps)[1].value(y), (*comps)[2].value(y));
  };
  auto G = [comps, path](double t, const Vec3& x) -> Mat3 {
    Vec3 y = x - path.X(t);
    Mat3 m;
    for (int i = 0; i < 3; ++i) m.row(i) = (*comps)[i].gradient(y).transpose();
    return m;
  };
  return {E, G, kind};
}

FieldSampler wake_field(const Profile& prof, const ChargePath& path, double V, double behind, double ahead,
                        double half, double h) {
  const int n1 = static_cast<int>(std::lround((behind + ahead) / h));
  const int n2 = static_cast<int>(std::lround(2 * half / h));
  const Vec3 lo(-behind, -half, -half), len(n1 * h, n2 * h, n2 * h);
  auto comps = std::make_shared<std::array<PeriodicGrid3, 3>>(std::array<PeriodicGrid3, 3>{
      PeriodicGrid3(lo, len, n1, n2, n2), PeriodicGrid3(lo, len, n1, n2, n2), PeriodicGrid3(lo, len, n1, n2, n2)});
  if (prof.empty() || prof.params().Phi_amplitude == 0.0) return grid_field(comps, path, FieldKind::linear_response);

  // gamma(x) on [-V, V]; the resonance sits at x = -xi_1 V/|xi|.
  const double dx = 0.01;
  const int ng = static_cast<int>(std::ceil(V / dx));
  std::vector<double> gre(2 * ng + 1), gim(2 * ng + 1);
  parallel_for(ng + 1, [&](std::size_t i) {
    cplx g = a_boundary(prof, i * dx);
    gre[ng + i] = g.real();
    gim[ng + i] = g.imag();
    gre[ng - i] = g.real();
    gim[ng - i] = -g.imag();
  });
  using Spline = boost::math::interpolators::cardinal_cubic_b_spline<double>;
  Spline sre(gre.begin(), gre.end(), -ng * dx, dx), sim(gim.begin(), gim.end(), -ng * dx, dx);

  const int nh = n2 / 2 + 1;
  const std::size_t nc = static_cast<std::size_t>(n1) * n2 * nh;
  fftw_complex* spec = fftw_alloc_complex(nc);
  double* real = fftw_alloc_real(static_cast<std::size_t>(n1) * n2 * n2);
  fftw_plan plan;
  {
    static std::mutex m;
    std::lock_guard<std::mutex> lk(m);
    plan = fftw_plan_dft_c2r_3d(n1, n2, n2, spec, real, FFTW_ESTIMATE);
  }
  auto freq = [](int i, int n, double L) { return 2 * kPi * ((i <= n / 2) ? i : i - n) / L; };
  const double vol = len[0] * len[1] * len[2];
  for (int d = 0; d < 3; ++d) {
    for (int i = 0; i < n1; ++i)
      for (int j = 0; j < n2; ++j)
        for (int k = 0; k < nh; ++k) {
          std::size_t id = (static_cast<std::size_t>(i) * n2 + j) * nh + k;
          Vec3 xi(freq(i, n1, len[0]), freq(j, n2, len[1]), freq(k, n2, len[2]));
          double kk = xi.norm();
          cplx val = 0.0;
          bool nyq = (2 * i == n1) || (2 * j == n2) || (2 * k == n2);
          if (kk > 0.0 && !nyq) {
            double x = -xi[0] * V / kk;
            cplx g(sre(x), sim(x));
            cplx rho = -double(prof.e0()) * prof.Phi_hat(kk) * g / (1.0 - phi_hat(kk) * g);
            val = cplx(0.0, -xi[d]) * phi_hat(kk) * rho * std::polar(1.0, xi.dot(lo)) / vol;
          }
          spec[id][0] = val.real();
          spec[id][1] = val.imag();
        }
    fftw_execute(plan);
    std::copy(real, real + (*comps)[d].data().size(), (*comps)[d].data().begin());
  }
  {
    static std::mutex m;
    std::lock_guard<std::mutex> lk(m);
    fftw_destroy_plan(plan);
  }
  fftw_free(spec);
  fftw_free(real);
  return grid_field(comps, path, FieldKind::linear_response);
}

Vec3 total_field(const FieldSampler& f, const Profile& prof, const ChargePath& path, double s, const Vec3& x) {
  return f.E(s, x) + double(prof.e0()) * prof.Phi_grad(x - path.X(s));
}

// ---------------------------------------------------------------- characteristics

namespace {

struct PhasePoint {
  Vec3 X, V;
};

// n RK4 steps from time t down to time s.
PhasePoint rk4_back(const FieldSampler& f, const Profile& prof, const ChargePath& path, double s, double t,
                    const PhasePoint& y0, int n) {
  const double h = -(t - s) / n;
  PhasePoint y = y0;
  double tau = t;
  for (int i = 0; i < n; ++i) {
    auto acc = [&](double tt, const Vec3& X) { return total_field(f, prof, path, tt, X); };
    Vec3 k1x = y.V, k1v = acc(tau, y.X);
    Vec3 k2x = y.V + 0.5 * h * k1v, k2v = acc(tau + 0.5 * h, y.X + 0.5 * h * k1x);
    Vec3 k3x = y.V + 0.5 * h * k2v, k3v = acc(tau + 0.5 * h, y.X + 0.5 * h * k2x);
    Vec3 k4x = y.V + h * k3v, k4v = acc(tau + h, y.X + h * k3x);
    y.X += h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
    y.V += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
    tau = (i + 1 == n) ? s : tau + h;
  }
  return y;
}

struct Adaptive {
  PhasePoint y;
  double err;
  int steps;
};

Adaptive rk4_back_adaptive(const FieldSampler& f, const Profile& prof, const ChargePath& path, double s, double t,
                           const PhasePoint& y0, const CharOptions& opt) {
  if (t == s) return {y0, 0.0, 0};
  int n = std::max(1, static_cast<int>(std::ceil((t - s) / opt.h_max)));
  PhasePoint coarse = rk4_back(f, prof, path, s, t, y0, n);
  for (int d = 0;; ++d) {
    PhasePoint fine = rk4_back(f, prof, path, s, t, y0, 2 * n);
    double err = (fine.X - coarse.X).norm() / 15.0;
    if (err <= opt.rel_tol * (t - s) || d >= opt.max_doublings) return {fine, err, 2 * n};
    coarse = fine;
    n *= 2;
  }
}

}  // namespace

CharResult integrate_characteristics(const FieldSampler& field, const Profile& prof, const ChargePath& path, double s,
                                     double t, const Vec3& x, const Vec3& v, const CharOptions& opt) {
  if (!(s >= 0.0) || !(t >= s)) throw std::invalid_argument("integrate_characteristics needs 0 <= s <= t");
  CharResult r;
  Adaptive a = rk4_back_adaptive(field, prof, path, s, t, {x, v}, opt);
  r.X_st = a.y.X;
  r.V_st = a.y.V;
  r.Ytilde = r.X_st - (x - (t - s) * v);
  r.Wtilde = r.V_st - v;
  r.error = a.err;
  r.steps = a.steps;
  double tau = passage_time(path, x[0]);
  if (tau <= t) {
    Vec3 x2 = x + (t - tau) * v;
    Adaptive b = rk4_back_adaptive(field, prof, path, s, t, {x2, v}, opt);
    r.Y = b.y.X - (x + (s - tau) * v);
    r.W = b.y.V - v;
  }
  return r;
}

// ---------------------------------------------------------------- geometry

std::string region_name(Region r) {
  switch (r) {
    case Region::front:
      return "front";
    case Region::post_collision:
      return "post_collision";
    case Region::K:
      return "K";
    case Region::F:
      return "F";
    case Region::unclassified:
      break;
  }
  return "unclassified";
}

namespace {

// Root of the increasing function g on R, where g is affine outside [0,T]
// with slopes g'(0-) and g'(T+).
template <class G, class D>
double monotone_root(const ChargePath& path, G g, D dg) {
  const double T = path.T();
  double g0 = g(0.0), gT = g(T);
  if (g0 >= 0.0) return -g0 / dg(0.0);
  if (gT <= 0.0) return T - gT / dg(T);
  double lo = 0.0, hi = T;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, T); ++it) {
    double mid = 0.5 * (lo + hi);
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  double tau = 0.5 * (lo + hi);
  for (int it = 0; it < 3; ++it) {
    double d = dg(tau);
    if (d <= 0.0) break;
    double nt = tau - g(tau) / d;
    if (nt < lo || nt > hi) break;
    tau = nt;
  }
  return tau;
}

}  // namespace

double passage_time(const ChargePath& path, double target) {
  return monotone_root(
      path, [&](double s) { return path.X1(s) - target; }, [&](double s) { return path.V(s)[0]; });
}

double collision_time(const ChargePath& path, double t, double x1, double v1) {
  return monotone_root(
      path, [&](double s) { return path.X1(s) + (t - s) * v1 - x1; }, [&](double s) { return path.V(s)[0] - v1; });
}

GeometrySample geometry(const ChargePath& path, double t, const Vec3& x, const Vec3& v, const RegionParams& rp) {
  GeometrySample g;
  g.tau_x = passage_time(path, x[0]);
  g.tau_check = std::max(0.0, t - g.tau_x);
  g.d_check = std::max(0.0, x[0] - path.X1(t));
  const double vmin = path.V_min();
  if (v.norm() > 0.5 * vmin) return g;
  g.has_collision = true;
  g.T_coll = collision_time(path, t, x[0], v[0]);
  g.T_check = std::max(0.0, t - g.T_coll);
  g.x_impact = x - g.T_check * v;
  Eigen::Vector2d xp(x[1], x[2]), vp(v[1], v[2]);
  if (g.T_check > 0.0) g.v_star_perp = xp / g.T_check;

  if (g.d_check > 0.0) {
    g.region = Region::front;
  } else if (rp.s >= g.T_coll - 1.0) {
    g.region = Region::post_collision;
  } else if (v.norm() < std::pow(rp.delta, -rp.beta)) {
    if (g.tau_check * jbracket(vp.norm()) < jbracket(xp.norm()) / 4.0)
      g.region = Region::K;
    else if (g.T_check > 0.0 && (g.v_star_perp - vp).norm() * g.tau_check > std::sqrt(g.T_coll - rp.s))
      g.region = Region::F;
  }
  return g;
}

// ---------------------------------------------------------------- straightening

StraightenResult straighten(const FieldSampler& field, const Profile& prof, const ChargePath& path, double s, double t,
                            const Vec3& x, const Vec3& v_target, int max_iter, double tol) {
  if (!(t > s)) throw std::invalid_argument("straighten needs s < t");
  StraightenResult r;
  CharOptions opt;
  opt.rel_tol = 1e-11;
  const double L = t - s;
  auto Yt = [&](const Vec3& v) { return rk4_back_adaptive(field, prof, path, s, t, {x, v}, opt).y.X - (x - L * v); };
  Vec3 y0 = Yt(v_target);
  r.shift_bound = 2.0 * y0.norm() / L;

  // Contraction probe: |grad_v Ytilde|/(t-s) on the ball the iterates can reach.
  double rad = std::max(r.shift_bound, 1e-3);
  std::vector<Vec3> probes{v_target};
  for (int d = 0; d < 3; ++d)
    for (double sg : {-1.0, 1.0}) {
      Vec3 e = Vec3::Zero();
      e[d] = sg * rad;
      probes.push_back(v_target + e);
    }
  const double hv = 1e-4;
  for (const Vec3& p : probes) {
    Mat3 J;
    for (int d = 0; d < 3; ++d) {
      Vec3 e = Vec3::Zero();
      e[d] = hv;
      J.col(d) = (Yt(p + e) - Yt(p - e)) / (2 * hv);
    }
    r.lipschitz = std::max(r.lipschitz, J.operatorNorm() / L);
  }
  r.contraction_ok = r.lipschitz <= 0.5;
  if (!r.contraction_ok) {
    r.message = "contraction probe failed";
    r.psi = v_target;
    return r;
  }

  Vec3 v = v_target;
  Vec3 yv = y0;
  for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
    Vec3 next = v_target + yv / L;
    double step = (next - v).norm();
    v = next;
    yv = Yt(v);
    if (step <= tol * std::max(1.0, v.norm())) {
      r.converged = true;
      break;
    }
  }
  if (!r.converged) {
    r.iterations = max_iter;
    r.message = "no convergence";
  }
  r.psi = v;
  r.residual = (yv - L * (v - v_target)).norm();
  r.shift = (v - v_target).norm();
  return r;
}

// ---------------------------------------------------------------- source terms

QuadRule3 velocity_nodes(const Profile& prof, const VelocityQuadrature& q) {
  QuadRule3 out;
  if (prof.empty()) return out;
  double Rv = q.radius > 0.0 ? q.radius : (prof.compact() ? prof.support_speed() : 8.0 * prof.params().sigma);
  QuadRule rad = gauss_legendre(q.radial, 0.0, Rv);
  std::vector<Vec3> dirs;
  std::vector<double> dw;
  if (q.angular == 26) {
    const double a = 1.0 / std::sqrt(2.0), b = 1.0 / std::sqrt(3.0);
    for (int d = 0; d < 3; ++d)
      for (double sg : {-1.0, 1.0}) {
        Vec3 e = Vec3::Zero();
        e[d] = sg;
        dirs.push_back(e);
        dw.push_back(4 * kPi / 21.0);
      }
    for (int d = 0; d < 3; ++d)
      for (double s1 : {-a, a})
        for (double s2 : {-a, a}) {
          Vec3 e = Vec3::Zero();
          e[d] = s1;
          e[(d + 1) % 3] = s2;
          dirs.push_back(e);
          dw.push_back(4 * kPi * 4.0 / 105.0);
        }
    for (double s1 : {-b, b})
      for (double s2 : {-b, b})
        for (double s3 : {-b, b}) {
          dirs.emplace_back(s1, s2, s3);
          dw.push_back(4 * kPi * 9.0 / 280.0);
        }
  } else {
    QuadRule pol = gauss_legendre(q.angular, -1.0, 1.0);
    int na = q.azimuthal > 0 ? q.azimuthal : 2 * q.angular;
    for (std::size_t i = 0; i < pol.x.size(); ++i) {
      double c = pol.x[i], sn = std::sqrt(1 - c * c);
      for (int j = 0; j < na; ++j) {
        double ph = 2 * kPi * (j + 0.5) / na;
        dirs.emplace_back(c, sn * std::cos(ph), sn * std::sin(ph));
        dw.push_back(pol.w[i] * 2 * kPi / na);
      }
    }
  }
  for (std::size_t i = 0; i < rad.x.size(); ++i)
    for (std::size_t j = 0; j < dirs.size(); ++j) {
      out.x.push_back(rad.x[i] * dirs[j]);
      out.w.push_back(rad.w[i] * rad.x[i] * rad.x[i] * dw[j]);
    }
  return out;
}

namespace {

double default_step(const Profile& prof, const ChargePath& path, double h) {
  if (h > 0.0) return h;
  double vmax = std::max(1.0, std::max(path.V(0.0).norm(), path.V(path.T()).norm()));
  return std::min(0.05, 0.2 * prof.params().Phi_width / vmax);
}

// Simpson weights on n (even) uniform intervals.
double simpson_weight(int i, int n) {
  if (i == 0 || i == n) return 1.0 / 3.0;
  return (i % 2) ? 4.0 / 3.0 : 2.0 / 3.0;
}

// Sum over velocity nodes of int_0^t g(s, X_st, V_st, v) ds along the backward
// characteristic of every node.
template <class Integrand>
double along_characteristics(const FieldSampler& field, const Profile& prof, const ChargePath& path, double t,
                             const Vec3& x, const SourceOptions& opt, Integrand g) {
  if (t <= 0.0) return 0.0;
  QuadRule3 q = velocity_nodes(prof, opt.v);
  double hh = default_step(prof, path, opt.h);
  int n = std::max(2, static_cast<int>(std::ceil(t / hh)));
  n += n % 2;
  const double h = t / n;
  std::vector<double> part(q.x.size());
  parallel_for(q.x.size(), [&](std::size_t a) {
    const Vec3 v = q.x[a];
    PhasePoint y{x, v};
    double acc = simpson_weight(0, n) * g(t, y.X, y.V, v);
    for (int i = 1; i <= n; ++i) {
      double s1 = t - (i - 1) * h;
      y = rk4_back(field, prof, path, s1 - h, s1, y, 1);
      acc += simpson_weight(i, n) * g(t - i * h, y.X, y.V, v);
    }
    part[a] = q.w[a] * h * acc;
  });
  double s = 0.0;
  for (double p : part) s += p;
  return s;
}

template <class F>
SourceValue with_gradient(const F& f, const Vec3& x, const SourceOptions& opt) {
  SourceValue r;
  r.value = f(x);
  if (opt.gradient) {
    for (int d = 0; d < 3; ++d) {
      Vec3 e = Vec3::Zero();
      e[d] = opt.fd_step;
      r.grad[d] = (f(x + e) - f(x - e)) / (2 * opt.fd_step);
    }
  }
  return r;
}

}  // namespace

SourceValue reaction_term(const FieldSampler& field, const Profile& prof, const ChargePath& path, double t,
                          const Vec3& x, const SourceOptions& opt) {
  auto f = [&](const Vec3& xx) {
    return along_characteristics(field, prof, path, t, xx, opt,
                                 [&](double s, const Vec3& X, const Vec3& V, const Vec3& v) {
                                   return field.E(s, xx - (t - s) * v).dot(prof.mu_grad(v)) -
                                          field.E(s, X).dot(prof.mu_grad(V));
                                 });
  };
  return with_gradient(f, x, opt);
}

SourceValue charge_source(const FieldSampler& field, const Profile& prof, const ChargePath& path, double t,
                          const Vec3& x, const SourceOptions& opt) {
  const double e0 = prof.e0();
  auto f = [&](const Vec3& xx) {
    return along_characteristics(field, prof, path, t, xx, opt,
                                 [&](double s, const Vec3& X, const Vec3& V, const Vec3&) {
                                   return -e0 * prof.Phi_grad(X - path.X(s)).dot(prof.mu_grad(V));
                                 });
  };
  return with_gradient(f, x, opt);
}

SourceValue charge_source_linearized(const Profile& prof, const ChargePath& path, double t, const Vec3& x,
                                     const SourceOptions& opt) {
  const double e0 = prof.e0();
  const Vec3 Xt = path.X(t), Vt = path.V(t);
  QuadRule3 q = velocity_nodes(prof, opt.v);
  const double w = prof.params().Phi_width;
  const double hh = default_step(prof, path, opt.h);
  auto f = [&](const Vec3& xx) {
    if (prof.params().Phi_amplitude == 0.0 || q.x.empty()) return 0.0;
    Vec3 y = xx - Xt;
    std::vector<double> part(q.x.size());
    parallel_for(q.x.size(), [&](std::size_t a) {
      const Vec3 v = q.x[a];
      const Vec3 rel = v - Vt;
      // Beyond u_max the Gaussian factor is below 1e-12.
      double u_max = (y.norm() + 7.5 * w) / std::max(rel.norm(), 1e-12);
      int n = std::max(2, static_cast<int>(std::ceil(u_max / hh)));
      n += n % 2;
      double h = u_max / n, acc = 0.0;
      Vec3 gm = prof.mu_grad(v);
      for (int i = 0; i <= n; ++i) acc += simpson_weight(i, n) * prof.Phi_grad(y - i * h * rel).dot(gm);
      part[a] = -e0 * q.w[a] * h * acc;
    });
    double s = 0.0;
    for (double p : part) s += p;
    return s;
  };
  return with_gradient(f, x, opt);
}

double yt_norm(const std::vector<YSample>& samples, const ChargePath& path) {
  double best = 0.0;
  for (const auto& p : samples) {
    double tau = std::max(0.0, p.t - passage_time(path, p.x[0]));
    double d = std::max(0.0, p.x[0] - path.X1(p.t));
    double xp = std::hypot(p.x[1], p.x[2]);
    double w2 = jbracket(tau * tau + d * d + xp * xp);
    double w3 = jbracket(tau * tau * tau + d * d * d + xp * xp * xp);
    best = std::max(best, std::abs(p.val) * w2 + std::abs(p.grad) * w3);
  }
  return best;
}

}  // namespace vstop
