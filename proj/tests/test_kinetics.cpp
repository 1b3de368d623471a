#include "doctest.h"
#include "minigrid.hpp"
#include "vstop/kinetics.hpp"

#include <cmath>
#include <random>

using namespace vstop;

namespace {

Profile make(MuKind k, double amp = 1.0) {
  ProfileParams p;
  p.mu_kind = k;
  p.Phi_amplitude = amp;
  return Profile(p);
}

ChargePath slowing_path() {
  // V^3 = 1000 - 30 t: from 10 down to about 7.4 at T = 20.
  Profile b = make(MuKind::truncated_bump);
  auto tr = decelerate(b, 10.0, 20.0, 0.05, [](double) { return 10.0; }, StopRule::none());
  return ChargePath::from_trajectory(tr);
}

Vec3 random_in_ball(std::mt19937_64& g, double r) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    Vec3 v(u(g), u(g), u(g));
    if (v.norm() <= 1.0) return r * v;
  }
}

}  // namespace

TEST_CASE("charge path") {
  auto s = ChargePath::straight(5.0, 10.0);
  CHECK(s.X(3.0)[0] == doctest::Approx(15.0));
  CHECK(s.X(-2.0)[0] == doctest::Approx(-10.0));
  CHECK(s.X(12.0)[0] == doctest::Approx(60.0));
  auto p = slowing_path();
  for (double t : {0.0, 3.3, 12.01, 20.0}) CHECK(p.V(t)[0] == doctest::Approx(std::cbrt(1000.0 - 30.0 * t)).epsilon(1e-8));
  CHECK(p.V_min() == doctest::Approx(std::cbrt(400.0)));
  CHECK(p.X(25.0)[0] == doctest::Approx(p.X(20.0)[0] + 5.0 * p.V(20.0)[0]));
  // X' = V across the Hermite pieces.
  for (double t : {1.013, 7.5, 19.97}) CHECK((p.X(t + 1e-5)[0] - p.X(t - 1e-5)[0]) / 2e-5 == doctest::Approx(p.V(t)[0]).epsilon(1e-7));
}

TEST_CASE("field samplers") {
  auto path = ChargePath::straight(8.0, 10.0);
  std::mt19937_64 g(3);
  std::vector<FieldSampler> fields{FieldSampler::following(0.2, path), minigrid::sampler(0.3)};
  for (auto& f : fields)
    for (int i = 0; i < 50; ++i) {
      double t = 10.0 * std::generate_canonical<double, 53>(g);
      Vec3 x = path.X(t) + random_in_ball(g, 3.0);
      Mat3 J = f.gradE(t, x), fd;
      for (int d = 0; d < 3; ++d) {
        Vec3 e = Vec3::Zero();
        e[d] = 1e-5;
        fd.col(d) = (f.E(t, x + e) - f.E(t, x - e)) / 2e-5;
      }
      CHECK((J - fd).norm() <= 1e-4 * std::max(J.norm(), 1e-3));
    }
  CHECK(FieldSampler::zero().kind == FieldKind::zero);
  CHECK(field_kind_name(FieldKind::linear_response) == "linear_response");

  PeriodicGrid3 grid(Vec3(0, 0, 0), Vec3(2 * kPi, 2 * kPi, 2 * kPi), 32, 32, 32);
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j)
      for (int k = 0; k < 32; ++k) grid.at(i, j, k) = std::sin(i * 2 * kPi / 32) * std::cos(k * 2 * kPi / 32);
  Vec3 x(0.31, 1.7, 2.2);
  CHECK(grid.value(x) == doctest::Approx(std::sin(0.31) * std::cos(2.2)).epsilon(2e-3));
  CHECK(grid.gradient(x)[0] == doctest::Approx(std::cos(0.31) * std::cos(2.2)).epsilon(5e-3));
  CHECK(std::abs(grid.gradient(x)[1]) < 1e-12);
  CHECK(grid.value(x + Vec3(2 * kPi, 0, -2 * kPi)) == doctest::Approx(grid.value(x)));
}

TEST_CASE("wake field matches the steady force") {
  Profile b = make(MuKind::truncated_bump);
  const double V = 12.0;
  auto path = ChargePath::straight(V, 40.0);
  auto w = wake_field(b, path, V);
  CHECK(w.kind == FieldKind::linear_response);
  Vec3 E = w.E(10.0, path.X(10.0));
  auto st = force_steadystate(b, Vec3(V, 0, 0), ForceGrid{});
  CHECK(-b.e0() * E[0] == doctest::Approx(st.force[0]).epsilon(0.03));
  CHECK(std::abs(E[1]) < 1e-12);
  auto none = wake_field(make(MuKind::truncated_bump, 0.0), path, V);
  CHECK(none.E(1.0, Vec3(3, 1, 0)).norm() == 0.0);
}

TEST_CASE("characteristics closed forms") {
  Profile quiet = make(MuKind::gaussian, 0.0);
  auto path = ChargePath::straight(10.0, 20.0);
  const Vec3 x(3.0, -1.0, 0.5), v(0.4, -0.2, 1.1);
  auto r = integrate_characteristics(FieldSampler::zero(), quiet, path, 2.0, 7.0, x, v);
  CHECK((r.X_st - (x - 5.0 * v)).norm() < 1e-12);
  CHECK(r.Ytilde.norm() < 1e-12);
  CHECK(r.Wtilde.norm() < 1e-12);
  REQUIRE(r.Y.has_value());
  CHECK(r.Y->norm() < 1e-12);
  CHECK(r.W->norm() < 1e-12);

  const Vec3 E0(0.3, -0.1, 0.2);
  r = integrate_characteristics(FieldSampler::constant(E0), quiet, path, 1.0, 6.0, x, v);
  CHECK((r.Ytilde - E0 * 12.5).norm() < 1e-8);
  CHECK((r.Wtilde + E0 * 5.0).norm() < 1e-8);
  CHECK((r.X_st - (x - 5.0 * v + r.Ytilde)).norm() <= 1e-14 * r.X_st.norm());
  CHECK((r.V_st - (v + r.Wtilde)).norm() <= 1e-14 * r.V_st.norm());

  // Ahead of the charge at time t there is no passage yet.
  auto ahead = integrate_characteristics(FieldSampler::zero(), quiet, path, 0.0, 1.0, Vec3(50, 0, 0), v);
  CHECK_FALSE(ahead.Y.has_value());
  CHECK_THROWS_AS(integrate_characteristics(FieldSampler::zero(), quiet, path, 2.0, 1.0, x, v), std::invalid_argument);
}

TEST_CASE("characteristics semigroup and support") {
  Profile b = make(MuKind::truncated_bump);
  auto path = slowing_path();
  auto f = FieldSampler::following(0.05, path);
  CharOptions opt;
  opt.rel_tol = 1e-11;
  std::mt19937_64 g(11);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    double t = 4.0 + 12.0 * std::generate_canonical<double, 53>(g);
    double s = 0.3 * t, sp = 0.6 * t;
    Vec3 x = path.X(t) + random_in_ball(g, 4.0), v = random_in_ball(g, 2.0);
    auto mid = integrate_characteristics(f, b, path, sp, t, x, v, opt);
    auto two = integrate_characteristics(f, b, path, s, sp, mid.X_st, mid.V_st, opt);
    auto one = integrate_characteristics(f, b, path, s, t, x, v, opt);
    worst = std::max({worst, (two.X_st - one.X_st).norm(), (two.V_st - one.V_st).norm()});
  }
  CHECK(worst <= 1e-8);

  const double vmin = path.V_min();
  for (int i = 0; i < 200; ++i) {
    double t = 20.0 * std::generate_canonical<double, 53>(g);
    double s = t * std::generate_canonical<double, 53>(g);
    Vec3 x = path.X(t) + random_in_ball(g, 5.0);
    Vec3 v = random_in_ball(g, 2.0 * vmin);
    if (v.norm() < vmin / 4) continue;
    auto r = integrate_characteristics(f, b, path, s, t, x, v);
    CHECK(r.V_st.norm() >= vmin / 5);
  }
}

TEST_CASE("geometry on a straight path") {
  const double V0 = 6.0, t = 4.0;
  auto path = ChargePath::straight(V0, 10.0);
  Vec3 x(13.0, 0.5, -1.0), v(1.5, 0.2, 0.1);
  auto gs = geometry(path, t, x, v);
  CHECK(gs.tau_x == doctest::Approx(13.0 / V0));
  CHECK(gs.tau_check == doctest::Approx(t - 13.0 / V0));
  CHECK(gs.d_check == 0.0);
  REQUIRE(gs.has_collision);
  CHECK(gs.T_coll == doctest::Approx((13.0 - t * 1.5) / (V0 - 1.5)));
  CHECK(gs.T_check == doctest::Approx(t - gs.T_coll));
  CHECK((gs.x_impact - (x - gs.T_check * v)).norm() < 1e-14);
  CHECK(gs.v_star_perp[0] == doctest::Approx(0.5 / gs.T_check));

  auto still = geometry(path, t, x, Vec3::Zero());
  CHECK(still.T_coll == still.tau_x);
  CHECK(still.T_check == still.tau_check);

  // Negative passage time uses the linear extension; front points have d > 0.
  auto front = geometry(path, t, Vec3(40.0, 0, 0), Vec3::Zero());
  CHECK(front.d_check == doctest::Approx(40.0 - V0 * t));
  CHECK(front.tau_check == 0.0);
  CHECK(front.region == Region::front);
  CHECK(geometry(path, t, Vec3(-12.0, 0, 0), Vec3::Zero()).tau_x == doctest::Approx(-2.0));

  auto fast = geometry(path, t, x, Vec3(3.5, 0, 0));
  CHECK_FALSE(fast.has_collision);
  CHECK(std::isnan(fast.T_coll));
  CHECK(fast.region == Region::unclassified);
  CHECK(region_name(Region::post_collision) == "post_collision");
}

TEST_CASE("passage time identities on random probes") {
  auto path = slowing_path();
  const double vmin = path.V_min();
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> ut(0.0, 20.0), ux(-40.0, 40.0);
  int with_collision = 0, regions[5] = {0, 0, 0, 0, 0};
  for (int i = 0; i < 10000; ++i) {
    double t = ut(g);
    Vec3 x(path.X1(t) + ux(g), ux(g) / 8, ux(g) / 8);
    Vec3 v = random_in_ball(g, 0.5 * vmin);
    auto gs = geometry(path, t, x, v);
    CHECK(std::abs(path.X1(gs.tau_x) - x[0]) <= 1e-10 * std::max(1.0, std::abs(x[0])));
    CHECK(gs.d_check * gs.tau_check == 0.0);
    REQUIRE(gs.has_collision);
    ++with_collision;
    ++regions[static_cast<int>(gs.region)];
    auto g0 = geometry(path, t, x, Vec3::Zero());
    CHECK(g0.T_coll == g0.tau_x);
    if (gs.T_check > 0.0) {
      CHECK(gs.T_check >= gs.tau_check / 2 - 1e-12);
      CHECK(gs.T_check <= 2 * gs.tau_check + 1e-12);
      CHECK(passage_time(path, gs.x_impact[0]) == doctest::Approx(gs.T_coll).epsilon(1e-9));
      // |grad_x T_check| <= 2/V_min.
      Vec3 grad;
      for (int d = 0; d < 3; ++d) {
        Vec3 e = Vec3::Zero();
        e[d] = 1e-6;
        grad[d] = (geometry(path, t, x + e, v).T_check - geometry(path, t, x - e, v).T_check) / 2e-6;
      }
      CHECK(grad.norm() <= 2.0 / vmin * (1 + 1e-5));
    } else {
      CHECK(gs.tau_check == 0.0);
    }
  }
  CHECK(with_collision == 10000);
  CHECK(regions[static_cast<int>(Region::front)] > 0);
}

TEST_CASE("region classification") {
  auto path = ChargePath::straight(10.0, 40.0);
  RegionParams rp;
  rp.s = 0.0;
  // Just behind the charge, outside its transverse reach: K.
  auto k = geometry(path, 20.0, Vec3(195.0, 3.0, 0.0), Vec3(0.5, 0.0, 0.0), rp);
  CHECK(k.region == Region::K);
  // Behind with a large transverse miss of the charge: F.
  auto f = geometry(path, 20.0, Vec3(50.0, 0.0, 0.0), Vec3(0.5, 0.9, 0.0), rp);
  CHECK(f.region == Region::F);
  rp.s = 20.0;
  CHECK(geometry(path, 20.0, Vec3(195.0, 3.0, 0.0), Vec3(0.5, 0.0, 0.0), rp).region == Region::post_collision);
}

TEST_CASE("straightening") {
  Profile quiet = make(MuKind::gaussian, 0.0);
  auto path = ChargePath::straight(10.0, 20.0);
  const Vec3 x(30.0, 1.0, 0.5), vt(0.3, -0.4, 0.2);
  auto z = straighten(FieldSampler::zero(), quiet, path, 1.0, 4.0, x, vt);
  CHECK(z.converged);
  CHECK(z.iterations == 1);
  CHECK((z.psi - vt).norm() < 1e-12);

  const Vec3 E0(0.02, -0.01, 0.03);
  auto c = straighten(FieldSampler::constant(E0), quiet, path, 1.0, 4.0, x, vt);
  REQUIRE(c.converged);
  CHECK((c.psi - vt - E0 * 1.5).norm() < 1e-9);
  CHECK(c.residual <= 1e-6);
  CHECK(c.shift <= c.shift_bound);

  Profile b = make(MuKind::truncated_bump);
  auto p = slowing_path();
  auto f = FieldSampler::following(0.05, p);
  std::mt19937_64 g(9);
  int converged = 0;
  for (int i = 0; i < 20; ++i) {
    double t = 6.0 + 10.0 * std::generate_canonical<double, 53>(g);
    double s = 0.5 * t;
    Vec3 xx = p.X(t) + Vec3(-30.0, 6.0, 0.0) + random_in_ball(g, 2.0);
    auto r = straighten(f, b, p, s, t, xx, random_in_ball(g, 1.5));
    if (!r.contraction_ok) continue;
    CHECK(r.converged);
    CHECK(r.iterations <= 20);
    CHECK(r.residual <= 1e-6);
    CHECK(r.shift <= r.shift_bound);
    ++converged;
  }
  CHECK(converged > 10);

  // A near-collision trajectory over a long window fails the probe.
  ProfileParams strong;
  strong.Phi_amplitude = 200.0;
  Profile hit(strong);
  auto bad = straighten(FieldSampler::zero(), hit, path, 0.0, 6.0, path.X(6.0) - Vec3(30.0, 0, 0), Vec3(5.0, 0, 0));
  CHECK_FALSE(bad.contraction_ok);
  CHECK_FALSE(bad.converged);
}

TEST_CASE("velocity quadrature") {
  Profile gs = make(MuKind::gaussian);
  Profile b = make(MuKind::truncated_bump);
  for (const Profile* p : {&gs, &b}) {
    for (int ang : {26, 8}) {
      VelocityQuadrature q;
      q.angular = ang;
      q.radial = 32;
      auto r = velocity_nodes(*p, q);
      double m0 = 0.0, m1 = 0.0;
      for (std::size_t i = 0; i < r.x.size(); ++i) {
        m0 += r.w[i] * p->mu_eval(r.x[i]);
        m1 += r.w[i] * p->mu_eval(r.x[i]) * r.x[i][0];
      }
      CHECK(m0 == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(std::abs(m1) < 1e-12);
    }
  }
  CHECK(velocity_nodes(make(MuKind::none), VelocityQuadrature{}).x.empty());
}

TEST_CASE("source terms") {
  Profile b = make(MuKind::truncated_bump);
  Profile quiet = make(MuKind::truncated_bump, 0.0);
  auto path = ChargePath::straight(10.0, 30.0);
  const Vec3 x = path.X(20.0) + Vec3(-1.0, 0.7, 0.2);
  SourceOptions o;
  o.gradient = true;
  auto r0 = reaction_term(FieldSampler::zero(), b, path, 20.0, x, o);
  CHECK(r0.value == 0.0);
  CHECK(r0.grad.norm() == 0.0);
  auto f = FieldSampler::following(0.1, path);
  CHECK(charge_source(f, quiet, path, 20.0, x, o).value == 0.0);
  CHECK(charge_source_linearized(quiet, path, 20.0, x, o).value == 0.0);

  // Frozen coefficients: S_bar tracks S_I near a steadily moving charge.
  for (double d : {-2.0, -0.5, 0.5, 1.5}) {
    Vec3 y = path.X(20.0) + Vec3(d, 0.7, 0.2);
    double si = charge_source(FieldSampler::zero(), b, path, 20.0, y).value;
    double sb = charge_source_linearized(b, path, 20.0, y).value;
    CHECK(sb == doctest::Approx(si).epsilon(1e-2));
  }
  // e0 flips the charge source.
  double sp = charge_source_linearized(b, path, 20.0, x).value;
  double sm = charge_source_linearized(b.with_e0(-1), path, 20.0, x).value;
  CHECK(sm == doctest::Approx(-sp));
  // Gradient by central differences agrees with a wider stencil.
  auto g1 = charge_source_linearized(b, path, 20.0, x, o);
  o.fd_step = 2e-3;
  auto g2 = charge_source_linearized(b, path, 20.0, x, o);
  CHECK((g1.grad - g2.grad).norm() <= 1e-4 * g1.grad.norm());
}

TEST_CASE("reaction term against the mini-grid Vlasov oracle") {
  Profile g = make(MuKind::gaussian, 0.0);
  const double eps = 0.3, t = 2.0;
  const int ix0 = (3 * minigrid::N + 5) * minigrid::N + 9;
  double oracle = minigrid::reaction(g, eps, t, 40, ix0);
  Vec3 x0 = minigrid::node(ix0, 0.0, minigrid::kLx / minigrid::N);
  SourceOptions o;
  o.h = 0.02;
  o.v.radial = 24;
  o.v.angular = 10;
  o.v.azimuthal = 20;
  auto r = reaction_term(minigrid::sampler(eps), g, ChargePath::straight(10.0, 10.0), t, x0, o);
  CHECK(std::abs(r.value / oracle - 1.0) <= 5e-2);
  CHECK(std::abs(r.value) > 1e-3);
}

TEST_CASE("Y_T norm") {
  auto path = ChargePath::straight(5.0, 10.0);
  std::vector<YSample> s;
  std::mt19937_64 g(2);
  for (int i = 0; i < 100; ++i) {
    double t = 10.0 * std::generate_canonical<double, 53>(g);
    Vec3 x = path.X(t) + random_in_ball(g, 20.0);
    s.push_back({t, x, 0.0, 0.0});
  }
  CHECK(yt_norm(s, path) == 0.0);
  for (auto& p : s) {
    auto gs = geometry(path, p.t, p.x, Vec3::Zero());
    double q = gs.tau_check * gs.tau_check + gs.d_check * gs.d_check + p.x[1] * p.x[1] + p.x[2] * p.x[2];
    p.val = 1.0 / (1.0 + q);
  }
  double n = yt_norm(s, path);
  CHECK(n >= 1.0 / std::sqrt(2.0));
  CHECK(n <= std::sqrt(2.0));
  auto wide = s;
  for (auto& p : wide) {
    p.x[1] *= 2;
    p.x[2] *= 2;
  }
  CHECK(yt_norm(wide, path) > n);
}
