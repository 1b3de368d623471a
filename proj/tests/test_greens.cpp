#include "doctest.h"
#include "vstop/greens.hpp"

#include <cmath>

using namespace vstop;

namespace {

Profile make(MuKind k) {
  ProfileParams p;
  p.mu_kind = k;
  return Profile(p);
}

// i k int e^{-i t k u} m'(u) du: the kernel straight from the gradient of mu.
double kernel_direct(const Profile& pr, double t, double k) {
  double W = pr.velocity_cutoff();
  cplx s = adaptive([&](double u) { return pr.marginal_deriv(u) * std::polar(1.0, -t * k * u); }, -W, W, 1e-13);
  return (phi_hat(k) * cplx(0.0, k) * s).real();
}

const SpectralGreen& gaussian_spectral() {
  static SpectralGreen sg(make(MuKind::gaussian));
  return sg;
}

}  // namespace

TEST_CASE("volterra kernel") {
  Profile g = make(MuKind::gaussian), b = make(MuKind::truncated_bump);
  CHECK(volterra_kernel(g, 0.0, 3.0) == 0.0);
  CHECK(volterra_kernel(g, 1.0, Vec3(0, 1, 0)) == doctest::Approx(-std::exp(-0.5) / 2).epsilon(1e-14));
  CHECK(volterra_kernel(make(MuKind::none), 1.0, 1.0) == 0.0);
  for (double t : {0.2, 1.0, 3.7})
    for (double k : {0.1, 1.0, 4.0}) {
      CHECK(std::abs(volterra_kernel(g, t, k) - kernel_direct(g, t, k)) < 1e-10);
      CHECK(std::abs(volterra_kernel(b, t, k) - kernel_direct(b, t, k)) < 1e-8);
    }
}

TEST_CASE("resolvent marching") {
  Profile e = make(MuKind::none), g = make(MuKind::gaussian);
  for (double v : ghat_resolvent(e, 1.0, 0.05, 100)) CHECK(v == 0.0);
  double dt = 0.01;
  auto G = ghat_resolvent(g, 1.0, dt, 500);
  CHECK(G[0] == 0.0);
  CHECK(std::abs(G[1] - volterra_kernel(g, dt, 1.0)) < 10 * dt * dt);
  // Resolvent identity with a fine trapezoid check.
  std::vector<double> K(G.size());
  for (std::size_t i = 0; i < K.size(); ++i) K[i] = volterra_kernel(g, i * dt, 1.0);
  double res = 0.0;
  for (std::size_t n = 1; n < G.size(); ++n) {
    double conv = 0.5 * (K[n] * G[0] + K[0] * G[n]);
    for (std::size_t j = 1; j < n; ++j) conv += K[n - j] * G[j];
    res = std::max(res, std::abs(G[n] - K[n] - dt * conv));
  }
  CHECK(res < 1e-12);
  std::vector<double> big(10, 100.0);
  CHECK_THROWS_AS(volterra_march(big, big, 0.01), NumericalFailure);
  // Halving dt: second-order convergence against the spectral value.
  const auto& sg = gaussian_spectral();
  double ref = sg.ghat(1.0, 2.0);
  auto G1 = ghat_resolvent(g, 1.0, 0.04, 50), G2 = ghat_resolvent(g, 1.0, 0.02, 100);
  double e1 = std::abs(G1[50] - ref), e2 = std::abs(G2[100] - ref);
  CHECK(e1 / e2 > 3.5);
  CHECK(e1 / e2 < 4.5);
}

TEST_CASE("spectral route") {
  const auto& sg = gaussian_spectral();
  Profile g = make(MuKind::gaussian);
  CHECK(sg.ghat(1.0, 0.0) == doctest::Approx(0.0).epsilon(1e-9));
  // Against the resolvent with a fine step.
  double dt = 0.0025;
  auto G = ghat_resolvent(g, 1.0, dt, 4000);
  for (int n : {200, 800, 2000, 4000}) CHECK(std::abs(sg.ghat(1.0, n * dt) - G[n]) < 1e-5);
  // Tail of Psi is the 1/r^2 tail of a.
  auto& r = sg.r();
  auto& gam = sg.gamma();
  std::size_t j = r.size() - 1;
  CHECK(std::abs(gam[j] * r[j] * r[j] - 1.0) < 1e-4);
  SpectralGreen se(make(MuKind::none), 0.05, 50.0);
  CHECK(se.ghat(1.0, 2.0) == 0.0);
}

TEST_CASE("beta interpolant and pointwise G") {
  const auto& sg = gaussian_spectral();
  GreenInterpolant gi(sg);
  CHECK(gi.p_extent() > 10.0);
  CHECK(gi.p_extent() < kPi / sg.spacing());
  for (double k : {0.05, 0.4, 1.3, 6.0})
    for (double t : {0.5, 3.0, 20.0}) CHECK(std::abs(gi.ghat(t, k) - sg.ghat(k, t)) < 1e-9);
  // G(t,0) = (2 pi^2)^-1 int k^2 G_hat dk with the direct spectral sums.
  double t = 4.0;
  QuadRule q = composite_gauss_legendre(10, 60, 0.0, 15.0);
  double s = 0.0;
  for (std::size_t i = 0; i < q.x.size(); ++i) s += q.w[i] * q.x[i] * q.x[i] * sg.ghat(q.x[i], t);
  s /= 2 * kPi * kPi;
  CHECK(std::abs(g_pointwise(gi, t, Vec3::Zero()) - s) < 1e-8 * std::max(1.0, std::abs(s)));
  GreenSlice sl(gi, t, 20.0);
  CHECK(std::abs(sl.G(1e-3) - sl.G(0.0)) < 1e-5 * std::abs(sl.G(0.0)) + 1e-12);
  CHECK(g_pointwise(gi, 0.0, Vec3(1, 0, 0)) == 0.0);
}
