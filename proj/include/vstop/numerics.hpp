// Shared numerical helpers: vector aliases, Gauss-Legendre rules, adaptive
// quadrature wrappers and a small deterministic parallel loop.
#pragma once

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <complex>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace vstop {

// Numerical breakdown: instability, missing plateau, lost contraction.
struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using cplx = std::complex<double>;

constexpr double kPi = 3.14159265358979323846;

struct QuadRule {
  std::vector<double> x;
  std::vector<double> w;
};

// n-point Gauss-Legendre rule mapped to [a,b].
QuadRule gauss_legendre(int n, double a = -1.0, double b = 1.0);

// Composite rule: `panels` equal panels of an n-point rule on [a,b].
QuadRule composite_gauss_legendre(int n, int panels, double a, double b);

// Adaptive Gauss-Kronrod (61 point) with relative tolerance `tol`.
template <class F>
auto adaptive(F&& f, double a, double b, double tol = 1e-12, unsigned depth = 15) {
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, depth, tol, &err);
}

// Adaptive bisection with an absolute error target; for integrals whose value
// may be far below the size of the integrand.
template <class F>
auto adaptive_abs(F&& f, double a, double b, double abs_tol, unsigned depth = 15)
    -> decltype(f(0.0)) {
  double err = 0.0;
  auto v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 0, 0.0, &err);
  if (err <= abs_tol || depth == 0) return v;
  double m = 0.5 * (a + b);
  return adaptive_abs(f, a, m, 0.5 * abs_tol, depth - 1) + adaptive_abs(f, m, b, 0.5 * abs_tol, depth - 1);
}

// Worker count used by parallel_for. 0 means "not set": falls back to
// VSTOP_THREADS, then to the hardware concurrency.
void set_worker_count(int n);
int worker_count();

// Runs body(i) for i in [0,n). Indices are split into contiguous chunks, one
// per worker; results must be written to per-index slots so the outcome does
// not depend on the number of workers.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

// Japanese bracket <a> = sqrt(1+a^2).
inline double jbracket(double a) { return std::sqrt(1.0 + a * a); }

}  // namespace vstop
