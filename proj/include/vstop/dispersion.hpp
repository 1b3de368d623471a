// Dispersion function a(z), its boundary values gamma(x) = a(x - i0) and the
// Penrose margin / winding-number test.
#pragma once

#include "vstop/profiles.hpp"

#include <string>
#include <vector>

namespace vstop {

struct PenroseReport {
  double kappa = 0.0;
  int winding = 0;
  double worst_xi = 0.0;
  std::vector<double> x;
  std::vector<cplx> gamma;
  std::vector<double> margin_at_x;  // min over the xi grid of |1 - phi_hat a(x - i0)|
  bool crosses_half_line = false;
  bool stable = false;
  std::vector<std::string> warnings;
};

// -int_0^inf e^{-ipz} p mu_hat(p) dp for Im z <= -eps; for compact mu the
// equivalent int m'(u)/(u+z) du is used. Throws
// std::domain_error if Im z > -eps/2.
cplx a_interior(const Profile& prof, cplx z, double eps = 1e-7);

// gamma(x) = lim a(x - i eps): principal value of int m'(w)/(w-x) dw plus the
// Plemelj term -i pi m'(x).
cplx a_boundary(const Profile& prof, double x);

// Uniform real grid covering the support of Im gamma with margin.
std::vector<double> default_x_grid(const Profile& prof, int n);
// |xi| = 0 plus log-spaced values in [1e-3, 1e2].
std::vector<double> default_xi_grid(int n);

PenroseReport penrose_margin(const Profile& prof, const std::vector<double>& xi_grid,
                             const std::vector<double>& x_grid, double kappa_min = 1e-3);

}  // namespace vstop
