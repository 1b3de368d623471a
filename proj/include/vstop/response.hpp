// Linear response to a charge moving along a straight line: per-mode density
// histories, the stopping force by a time-domain and a steady-state route, and
// the stopping coefficient A.
#pragma once

#include "vstop/config.hpp"
#include "vstop/profiles.hpp"

#include <functional>
#include <string>
#include <vector>

namespace vstop {

struct ModeSeries {
  Vec3 xi = Vec3::Zero();
  std::vector<double> t_grid;
  std::vector<cplx> shat;
  std::vector<cplx> rhohat;
};

enum class ForceRoute { timedomain, steadystate };
std::string route_name(ForceRoute r);

struct StoppingResult {
  Vec3 Vstar = Vec3::Zero();
  Vec3 force = Vec3::Zero();  // -e0 E at the charge, so that V' = alpha force
  double A_est = 0.0;
  ForceRoute route = ForceRoute::steadystate;
  // Time-domain only: R at which the plateau detector fired, and the history
  // F(R) . V_hat on multiples of the plateau window.
  double R = 0.0;
  std::vector<double> R_samples, F_samples;
};

struct ForceGrid {
  int k_nodes = 48;
  int c_nodes = 48;
  double k_max = 0.0;  // 0: chosen from the decay of Phi_hat
  double plateau_window = 5.0;
  double plateau_tol = 1e-3;
  double R_max = 200.0;
  double kappa_min = 1e-3;
};
ForceGrid force_grid_from(const Config& c);

// Fourier transform at xi of the source generated by a charge with
// X(s) = X* - (R - s) V*:
//   e0 Phi_hat |xi|^2 int_0^t (t-s) mu_hat((t-s)|xi|) e^{-i xi.X(s)} ds.
cplx source_hat(const Profile& prof, double R, const Vec3& Vstar, double t, const Vec3& xi,
                const Vec3& Xstar = Vec3::Zero());

// rho_hat = S_hat + int_0^t K(t-s) rho_hat(s) ds on a uniform grid starting at 0
// (trapezoidal product integration). Throws NumericalFailure if the step is
// too large for the march to be a contraction.
ModeSeries solve_rho(const Profile& prof, const std::function<cplx(double)>& shat, const Vec3& xi,
                     const std::vector<double>& t_grid);

// Force from the per-mode histories at t = R, with R increased in steps of the
// plateau window until |F(R) - F(R - dR)| < tol |F(R)|. Throws
// NumericalFailure if no plateau is found by R_max.
StoppingResult force_timedomain(const Profile& prof, const Vec3& Vstar, const ForceGrid& grid);

// Force from the R -> infinity limit of every mode, with the resonant
// denominator evaluated at x = -xi.V*/|xi| - i0. Throws NumericalFailure if
// |1 - phi_hat gamma| < kappa_min at a node.
StoppingResult force_steadystate(const Profile& prof, const Vec3& Vstar, const ForceGrid& grid);

// A_est = -|V*|^2 force.V*/|V*|.
double stopping_coefficient(const Profile& prof, const Vec3& Vstar, const ForceGrid& grid,
                            ForceRoute route = ForceRoute::steadystate);

// Steady-state limit of one mode, rho_hat(R, xi) for R -> infinity with X* = 0.
cplx steady_mode(const Profile& prof, const Vec3& Vstar, const Vec3& xi);

}  // namespace vstop
