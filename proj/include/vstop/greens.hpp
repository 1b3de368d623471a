// Linear-response Green's function: Volterra resolvent in time, spectral
// construction through Psi = a/(1 - phi_hat a), pointwise G(t,x) and decay
// diagnostics.
#pragma once

#include "vstop/profiles.hpp"

#include <vector>

namespace vstop {

// K(t, xi) = phi_hat(xi) i xi . (grad mu)^(t xi) = -phi_hat |xi|^2 t mu_hat(t|xi|).
double volterra_kernel(const Profile& prof, double t, double k);
double volterra_kernel(const Profile& prof, double t, const Vec3& xi);

// Trapezoidal product integration of y = S + K * y on a uniform grid
// (K[n] = K(n dt)). Throws NumericalFailure if max |K| dt >= 1/2.
std::vector<double> volterra_march(const std::vector<double>& K, const std::vector<double>& S, double dt);
std::vector<cplx> volterra_march(const std::vector<double>& K, const std::vector<cplx>& S, double dt);

// G_hat(n dt, |xi| = k) for n = 0..n_steps as the resolvent of K.
std::vector<double> ghat_resolvent(const Profile& prof, double k, double dt, std::size_t n_steps);

// Spectral route. Holds gamma = a(r - i0) on the uniform r grid.
class SpectralGreen {
 public:
  explicit SpectralGreen(const Profile& prof, double h = 0.02, double extent = 400.0, double kappa_min = 1e-3);

  const Profile& profile() const { return prof_; }
  double spacing() const { return h_; }
  const std::vector<double>& r() const { return r_; }
  const std::vector<cplx>& gamma() const { return gamma_; }

  // min over the r grid of |1 - beta gamma(r)|.
  double min_denominator(double beta) const;

  // psi_hat_beta(p) = (1/2pi) int e^{irp} Psi_beta(r) dr.
  std::vector<cplx> psi_hat(double beta, const std::vector<double>& p) const;

  // G_hat(t, k) = phi_hat(k) k Re psi_hat_{phi_hat(k)}(t k).
  double ghat(double k, double t) const;
  std::vector<double> ghat(double k, const std::vector<double>& t) const;

  // Cubic B-spline coefficients of Psi_beta - H on the r grid.
  std::vector<cplx> coefficients(double beta) const;
  // Transform of the subtracted reference H(r) = (r-i)^-2 - 2i (r-i)^-3.
  static double reference_hat(double p);

 private:
  Profile prof_;
  double h_;
  double kappa_min_;
  std::vector<double> r_;
  std::vector<cplx> gamma_;
};

// Convenience wrapper building a SpectralGreen with default resolution.
double ghat_spectral(const Profile& prof, double k, double t);

// G_hat as a function of (t, |xi|) for arbitrary |xi|, through Chebyshev
// interpolation in beta = phi_hat(|xi|) of FFT tables of psi_hat_beta.
class GreenInterpolant {
 public:
  explicit GreenInterpolant(const SpectralGreen& sg, int beta_nodes = 40);
  double ghat(double t, double k) const;
  // Largest p at which some tabulated |psi_hat_beta(p)| exceeds 1e-12.
  double p_extent() const { return p_extent_; }
  // Thermal speed (gaussian) or support radius (bump), sets spatial extents.
  double velocity_scale() const { return v_scale_; }

 private:
  double psi_node(std::size_t node, double p) const;
  double v_scale_ = 1.0;
  std::vector<double> beta_;
  std::vector<std::vector<cplx>> table_;  // S_beta(m dp), m < table size
  double dp_ = 0.0, h_ = 0.0, p_extent_ = 0.0;
};

// Radial inverse transform of G_hat(t, .) at one fixed t.
class GreenSlice {
 public:
  // r_max: largest |x| at which values will be requested. refine scales the
  // quadrature density.
  GreenSlice(const GreenInterpolant& gi, double t, double r_max, int refine = 1);
  double G(double r) const;
  double gradG(double r) const;  // centered difference, step 1e-3
  // ||G(t)||_L1 = 4 pi int r^2 |G| dr over [0, r_l1].
  double L1(double r_l1, int refine = 1) const;
  double k_max() const { return kmax_; }

 private:
  double t_;
  std::vector<double> k_, w_, g_;
  double kmax_ = 0.0;
};

struct GreenSample {
  double t, r, G, gradG;
};

struct DecayReport {
  double sup_L1 = 0.0;     // sup (1+t) ||G(t)||_L1
  double sup_point = 0.0;  // sup (t^4 + |x|^4) |G|
  double sup_grad = 0.0;   // sup (t^5 + |x|^5) |grad G|
  std::vector<double> t, L1;
  std::vector<GreenSample> samples;
};

DecayReport decay_report(const GreenInterpolant& gi, const std::vector<double>& t_grid,
                         const std::vector<double>& x_grid, int refine = 1);
DecayReport decay_report(const Profile& prof, const std::vector<double>& t_grid, const std::vector<double>& x_grid,
                         int refine = 1);

// G(t, x) through the radial inverse transform.
double g_pointwise(const GreenInterpolant& gi, double t, const Vec3& x);

// Tabulated G_hat(t, |xi|) together with pointwise samples.
struct GreenTable {
  std::vector<double> xi_grid;
  std::vector<double> t_grid;
  std::vector<std::vector<double>> ghat;  // [xi index][t index]
  std::vector<GreenSample> g_samples;
};

GreenTable build_green_table(const SpectralGreen& sg, const std::vector<double>& xi_grid,
                             const std::vector<double>& t_grid, const std::vector<double>& r_grid);

}  // namespace vstop
