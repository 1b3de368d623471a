// Physical inputs: radial velocity density mu, screened potential phi,
// charge potential Phi, charge sign e0 and coupling alpha.
#pragma once

#include "vstop/config.hpp"
#include "vstop/numerics.hpp"

#include <memory>

namespace vstop {

enum class MuKind { none, gaussian, truncated_bump };

struct ProfileParams {
  MuKind mu_kind = MuKind::truncated_bump;
  double radius = 2.0;  // truncated_bump support radius
  double sigma = 1.0;   // gaussian thermal speed
  int e0 = 1;
  double alpha = 1.0;
  double Phi_width = 1.0;
  double Phi_amplitude = 1.0;
};

// phi_hat(xi) = 1/(1+|xi|^2).
inline double phi_hat(double k) { return 1.0 / (1.0 + k * k); }
inline double phi_hat(const Vec3& xi) { return phi_hat(xi.norm()); }

class Profile {
 public:
  explicit Profile(const ProfileParams& p);

  const ProfileParams& params() const { return p_; }
  MuKind mu_kind() const { return p_.mu_kind; }
  int e0() const { return p_.e0; }
  double alpha() const { return p_.alpha; }
  bool empty() const { return p_.mu_kind == MuKind::none; }
  bool compact() const { return p_.mu_kind == MuKind::truncated_bump; }

  // mu as a function of |v| and its radial derivative.
  double mu_radial(double r) const;
  double mu_radial_deriv(double r) const;
  double mu_eval(const Vec3& v) const { return mu_radial(v.norm()); }
  Vec3 mu_grad(const Vec3& v) const;

  // Derivative of the one-dimensional marginal m(u) = int mu(u,v2,v3) dv2 dv3.
  double marginal_deriv(double u) const;

  // mu_hat(p e1), equal to the Fourier transform of the marginal.
  double mu_hat_line(double p) const;
  // Tabulated mu_hat_line (cubic B-spline, spacing 0.01) for hot loops;
  // exact for the gaussian. Zero beyond mu_hat_cutoff().
  double mu_hat_fast(double p) const;
  // Beyond this p, |p mu_hat(p)| stays below 1e-12.
  double mu_hat_cutoff() const { return p_cut_; }

  // Speed beyond which mu vanishes (bump) or is below double precision
  // relevance (gaussian, 10 sigma). Zero for the empty profile.
  double velocity_cutoff() const;
  // Support radius for compact profiles, 0 otherwise.
  double support_speed() const { return compact() ? p_.radius : 0.0; }

  double Phi_hat(double k) const;
  double Phi(const Vec3& x) const;
  Vec3 Phi_grad(const Vec3& x) const;
  Mat3 Phi_hess(const Vec3& x) const;

  Profile with_e0(int e0) const;
  Profile with_Phi_amplitude(double a) const;

 private:
  double scan_cutoff() const;
  ProfileParams p_;
  double norm_ = 0.0;  // 1/Z
  double p_cut_ = 0.0;
  struct Table;
  std::shared_ptr<const Table> table_;
};

ProfileParams profile_params_from(const Config& c);
Profile build_profile(const Config& c);

}  // namespace vstop
