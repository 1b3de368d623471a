// Backward characteristics in the total field, passage/collision-time
// geometry, the straightening map, source terms R, S_I, S_bar and the
// weighted Y_T norm.
#pragma once

#include "vstop/charge_dynamics.hpp"
#include "vstop/profiles.hpp"

#include <array>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace vstop {

// Charge path X^T: the recorded motion on [0,T], extended linearly with V0 for
// t < 0 and with V(T) for t > T. The path is assumed to lie on the e1 axis.
class ChargePath {
 public:
  static ChargePath straight(double V0, double T);
  // Cubic Hermite interpolation of a recorded trajectory (T = last sample).
  static ChargePath from_trajectory(const Trajectory& tr);

  Vec3 X(double s) const;
  Vec3 V(double s) const;
  double X1(double s) const { return X(s)[0]; }
  double T() const { return T_; }
  // min over [0,T] of V_1.
  double V_min() const { return vmin_; }

 private:
  std::vector<double> t_;
  std::vector<Vec3> X_, V_, A_;  // A_ = V'
  double T_ = 0.0, vmin_ = 0.0;
};

enum class FieldKind { zero, linear_response, simulator, synthetic };
std::string field_kind_name(FieldKind k);

struct FieldSampler {
  std::function<Vec3(double, const Vec3&)> E;
  std::function<Mat3(double, const Vec3&)> gradE;  // (i,j) = d E_i / d x_j
  FieldKind kind = FieldKind::zero;

  static FieldSampler zero();
  static FieldSampler constant(const Vec3& E0);
  // E = delta y (1+|y|^2)^{-3/2}, y = x - X(t): a smooth field following the charge.
  static FieldSampler following(double delta, const ChargePath& path);
  // Arbitrary closed-form field.
  static FieldSampler custom(std::function<Vec3(double, const Vec3&)> E, std::function<Mat3(double, const Vec3&)> gradE);
};

// Values on a periodic box with tricubic (Catmull-Rom) interpolation; the
// gradient is the exact derivative of the interpolant.
class PeriodicGrid3 {
 public:
  PeriodicGrid3(const Vec3& lo, const Vec3& length, int n1, int n2, int n3);
  double& at(int i, int j, int k) { return data_[index(i, j, k)]; }
  double at(int i, int j, int k) const { return data_[index(i, j, k)]; }
  double value(const Vec3& x) const;
  Vec3 gradient(const Vec3& x) const;
  int n(int d) const { return n_[d]; }
  const Vec3& lo() const { return lo_; }
  const Vec3& length() const { return len_; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t index(int i, int j, int k) const;
  template <bool Grad>
  void eval(const Vec3& x, double& v, Vec3& g) const;
  Vec3 lo_, len_, h_;
  int n_[3];
  std::vector<double> data_;
};

// Field on a box that follows the charge: E(t,x) = grid(x - X(t)).
FieldSampler grid_field(std::shared_ptr<const std::array<PeriodicGrid3, 3>> comps, const ChargePath& path,
                        FieldKind kind);

// Quasi-static wake of a charge moving with speed V along e1:
// E_inf = -grad phi * rho_inf with rho_inf from the steady-state modes, on a
// co-moving periodic box [-behind, ahead] x [-half, half]^2.
FieldSampler wake_field(const Profile& prof, const ChargePath& path, double V, double behind = 96.0,
                        double ahead = 32.0, double half = 16.0, double h = 0.5);

// Total force on plasma particles: E + e0 grad Phi(x - X(s)).
Vec3 total_field(const FieldSampler& f, const Profile& prof, const ChargePath& path, double s, const Vec3& x);

struct CharOptions {
  double rel_tol = 1e-6;  // Richardson error target, relative to (t - s)
  double h_max = 0.05;    // initial step
  int max_doublings = 12;
};

struct CharResult {
  Vec3 X_st = Vec3::Zero(), V_st = Vec3::Zero();
  Vec3 Ytilde = Vec3::Zero(), Wtilde = Vec3::Zero();
  // Collision-anchored deviations; present only for tau_x <= t.
  std::optional<Vec3> Y, W;
  double error = 0.0;  // Richardson estimate of the position error
  int steps = 0;
};

// Backward RK4 from (x, v) at time t to time s, refined by step doubling
// until the Richardson estimate is below rel_tol (t - s).
CharResult integrate_characteristics(const FieldSampler& field, const Profile& prof, const ChargePath& path, double s,
                                     double t, const Vec3& x, const Vec3& v, const CharOptions& opt = {});

enum class Region { front, post_collision, K, F, unclassified };
std::string region_name(Region r);

struct RegionParams {
  double beta = 0.1;
  double delta = 0.1;
  double s = 0.0;  // time at which the K / F sets are evaluated
};

struct GeometrySample {
  double tau_x = 0.0, tau_check = 0.0, d_check = 0.0;
  bool has_collision = false;  // |v| <= V_min/2
  double T_coll = std::numeric_limits<double>::quiet_NaN();
  double T_check = std::numeric_limits<double>::quiet_NaN();
  Vec3 x_impact = Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
  Eigen::Vector2d v_star_perp = Eigen::Vector2d::Constant(std::numeric_limits<double>::quiet_NaN());
  Region region = Region::unclassified;
};

// Passage time tau with X_1^T(tau) = target (bisection then Newton).
double passage_time(const ChargePath& path, double target);
// Collision time with X_1^T(tau) = x1 - (t - tau) v1.
double collision_time(const ChargePath& path, double t, double x1, double v1);

GeometrySample geometry(const ChargePath& path, double t, const Vec3& x, const Vec3& v, const RegionParams& rp = {});

struct StraightenResult {
  Vec3 psi = Vec3::Zero();
  bool contraction_ok = false;
  bool converged = false;
  int iterations = 0;
  double lipschitz = 0.0;  // largest probed |grad_v Ytilde| / (t - s)
  double residual = 0.0;   // |X_st(x, psi) - (x - (t-s) v_target)|
  double shift = 0.0;      // |psi - v_target|
  double shift_bound = 0.0;  // 2 |Ytilde(x, v_target)| / (t - s)
  std::string message;
};

// Fixed point of v -> v_target + Ytilde_{s,t}(x, v)/(t - s).
StraightenResult straighten(const FieldSampler& field, const Profile& prof, const ChargePath& path, double s, double t,
                            const Vec3& x, const Vec3& v_target, int max_iter = 50, double tol = 1e-11);

struct QuadRule3 {
  std::vector<Vec3> x;
  std::vector<double> w;
};

// Velocity nodes on supp mu: radial Gauss-Legendre times an angular rule.
struct VelocityQuadrature {
  int radial = 16;
  int angular = 26;  // 26: degree-7 Lebedev rule; otherwise a product rule with `angular` polar nodes
  int azimuthal = 0;  // product rule only; 0 means 2 * angular
  double radius = 0.0;  // 0: support radius (bump) or 8 sigma (gaussian)
};
QuadRule3 velocity_nodes(const Profile& prof, const VelocityQuadrature& q);

struct SourceOptions {
  VelocityQuadrature v;
  double h = 0.0;  // time step of the backward characteristics; 0: chosen from the charge speed
  bool gradient = false;
  double fd_step = 1e-3;
};

struct SourceValue {
  double value = 0.0;
  Vec3 grad = Vec3::Zero();
};

// R(t,x) = int_0^t int [E(s, x-(t-s)v).grad mu(v) - E(s, X_st).grad mu(V_st)] dv ds.
SourceValue reaction_term(const FieldSampler& field, const Profile& prof, const ChargePath& path, double t,
                          const Vec3& x, const SourceOptions& opt = {});
// S_I(t,x) = -int_0^t int e0 grad Phi(X_st - X(s)).grad mu(V_st) dv ds.
SourceValue charge_source(const FieldSampler& field, const Profile& prof, const ChargePath& path, double t,
                          const Vec3& x, const SourceOptions& opt = {});
// S_bar(t,x) = -e0 int_{-inf}^t int grad Phi(x-(t-s)v - (X(t)-(t-s)V(t))).grad mu(v) dv ds.
SourceValue charge_source_linearized(const Profile& prof, const ChargePath& path, double t, const Vec3& x,
                                     const SourceOptions& opt = {});

struct YSample {
  double t;
  Vec3 x;
  double val;
  double grad;  // |grad|
};
// sup |val| <tau^2 + d^2 + |x_perp|^2> + |grad| <tau^3 + d^3 + |x_perp|^3>.
double yt_norm(const std::vector<YSample>& samples, const ChargePath& path);

}  // namespace vstop
