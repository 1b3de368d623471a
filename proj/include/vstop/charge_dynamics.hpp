// Point-charge deceleration under the quasi-static stopping force
// V' = -alpha A(|V|) V/|V|^3, and the cube-root envelope check.
#pragma once

#include "vstop/response.hpp"

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace vstop {

enum class StopReason { reached_threshold, reached_logbound, support_violation, t_end };
std::string stop_reason_name(StopReason r);

struct Trajectory {
  std::vector<double> t;
  std::vector<Vec3> X, V, F;  // F is the force, V' = alpha F
  StopReason stop_reason = StopReason::t_end;
  double alpha = 1.0;
};

// The run ends at the first of |V| = speed_threshold, |V| = (log V0)^logbound_n
// and |V| = 5 * support speed; the last step is shortened to land on it.
struct StopRule {
  double speed_threshold = 4.0;
  double logbound_n = 1.0;
  bool support_check = true;
  static StopRule none() { return {0.0, 0.0, false}; }
};
StopRule stop_rule_from(const Config& c);
// Speed at which a run from V0 stops under the rule (0: none), and the reason.
std::pair<double, StopReason> stop_level(const Profile& prof, double V0, const StopRule& rule);

// Cubic spline of A over a log-spaced speed table.
class ATable {
 public:
  ATable(const Profile& prof, double v_lo, double v_hi, int nodes, const ForceGrid& grid,
         ForceRoute route = ForceRoute::steadystate);
  double operator()(double V) const;
  const std::vector<double>& speeds() const { return speeds_; }
  const std::vector<double>& values() const { return values_; }
  // Extremes of the interpolant over [a, b] (clamped to the table range).
  std::pair<double, double> range(double a, double b) const;

 private:
  std::vector<double> speeds_, values_;
  double lo_, hi_;
  boost::math::interpolators::cardinal_cubic_b_spline<double> spline_;
};

using AFunction = std::function<double(double)>;

// RK4 for X' = V, V' = -alpha A(|V|) V/|V|^3 from X = 0, V = V0 e1.
Trajectory decelerate(const Profile& prof, double V0, double t_end, double dt, const AFunction& A,
                      const StopRule& rule = StopRule{});
// Same with an arbitrary initial velocity vector and position.
Trajectory decelerate(const Profile& prof, const Vec3& X0, const Vec3& V0, double t_end, double dt, const AFunction& A,
                      const StopRule& rule);

struct EnvelopeReport {
  bool pass = true;
  double first_violation_t = std::numeric_limits<double>::quiet_NaN();
  std::string what;
  std::size_t checked = 0;
  double t_start = 0.0;  // 8 V0^{-3/5}; earlier samples are skipped
};

// Checks -alpha A_max/|V| <= V'.V <= -alpha A_min/|V| (with V' = alpha F from the
// record) and (V0^3 - 1 - 3 alpha A_max t)^{1/3} <= |V| <= (V0^3 + 1 - 3 alpha A_min t)^{1/3}.
EnvelopeReport envelope_check(const Trajectory& tr, double A_min, double A_max);

}  // namespace vstop
