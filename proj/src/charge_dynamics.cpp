#include "vstop/charge_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vstop {

std::string stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::reached_threshold:
      return "reached_threshold";
    case StopReason::reached_logbound:
      return "reached_logbound";
    case StopReason::support_violation:
      return "support_violation";
    case StopReason::t_end:
      break;
  }
  return "t_end";
}

StopRule stop_rule_from(const Config& c) {
  StopRule r;
  r.speed_threshold = c.num("numerics.speed_threshold");
  r.logbound_n = c.num("numerics.logbound_n");
  return r;
}

namespace {

std::vector<double> log_speeds(double lo, double hi, int n) {
  if (!(lo > 0.0) || !(hi > lo) || n < 4) throw std::invalid_argument("ATable needs 0 < v_lo < v_hi and >= 4 nodes");
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (n - 1));
  return v;
}

std::vector<double> a_values(const Profile& prof, const std::vector<double>& v, const ForceGrid& grid,
                             ForceRoute route) {
  std::vector<double> a(v.size());
  parallel_for(v.size(), [&](std::size_t i) { a[i] = stopping_coefficient(prof, Vec3(v[i], 0, 0), grid, route); });
  return a;
}

}  // namespace

ATable::ATable(const Profile& prof, double v_lo, double v_hi, int nodes, const ForceGrid& grid, ForceRoute route)
    : speeds_(log_speeds(v_lo, v_hi, nodes)),
      values_(a_values(prof, speeds_, grid, route)),
      lo_(v_lo),
      hi_(v_hi),
      spline_(values_.begin(), values_.end(), std::log(v_lo), (std::log(v_hi) - std::log(v_lo)) / (nodes - 1)) {}

double ATable::operator()(double V) const {
  double l = std::clamp(std::log(V), std::log(lo_), std::log(hi_));
  return spline_(l);
}

std::pair<double, double> ATable::range(double a, double b) const {
  a = std::clamp(a, lo_, hi_);
  b = std::clamp(b, lo_, hi_);
  if (a > b) std::swap(a, b);
  double mn = (*this)(a), mx = mn;
  const int n = 400;
  for (int i = 1; i <= n; ++i) {
    double v = (*this)(a + (b - a) * i / n);
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  return {mn, mx};
}

std::pair<double, StopReason> stop_level(const Profile& prof, double V0, const StopRule& rule) {
  double level = 0.0;
  StopReason why = StopReason::t_end;
  auto consider = [&](double v, StopReason r) {
    if (v > level) {
      level = v;
      why = r;
    }
  };
  consider(rule.speed_threshold, StopReason::reached_threshold);
  if (rule.logbound_n > 0.0 && V0 > 1.0) consider(std::pow(std::log(V0), rule.logbound_n), StopReason::reached_logbound);
  if (rule.support_check) consider(5.0 * prof.support_speed(), StopReason::support_violation);
  return {level, why};
}

Trajectory decelerate(const Profile& prof, double V0, double t_end, double dt, const AFunction& A,
                      const StopRule& rule) {
  return decelerate(prof, Vec3::Zero(), Vec3(V0, 0, 0), t_end, dt, A, rule);
}

Trajectory decelerate(const Profile& prof, const Vec3& X0, const Vec3& V0, double t_end, double dt, const AFunction& A,
                      const StopRule& rule) {
  if (!(dt > 0.0) || !(t_end >= 0.0)) throw std::invalid_argument("decelerate needs dt > 0 and t_end >= 0");
  const double alpha = prof.alpha();
  const double s0 = V0.norm();
  if (!(s0 > 0.0)) throw std::invalid_argument("decelerate needs a nonzero initial velocity");

  const auto [level, why] = stop_level(prof, s0, rule);
  if (level > 0.0 && s0 <= level)
    throw std::invalid_argument("initial speed is already below the stopping level");

  auto force = [&](const Vec3& V) -> Vec3 {
    double s = V.norm();
    return -A(s) * V / (s * s * s);
  };
  struct State {
    Vec3 X, V;
  };
  auto step = [&](const State& y, double h) {
    auto rhs = [&](const State& z) { return State{z.V, alpha * force(z.V)}; };
    State k1 = rhs(y);
    State k2 = rhs({y.X + 0.5 * h * k1.X, y.V + 0.5 * h * k1.V});
    State k3 = rhs({y.X + 0.5 * h * k2.X, y.V + 0.5 * h * k2.V});
    State k4 = rhs({y.X + h * k3.X, y.V + h * k3.V});
    return State{y.X + h / 6.0 * (k1.X + 2.0 * k2.X + 2.0 * k3.X + k4.X),
                 y.V + h / 6.0 * (k1.V + 2.0 * k2.V + 2.0 * k3.V + k4.V)};
  };

  Trajectory tr;
  tr.alpha = alpha;
  State y{X0, V0};
  double t = 0.0;
  auto record = [&] {
    tr.t.push_back(t);
    tr.X.push_back(y.X);
    tr.V.push_back(y.V);
    tr.F.push_back(force(y.V));
  };
  record();
  const std::size_t n_steps = static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
  for (std::size_t n = 0; n < n_steps; ++n) {
    double h = std::min(dt, t_end - t);
    State next = step(y, h);
    if (level > 0.0 && next.V.norm() <= level) {
      // Shorten the step so that |V| lands on the level.
      double lo = 0.0, hi = h;
      for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, t); ++it) {
        double mid = 0.5 * (lo + hi);
        (step(y, mid).V.norm() > level ? lo : hi) = mid;
      }
      y = step(y, hi);
      t += hi;
      record();
      tr.stop_reason = why;
      return tr;
    }
    y = next;
    t = (n + 1 == n_steps) ? t_end : t + h;
    record();
  }
  tr.stop_reason = StopReason::t_end;
  return tr;
}

EnvelopeReport envelope_check(const Trajectory& tr, double A_min, double A_max) {
  EnvelopeReport rep;
  if (tr.t.empty()) throw std::invalid_argument("envelope_check needs a nonempty trajectory");
  const double V0 = tr.V.front().norm(), a = tr.alpha;
  rep.t_start = 8.0 * std::pow(V0, -0.6);
  const double V03 = V0 * V0 * V0;
  auto fail = [&](double t, std::string w) {
    if (rep.pass) {
      rep.pass = false;
      rep.first_violation_t = t;
      rep.what = std::move(w);
    }
  };
  for (std::size_t i = 0; i < tr.t.size(); ++i) {
    double t = tr.t[i];
    if (t < rep.t_start) continue;
    ++rep.checked;
    double s = tr.V[i].norm();
    double p = a * tr.F[i].dot(tr.V[i]);
    double lo = -a * A_max / s, hi = -a * A_min / s;
    double slack = 1e-9 * std::abs(lo);
    if (p < lo - slack || p > hi + slack) fail(t, "force bound violated");
    double up = V03 + 1.0 - 3.0 * a * A_min * t;
    double dn = V03 - 1.0 - 3.0 * a * A_max * t;
    if (s > std::cbrt(up) * (1 + 1e-12) || (dn > 0.0 && s < std::cbrt(dn) * (1 - 1e-12))) fail(t, "speed envelope violated");
    if (!rep.pass) break;
  }
  return rep;
}

}  // namespace vstop
