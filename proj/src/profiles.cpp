#include "vstop/profiles.hpp"

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace vstop {

struct Profile::Table {
  boost::math::interpolators::cardinal_cubic_b_spline<double> spline;
};

namespace {

double bump_shape(double s2) {  // exp(-1/(1-s^2)) for s^2 < 1
  return s2 < 1.0 ? std::exp(-1.0 / (1.0 - s2)) : 0.0;
}

double sinc(double x) { return std::abs(x) < 1e-4 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }

}  // namespace

Profile::Profile(const ProfileParams& p) : p_(p) {
  if (p_.e0 != 1 && p_.e0 != -1) throw std::invalid_argument("e0 must be +1 or -1");
  if (!(p_.alpha > 0)) throw std::invalid_argument("alpha must be positive");
  if (!(p_.Phi_width > 0)) throw std::invalid_argument("Phi width must be positive");
  if (!(p_.Phi_amplitude >= 0)) throw std::invalid_argument("Phi amplitude must be nonnegative");
  switch (p_.mu_kind) {
    case MuKind::gaussian:
      if (!(p_.sigma > 0)) throw std::invalid_argument("sigma must be positive");
      norm_ = std::pow(2.0 * kPi * p_.sigma * p_.sigma, -1.5);
      break;
    case MuKind::truncated_bump: {
      if (!(p_.radius > 0)) throw std::invalid_argument("radius must be positive");
      double I = adaptive([](double s) { return s * s * bump_shape(s * s); }, 0.0, 1.0, 1e-15);
      norm_ = 1.0 / (4.0 * kPi * std::pow(p_.radius, 3) * I);
      break;
    }
    case MuKind::none:
      norm_ = 0.0;
      break;
  }
  if (compact()) {
    // The transform table depends only on the radius; share it between profiles.
    static std::mutex m;
    static std::map<double, std::pair<double, std::shared_ptr<const Table>>> cache;
    std::lock_guard<std::mutex> lk(m);
    auto it = cache.find(p_.radius);
    if (it != cache.end()) {
      p_cut_ = it->second.first;
      table_ = it->second.second;
      return;
    }
    p_cut_ = scan_cutoff();
    const double h = 0.01;
    std::size_t n = static_cast<std::size_t>(std::ceil(p_cut_ / h)) + 1;
    std::vector<double> vals(n);
    parallel_for(n, [&](std::size_t i) { vals[i] = mu_hat_line(i * h); });
    table_ = std::make_shared<Table>(
        Table{boost::math::interpolators::cardinal_cubic_b_spline<double>(vals.begin(), vals.end(), 0.0, h, 0.0)});
    cache[p_.radius] = {p_cut_, table_};
  } else if (!empty()) {
    p_cut_ = scan_cutoff();
  }
}

double Profile::scan_cutoff() const {
  // First p after which |p mu_hat(p)| stays below 1e-12 over a long window.
  double step = 0.5 / velocity_cutoff();
  double p = 0.0, last_big = 0.0;
  while (p < 4000.0) {
    if (std::abs(p * mu_hat_line(p)) > 1e-12) last_big = p;
    if (p - last_big > 40.0 / velocity_cutoff() + 10.0) break;
    p += step;
  }
  return last_big + step;
}

double Profile::mu_hat_fast(double p) const {
  p = std::abs(p);
  if (p_.mu_kind == MuKind::gaussian) return mu_hat_line(p);
  if (!table_ || p >= p_cut_) return 0.0;
  return table_->spline(p);
}

double Profile::mu_radial(double r) const {
  switch (p_.mu_kind) {
    case MuKind::gaussian:
      return norm_ * std::exp(-r * r / (2.0 * p_.sigma * p_.sigma));
    case MuKind::truncated_bump:
      return norm_ * bump_shape(r * r / (p_.radius * p_.radius));
    case MuKind::none:
      break;
  }
  return 0.0;
}

double Profile::mu_radial_deriv(double r) const {
  switch (p_.mu_kind) {
    case MuKind::gaussian:
      return -r / (p_.sigma * p_.sigma) * mu_radial(r);
    case MuKind::truncated_bump: {
      double R2 = p_.radius * p_.radius;
      double q = r * r / R2;
      if (q >= 1.0) return 0.0;
      return -mu_radial(r) * 2.0 * r / (R2 * (1.0 - q) * (1.0 - q));
    }
    case MuKind::none:
      break;
  }
  return 0.0;
}

Vec3 Profile::mu_grad(const Vec3& v) const {
  double r = v.norm();
  if (r == 0.0) return Vec3::Zero();
  return mu_radial_deriv(r) / r * v;
}

double Profile::marginal_deriv(double u) const { return -2.0 * kPi * u * mu_radial(std::abs(u)); }

double Profile::mu_hat_line(double p) const {
  switch (p_.mu_kind) {
    case MuKind::gaussian:
      return std::exp(-0.5 * p_.sigma * p_.sigma * p * p);
    case MuKind::truncated_bump: {
      double R = p_.radius;
      auto f = [&](double r) { return r * r * mu_radial(r) * sinc(p * r); };
      // Split into panels so that oscillatory integrands stay well resolved.
      int panels = 1 + static_cast<int>(std::abs(p) * R / (4.0 * kPi));
      double s = 0.0;
      for (int i = 0; i < panels; ++i) s += adaptive_abs(f, R * i / panels, R * (i + 1) / panels, 1e-15 / panels, 12);
      return 4.0 * kPi * s;
    }
    case MuKind::none:
      break;
  }
  return 0.0;
}

double Profile::velocity_cutoff() const {
  switch (p_.mu_kind) {
    case MuKind::gaussian:
      return 10.0 * p_.sigma;
    case MuKind::truncated_bump:
      return p_.radius;
    case MuKind::none:
      break;
  }
  return 0.0;
}

double Profile::Phi_hat(double k) const {
  return p_.Phi_amplitude * std::exp(-0.5 * p_.Phi_width * p_.Phi_width * k * k);
}

double Profile::Phi(const Vec3& x) const {
  double w2 = p_.Phi_width * p_.Phi_width;
  return p_.Phi_amplitude * std::pow(2.0 * kPi * w2, -1.5) * std::exp(-x.squaredNorm() / (2.0 * w2));
}

Vec3 Profile::Phi_grad(const Vec3& x) const { return -Phi(x) / (p_.Phi_width * p_.Phi_width) * x; }

Mat3 Profile::Phi_hess(const Vec3& x) const {
  double w2 = p_.Phi_width * p_.Phi_width;
  return Phi(x) * (x * x.transpose() / (w2 * w2) - Mat3::Identity() / w2);
}

Profile Profile::with_e0(int e0) const {
  if (e0 != 1 && e0 != -1) throw std::invalid_argument("e0 must be +1 or -1");
  Profile q = *this;
  q.p_.e0 = e0;
  return q;
}

Profile Profile::with_Phi_amplitude(double a) const {
  if (!(a >= 0)) throw std::invalid_argument("Phi amplitude must be nonnegative");
  Profile q = *this;
  q.p_.Phi_amplitude = a;
  return q;
}

ProfileParams profile_params_from(const Config& c) {
  ProfileParams p;
  std::string kind = c.str("mu.kind");
  if (kind == "gaussian")
    p.mu_kind = MuKind::gaussian;
  else if (kind == "truncated_bump")
    p.mu_kind = MuKind::truncated_bump;
  else if (kind == "none")
    p.mu_kind = MuKind::none;
  else
    throw std::invalid_argument("unknown mu.kind: " + kind);
  p.radius = c.num("mu.radius");
  p.sigma = c.num("mu.sigma");
  p.e0 = static_cast<int>(c.integer("e0"));
  p.alpha = c.num("alpha");
  p.Phi_width = c.num("Phi.width");
  p.Phi_amplitude = c.num("Phi.amplitude");
  return p;
}

Profile build_profile(const Config& c) { return Profile(profile_params_from(c)); }

}  // namespace vstop
