// Coarse delta-f marker simulation of the coupled plasma / point-charge
// system in a periodic box that moves with the charge.
#pragma once

#include "vstop/charge_dynamics.hpp"
#include "vstop/kinetics.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace vstop {

struct BoxSpec {
  double length = 16.0;
  int n = 32;
  // Charge position inside the box along e1, as a fraction of the length.
  double charge_frac = 0.75;
};

struct SimOptions {
  BoxSpec box;
  std::size_t markers = 2000000;
  double dt = 0.03;
  std::uint64_t seed = 7;
  int snapshot_every = 0;  // 0: no snapshots
  double floor_frac = 1e-3;  // importance floor relative to max mu
};
SimOptions sim_options_from(const Config& c);

struct SimState {
  std::vector<Vec3> x, v;
  std::vector<double> w;      // f / (marker phase-space density)
  std::vector<double> inv_g;  // 1 / marker phase-space density
  Vec3 X = Vec3::Zero(), V = Vec3::Zero();
  Vec3 lo = Vec3::Zero();  // box corner
  double t = 0.0;
  int step = 0;
  int e0 = 1;
  BoxSpec box;
  std::uint64_t seed = 0;
  std::vector<double> rho;            // n^3, node (i,j,k) at lo + h (i,j,k)
  std::array<std::vector<double>, 3> E;  // -grad phi * rho on the same nodes

  double h() const { return box.length / box.n; }
  // Integral of f over the box: sum of weights.
  double total_f() const;
};

struct Snapshot {
  int step = 0;
  double t = 0.0;
  Vec3 lo = Vec3::Zero();
  double h = 0.0;
  int n = 0;
  std::vector<double> rho;
  Vec3 X = Vec3::Zero();
  // Rows x1, x2, rho on the x3 plane closest to the charge.
  std::string csv(int precision = 17) const;
};

struct SimResult {
  Trajectory traj;
  std::vector<Snapshot> snapshots;
  SimState final;
  // Largest |d/dt int f| seen before the mean-zero correction.
  double raw_f_drift = 0.0;
  // Largest |int f| after the correction.
  double f_residual = 0.0;
};

// Markers on a scrambled Halton sequence, uniform in the box and distributed
// in v with density proportional to mu + floor; all weights zero.
SimState init_state(const Profile& prof, const Vec3& V0, const SimOptions& opt);

// Deposits rho (cloud in cell) and solves E = -grad phi * rho spectrally.
void solve_fields(SimState& s);

// E interpolated (trilinear) at x.
Vec3 field_at(const SimState& s, const Vec3& x);

// Force on the charge, -e0 E(X), so that V' = alpha F.
Vec3 force_on_charge(const SimState& s);

// Leapfrog marker push in E + e0 grad Phi(x - X), weights
// w' = -(E + e0 grad Phi).grad mu(v) / g; the charge follows V' = alpha F.
// Throws NumericalFailure when a marker violates |v_i| dt <= h.
SimResult run_deltaf(const Profile& prof, double V0, double t_end, const SimOptions& opt,
                     const std::function<void(const SimState&)>& observer = {});

// The final simulated field as a sampler following the charge path.
FieldSampler simulator_field(const SimState& s, const ChargePath& path);

}  // namespace vstop
