#include "vstop/cli.hpp"

#include "CLI11.hpp"
#include "json.hpp"
#include "vstop/charge_dynamics.hpp"
#include "vstop/dispersion.hpp"
#include "vstop/greens.hpp"
#include "vstop/kinetics.hpp"
#include "vstop/response.hpp"
#include "vstop/simulator.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

namespace vstop {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::string out;
  int threads = 0;
  long seed = -1;
};

void add_common(CLI::App* app, Common& c, const std::string& out_help) {
  app->add_option("--config", c.config, "JSON config file (defaults when omitted)");
  app->add_option("--out", c.out, out_help);
  app->add_option("--threads", c.threads, "worker cap (VSTOP_THREADS when omitted)")->check(CLI::NonNegativeNumber);
  app->add_option("--seed", c.seed, "overrides numerics.seed")->check(CLI::PositiveNumber);
}

Config load(const Common& c) {
  Config cfg = c.config.empty() ? Config::defaults() : Config::from_file(c.config);
  if (c.seed > 0) cfg.set("numerics.seed", c.seed);
  if (c.threads > 0) set_worker_count(c.threads);
  return cfg;
}

fs::path out_path(const Common& c, const Config& cfg, const std::string& name) {
  if (!c.out.empty()) return c.out;
  return fs::path(cfg.str("io.output_dir")) / name;
}

std::ofstream open_csv(const fs::path& p, const Config& cfg) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw ConfigError("cannot write " + p.string());
  f << std::setprecision(static_cast<int>(cfg.integer("io.precision")));
  return f;
}

// ---------------------------------------------------------------- stages

PenroseReport run_penrose(const Profile& prof, const Config& cfg, const fs::path& out) {
  auto xi = default_xi_grid(static_cast<int>(cfg.integer("numerics.xi_points")));
  auto x = default_x_grid(prof, static_cast<int>(cfg.integer("numerics.x_points")));
  PenroseReport rep = penrose_margin(prof, xi, x, cfg.num("numerics.kappa_min"));
  auto f = open_csv(out, cfg);
  f << "x,re_gamma,im_gamma,margin_at_x\n";
  for (std::size_t i = 0; i < rep.x.size(); ++i)
    f << rep.x[i] << ',' << rep.gamma[i].real() << ',' << rep.gamma[i].imag() << ',' << rep.margin_at_x[i] << '\n';
  std::cout << "penrose: kappa = " << rep.kappa << ", winding = " << rep.winding
            << (rep.stable ? ", stable" : ", unstable") << '\n';
  for (auto& w : rep.warnings) std::cout << "warning: " << w << '\n';
  return rep;
}

void require_stable(const PenroseReport& rep, const Config& cfg) {
  if (!rep.stable || rep.kappa < cfg.num("numerics.kappa_min")) {
    std::ostringstream m;
    m << "instability: Penrose margin kappa = " << rep.kappa << " is below kappa_min = " << cfg.num("numerics.kappa_min");
    throw NumericalFailure(m.str());
  }
}

// Quick stability check without writing a report.
void check_stable(const Profile& prof, const Config& cfg) {
  auto xi = default_xi_grid(static_cast<int>(cfg.integer("numerics.xi_points")));
  auto x = default_x_grid(prof, static_cast<int>(cfg.integer("numerics.x_points")));
  require_stable(penrose_margin(prof, xi, x, cfg.num("numerics.kappa_min")), cfg);
}

void run_greens(const Profile& prof, const Config& cfg, double tmax, const fs::path& out) {
  SpectralGreen sg(prof, cfg.num("numerics.rgrid_spacing"), cfg.num("numerics.rgrid_extent"),
                   cfg.num("numerics.kappa_min"));
  const int nk = static_cast<int>(cfg.integer("numerics.xi_points"));
  const double kmin = cfg.num("numerics.xi_min"), kmax = cfg.num("numerics.xi_max");
  std::vector<double> k(nk), t(64), r(cfg.integer("numerics.r_points"));
  for (int i = 0; i < nk; ++i) k[i] = nk == 1 ? kmin : kmin * std::pow(kmax / kmin, double(i) / (nk - 1));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = tmax * i / (t.size() - 1);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = r.size() == 1 ? 0.0 : cfg.num("numerics.rmax") * i / (r.size() - 1);
  GreenTable tab = build_green_table(sg, k, t, r);
  auto f = open_csv(out, cfg);
  f << "t,k,ghat\n";
  for (std::size_t j = 0; j < t.size(); ++j)
    for (std::size_t i = 0; i < k.size(); ++i) f << t[j] << ',' << k[i] << ',' << tab.ghat[i][j] << '\n';
  fs::path second = out.parent_path() / (out.stem().string() + "_G" + out.extension().string());
  auto g = open_csv(second, cfg);
  g << "t,r,G,gradG\n";
  for (auto& s : tab.g_samples) g << s.t << ',' << s.r << ',' << s.G << ',' << s.gradG << '\n';
  std::cout << "greens: " << k.size() << " x " << t.size() << " table, " << tab.g_samples.size()
            << " pointwise samples\n";
}

std::vector<StoppingResult> run_stopping(const Profile& prof, const Config& cfg, const Vec3& Vstar,
                                         const std::string& route, const fs::path& out) {
  ForceGrid grid = force_grid_from(cfg);
  std::vector<StoppingResult> res;
  if (route == "steady" || route == "both") res.push_back(force_steadystate(prof, Vstar, grid));
  if (route == "time" || route == "both") res.push_back(force_timedomain(prof, Vstar, grid));
  auto f = open_csv(out, cfg);
  f << "Vmag,Fx,Fy,Fz,A_est,route\n";
  for (auto& r : res) {
    f << r.Vstar.norm() << ',' << r.force[0] << ',' << r.force[1] << ',' << r.force[2] << ',' << r.A_est << ','
      << route_name(r.route) << '\n';
    std::cout << "stopping (" << route_name(r.route) << "): |V*| = " << r.Vstar.norm() << ", F = (" << r.force[0]
              << ", " << r.force[1] << ", " << r.force[2] << "), A_est = " << r.A_est << '\n';
  }
  return res;
}

struct DecelOutcome {
  Trajectory traj;
  EnvelopeReport env;
  double A_min = 0.0, A_max = 0.0;
};

DecelOutcome run_decelerate(const Profile& prof, const Config& cfg, double V0, double t_end, const fs::path& out) {
  StopRule rule = stop_rule_from(cfg);
  double level = stop_level(prof, V0, rule).first;
  double lo = level > 0.0 ? level : 0.25 * V0;
  if (!(V0 > lo)) throw std::invalid_argument("--v0 must exceed the stopping level");
  ATable tab(prof, 0.95 * lo, 1.05 * V0, static_cast<int>(cfg.integer("numerics.a_table_nodes")), force_grid_from(cfg));
  DecelOutcome o;
  o.traj = decelerate(prof, V0, t_end, cfg.num("numerics.ode_dt"), std::cref(tab), rule);
  std::tie(o.A_min, o.A_max) = tab.range(o.traj.V.back().norm(), V0);
  o.env = envelope_check(o.traj, o.A_min, o.A_max);
  auto f = open_csv(out, cfg);
  f << "t,X1,V1,F1,stop_reason\n";
  for (std::size_t i = 0; i < o.traj.t.size(); ++i) {
    f << o.traj.t[i] << ',' << o.traj.X[i][0] << ',' << o.traj.V[i][0] << ',' << o.traj.F[i][0] << ',';
    if (i + 1 == o.traj.t.size()) f << stop_reason_name(o.traj.stop_reason);
    f << '\n';
  }
  std::cout << "decelerate: stopped at t = " << o.traj.t.back() << " with |V| = " << o.traj.V.back().norm() << " ("
            << stop_reason_name(o.traj.stop_reason) << "); envelope " << (o.env.pass ? "pass" : "FAIL: " + o.env.what)
            << " with A in [" << o.A_min << ", " << o.A_max << "]\n";
  return o;
}

struct SimOutcome {
  double drag = 0.0, linear = 0.0;
  bool monotone = true;
  double raw_f_drift = 0.0;
};

SimOutcome run_simulate(const Profile& prof, const Config& cfg, double V0, double t_end, const fs::path& out) {
  SimOptions opt = sim_options_from(cfg);
  SimResult r = run_deltaf(prof, V0, t_end, opt);
  auto f = open_csv(out, cfg);
  f << "t,X1,X2,X3,V1,V2,V3,F1,F2,F3\n";
  SimOutcome o;
  double sum = 0.0;
  int cnt = 0;
  for (std::size_t i = 0; i < r.traj.t.size(); ++i) {
    f << r.traj.t[i];
    for (int d = 0; d < 3; ++d) f << ',' << r.traj.X[i][d];
    for (int d = 0; d < 3; ++d) f << ',' << r.traj.V[i][d];
    for (int d = 0; d < 3; ++d) f << ',' << r.traj.F[i][d];
    f << '\n';
    if (i > 0 && r.traj.V[i][0] >= r.traj.V[i - 1][0]) o.monotone = false;
    if (r.traj.t[i] >= 0.5 * t_end && i > 0) {
      sum += r.traj.F[i][0];
      ++cnt;
    }
  }
  const int prec = static_cast<int>(cfg.integer("io.precision"));
  for (auto& s : r.snapshots) {
    fs::path p = out.parent_path() / ("rho_" + std::to_string(s.step) + ".csv");
    std::ofstream sf(p);
    sf << s.csv(prec);
  }
  o.drag = cnt ? sum / cnt : 0.0;
  o.raw_f_drift = r.raw_f_drift;
  double Vend = r.traj.V.back().norm();
  o.linear = force_steadystate(prof, Vec3(Vend, 0, 0), force_grid_from(cfg)).force[0];
  std::cout << "simulate: mean drag over the second half " << o.drag << ", linear prediction " << o.linear
            << ", V1 " << (o.monotone ? "monotone" : "not monotone") << '\n';
  return o;
}

struct Probe {
  double t;
  Vec3 x, v;
};

std::vector<Probe> read_probes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open probe file: " + path);
  std::vector<Probe> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (lineno == 1) continue;  // header
      throw ConfigError("probe file line " + std::to_string(lineno) + ": not numeric");
    }
    if (vals.size() != 7) throw ConfigError("probe file line " + std::to_string(lineno) + ": expected 7 columns");
    out.push_back({vals[0], Vec3(vals[1], vals[2], vals[3]), Vec3(vals[4], vals[5], vals[6])});
  }
  if (out.empty()) throw ConfigError("probe file has no probes");
  return out;
}

ChargePath decelerated_path(const Profile& prof, const Config& cfg, double V0, double T) {
  StopRule rule = StopRule::none();
  ATable tab(prof, 0.5 * V0, 1.05 * V0, static_cast<int>(cfg.integer("numerics.a_table_nodes")), force_grid_from(cfg));
  double dt = std::min(cfg.num("numerics.ode_dt"), std::max(T, 1e-3) / 8.0);
  return ChargePath::from_trajectory(decelerate(prof, V0, std::max(T, 1e-3), dt, std::cref(tab), rule));
}

std::array<int, 5> run_geometry(const ChargePath& path, const Config& cfg, const std::vector<Probe>& probes,
                                const fs::path& out) {
  RegionParams rp;
  rp.beta = cfg.num("numerics.beta");
  rp.delta = cfg.num("numerics.delta");
  std::vector<GeometrySample> gs(probes.size());
  parallel_for(probes.size(), [&](std::size_t i) { gs[i] = geometry(path, probes[i].t, probes[i].x, probes[i].v, rp); });
  auto f = open_csv(out, cfg);
  f << "t,x1,x2,x3,v1,v2,v3,tau,taucheck,dcheck,Tcoll,ximpact1,ximpact2,ximpact3,region\n";
  std::array<int, 5> counts{};
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto& p = probes[i];
    const auto& g = gs[i];
    f << p.t << ',' << p.x[0] << ',' << p.x[1] << ',' << p.x[2] << ',' << p.v[0] << ',' << p.v[1] << ',' << p.v[2]
      << ',' << g.tau_x << ',' << g.tau_check << ',' << g.d_check << ',';
    if (g.has_collision)
      f << g.T_coll << ',' << g.x_impact[0] << ',' << g.x_impact[1] << ',' << g.x_impact[2];
    else
      f << ",,,";
    f << ',' << region_name(g.region) << '\n';
    ++counts[static_cast<int>(g.region)];
  }
  std::cout << "geometry: " << probes.size() << " probes";
  for (int r = 0; r < 5; ++r) std::cout << ", " << region_name(static_cast<Region>(r)) << " " << counts[r];
  std::cout << '\n';
  return counts;
}

Vec3 parse_vec(const std::string& s) {
  std::stringstream ss(s);
  std::string cell;
  std::vector<double> v;
  while (std::getline(ss, cell, ',')) {
    try {
      v.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw ConfigError("--vstar expects three comma-separated numbers");
    }
  }
  if (v.size() != 3) throw ConfigError("--vstar expects three comma-separated numbers");
  return Vec3(v[0], v[1], v[2]);
}

template <class F>
int guarded(F&& f) {
  try {
    f();
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"vstop: stopping of a fast point charge in a screened Vlasov plasma", "vstop"};
  app.require_subcommand(1);

  Common c;
  double tmax = 50.0, v0 = 0.0, tend = 0.0;
  std::string vstar = "12,0,0", route = "both", probes;

  auto* pen = app.add_subcommand("penrose", "Penrose stability margin");
  add_common(pen, c, "report CSV (x, Re gamma, Im gamma, margin_at_x)");

  auto* gre = app.add_subcommand("greens", "linear-response Green's function tables");
  add_common(gre, c, "G_hat CSV (t, k, ghat); a second file *_G.csv holds t, r, G, gradG");
  gre->add_option("--tmax", tmax, "largest time")->check(CLI::PositiveNumber);

  auto* sto = app.add_subcommand("stopping", "stopping force on a charge at fixed velocity");
  add_common(sto, c, "force CSV (Vmag, Fx, Fy, Fz, A_est, route)");
  sto->add_option("--vstar", vstar, "charge velocity v1,v2,v3");
  sto->add_option("--route", route, "time, steady or both")->check(CLI::IsMember({"time", "steady", "both"}));

  auto* dec = app.add_subcommand("decelerate", "deceleration under the tabulated stopping force");
  add_common(dec, c, "trajectory CSV (t, X1, V1, F1, stop_reason)");
  dec->add_option("--v0", v0, "initial speed (default 20)")->check(CLI::PositiveNumber);
  dec->add_option("--tend", tend, "final time (default 1e4)")->check(CLI::PositiveNumber);

  auto* sim = app.add_subcommand("simulate", "nonlinear delta-f marker simulation");
  add_common(sim, c, "trajectory CSV; rho_<step>.csv snapshots go next to it");
  sim->add_option("--v0", v0, "initial speed (numerics.sim_v0)")->check(CLI::PositiveNumber);
  sim->add_option("--tend", tend, "final time (numerics.sim_tend)")->check(CLI::PositiveNumber);

  auto* geo = app.add_subcommand("geometry", "passage/collision times and regions on probe points");
  add_common(geo, c, "geometry CSV");
  geo->add_option("--probe", probes, "CSV with columns t,x1,x2,x3,v1,v2,v3")->required();
  geo->add_option("--v0", v0, "initial speed of the decelerating charge (numerics.sim_v0)")->check(CLI::PositiveNumber);

  auto* pip = app.add_subcommand("pipeline", "penrose, greens, stopping, decelerate, simulate, geometry");
  add_common(pip, c, "output directory (io.output_dir)");
  pip->add_option("--v0", v0, "initial speed of the deceleration stage (default 20)")->check(CLI::PositiveNumber);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitValidation;
  }

  return guarded([&] {
    Config cfg = load(c);
    Profile prof = build_profile(cfg);
    if (pen->parsed()) {
      require_stable(run_penrose(prof, cfg, out_path(c, cfg, "report.csv")), cfg);
    } else if (gre->parsed()) {
      run_greens(prof, cfg, tmax, out_path(c, cfg, "greens.csv"));
    } else if (sto->parsed()) {
      check_stable(prof, cfg);
      run_stopping(prof, cfg, parse_vec(vstar), route, out_path(c, cfg, "force.csv"));
    } else if (dec->parsed()) {
      check_stable(prof, cfg);
      run_decelerate(prof, cfg, v0 > 0 ? v0 : 20.0, tend > 0 ? tend : 1e4, out_path(c, cfg, "traj.csv"));
    } else if (sim->parsed()) {
      run_simulate(prof, cfg, v0 > 0 ? v0 : cfg.num("numerics.sim_v0"), tend > 0 ? tend : cfg.num("numerics.sim_tend"),
                   out_path(c, cfg, "sim.csv"));
    } else if (geo->parsed()) {
      auto pr = read_probes(probes);
      double T = 0.0;
      for (auto& p : pr) T = std::max(T, p.t);
      check_stable(prof, cfg);
      auto path = decelerated_path(prof, cfg, v0 > 0 ? v0 : cfg.num("numerics.sim_v0"), T);
      run_geometry(path, cfg, pr, out_path(c, cfg, "geo.csv"));
    } else if (pip->parsed()) {
      fs::path dir = c.out.empty() ? fs::path(cfg.str("io.output_dir")) : fs::path(c.out);
      fs::create_directories(dir);
      nlohmann::json summary;
      auto rep = run_penrose(prof, cfg, dir / "report.csv");
      summary["penrose"] = {{"kappa", rep.kappa}, {"winding", rep.winding}, {"stable", rep.stable}};
      require_stable(rep, cfg);
      run_greens(prof, cfg, cfg.num("numerics.tmax"), dir / "greens.csv");
      const double vs = cfg.num("numerics.sim_v0");
      auto st = run_stopping(prof, cfg, Vec3(vs, 0, 0), "both", dir / "force.csv");
      summary["stopping"] = {{"Vstar", vs},
                             {"A_est", st.front().A_est},
                             {"A_est_timedomain", st.back().A_est},
                             {"force", st.front().force[0]}};
      summary["A_est"] = st.front().A_est;
      const double vd = v0 > 0 ? v0 : 20.0;
      auto dc = run_decelerate(prof, cfg, vd, 1e4, dir / "traj.csv");
      summary["decelerate"] = {{"V0", vd},
                               {"stop_reason", stop_reason_name(dc.traj.stop_reason)},
                               {"t_stop", dc.traj.t.back()},
                               {"A_min", dc.A_min},
                               {"A_max", dc.A_max},
                               {"envelope_pass", dc.env.pass}};
      summary["envelope_pass"] = dc.env.pass;
      auto so = run_simulate(prof, cfg, vs, cfg.num("numerics.sim_tend"), dir / "sim.csv");
      summary["simulate"] = {{"V0", vs},
                             {"mean_drag", so.drag},
                             {"linear_force", so.linear},
                             {"ratio", so.linear != 0.0 ? so.drag / so.linear : 0.0},
                             {"V1_monotone", so.monotone}};
      // Probes around the decelerated charge, drawn from the configured seed.
      auto path = ChargePath::from_trajectory(dc.traj);
      std::mt19937_64 rng(static_cast<std::uint64_t>(cfg.integer("numerics.seed")));
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      std::vector<Probe> pr(1000);
      const double T = path.T(), vmax = 0.5 * path.V_min();
      for (auto& p : pr) {
        p.t = 0.5 * T * (1.0 + u(rng));
        p.x = path.X(p.t) + Vec3(40.0 * u(rng), 8.0 * u(rng), 8.0 * u(rng));
        p.v = Vec3(u(rng), u(rng), u(rng)) * (vmax / std::sqrt(3.0));
      }
      auto counts = run_geometry(path, cfg, pr, dir / "geo.csv");
      nlohmann::json regions;
      for (int r = 0; r < 5; ++r) regions[region_name(static_cast<Region>(r))] = counts[r];
      summary["geometry"] = {{"probes", pr.size()}, {"regions", regions}};
      std::ofstream js(dir / "summary.json");
      js << summary.dump(2) << '\n';
      std::cout << "pipeline: wrote " << (dir / "summary.json").string() << '\n';
    }
  });
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args);
}

}  // namespace vstop
