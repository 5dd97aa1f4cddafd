#include "kinetic/scenario.hpp"

#include <cmath>

#include "kinetic/cycles.hpp"
#include "kinetic/semigroup.hpp"
#include "kinetic/trajectory.hpp"

namespace kinetic {

namespace {

// Bounded reference initial field used by the decay/solve/coercivity runs.
double default_h0(const Vec3& x, const Vec3& v) {
  return (1.0 + 0.5 * std::sin(2.0 * x[0] + x[1])) * std::exp(-0.25 * v.squaredNorm());
}

PhasePoint start_point(const ScenarioConfig& cfg, const Vec3& def_x, const Vec3& def_v) {
  PhasePoint p;
  p.x = cfg.run.x0.value_or(def_x);
  p.v = cfg.run.v0.value_or(def_v);
  return p;
}

void set_vec(JsonRow& row, const std::string& prefix, const Vec3& v) {
  row.set(prefix + "_x", v[0]).set(prefix + "_y", v[1]).set(prefix + "_z", v[2]);
}

ReportBundle make_bundle(const ScenarioConfig& cfg, const std::string& name) {
  ReportBundle b;
  b.name = name;
  b.seed = cfg.seed;
  b.config_hash = hash_hex(cfg.canonical);
  b.code_version = version_string();
  return b;
}

void run_trace(const ScenarioConfig& cfg, ReportBundle& b) {
  const PhasePoint p = start_point(cfg, Vec3(0.3, 0.0, 0.0), Vec3(1.0, 0.0, 0.0));
  const ExitRecord rec = backward_exit(cfg.domain, p);
  JsonRow row;
  set_vec(row, "x", p.x);
  set_vec(row, "v", p.v);
  row.set("t_b", rec.t_b);
  set_vec(row, "x_b", rec.x_b);
  set_vec(row, "normal", rec.normal);
  row.set("dot", rec.dot).set("grazing", rec.grazing);
  row.set("alpha", alpha(cfg.domain, p));
  if (!rec.grazing) {
    const ExitGradients gr = exit_gradients(cfg.domain, p);
    set_vec(row, "grad_x_tb", gr.grad_x_tb);
    set_vec(row, "grad_v_tb", gr.grad_v_tb);
  }
  b.rows.push_back(row);
  b.summary_lines.push_back("backward exit t_b = " + format_double(rec.t_b));
}

void run_cycles(const ScenarioConfig& cfg, ReportBundle& b) {
  const PhasePoint p = start_point(cfg, Vec3(0.3, 0.0, 0.0), Vec3(1.0, 0.2, 0.0));
  Cycle cyc;
  DiffuseSampler sampler(cfg.seed, 0);
  switch (cfg.bc.kind) {
    case BCSpec::Kind::BounceBack:
      cyc = bounce_back_cycle(cfg.domain, cfg.run.t_max, p, cfg.run.t_min);
      break;
    case BCSpec::Kind::Specular:
      cyc = specular_cycle(cfg.domain, cfg.run.t_max, p, cfg.run.t_min);
      break;
    case BCSpec::Kind::Diffuse:
      cyc = diffuse_cycle_sample(cfg.domain, cfg.run.t_max, p, cfg.run.t_min, sampler);
      break;
    case BCSpec::Kind::Inflow:
      throw Error(ErrorCode::ConfigInvalid, "cycles: needs a reflecting boundary condition");
  }
  for (std::size_t k = 0; k < cyc.nodes.size(); ++k) {
    JsonRow row;
    row.set("k", static_cast<long long>(k)).set("t", cyc.nodes[k].t);
    set_vec(row, "x", cyc.nodes[k].x);
    set_vec(row, "v", cyc.nodes[k].v);
    b.rows.push_back(row);
  }
  const char* term = cyc.termination == CycleTermination::ReachedTime ? "reached_time"
                     : cyc.termination == CycleTermination::GrazingAbort ? "grazing_abort"
                                                                         : "max_bounces";
  b.summary_lines.push_back(std::string("termination: ") + term + ", bounces = " +
                            std::to_string(cyc.nodes.size() - 1));
}

void run_jacobian(const ScenarioConfig& cfg, ReportBundle& b) {
  RandomStream rng(cfg.seed, 0x6a61u);
  const Vec3 x1 = cfg.run.x0 ? *cfg.run.x0 : sample_boundary(cfg.domain, rng);
  const JacobianReport rep =
      specular_jacobian_fd(cfg.domain, x1, cfg.run.eps0, cfg.run.k, cfg.run.normal_incidence);
  JsonRow row;
  row.set("k", rep.k)
      .set("eps0", rep.eps0)
      .set("det_fd", rep.det_fd)
      .set("zeta_pred", rep.zeta_pred)
      .set("det_pred", cfg.run.normal_incidence ? -1.0 : double(rep.zeta_pred + 1))
      .set("rel_gap", rep.rel_gap)
      .set("cumulative_time", rep.cumulative_time)
      .set("time_flagged", rep.time_flagged)
      .set("normal_incidence", cfg.run.normal_incidence);
  b.rows.push_back(row);
  b.summary_lines.push_back("det_fd = " + format_double(rep.det_fd) + " vs prediction " +
                            format_double(cfg.run.normal_incidence
                                              ? -1.0
                                              : double(rep.zeta_pred + 1)));
  if (rep.rel_gap > 0.2) {
    b.check_failed = true;
    b.failed_invariant = "jacobian rel_gap > 0.2";
  }
}

void run_kernel_check(const ScenarioConfig& cfg, ReportBundle& b) {
  std::vector<Vec3> samples;
  for (int i = 0; i <= 16; ++i) samples.emplace_back(0.5 * i, 0.0, 0.0);
  const KwBoundReport kw = kw_bound_check(cfg.weight, samples, 0.0);
  JsonRow row;
  row.set("kind", "kw_bound")
      .set("theta", cfg.weight.theta)
      .set("epsilon", 0.0)
      .set("max_product", kw.max_product)
      .set("refinement_rel_diff", kw.refinement_rel_diff)
      .set("form_negative_definite", kw.form_negative_definite)
      .set("ok", kw.ok);
  b.rows.push_back(row);

  const FluxMeasureReport flux = flux_measure(cfg.weight, Vec3(0, 0, 1));
  JsonRow frow;
  frow.set("kind", "flux_measure")
      .set("c_mu", flux.c_mu)
      .set("total_mass", flux.total_mass)
      .set("wtilde_sq_integral", flux.wtilde_sq_integral);
  b.rows.push_back(frow);

  if (!kw.ok) {
    b.check_failed = true;
    b.failed_invariant = "weighted kernel bound not refinement-stable";
  }
  if (std::abs(flux.total_mass - 1.0) > 1e-8) {
    b.check_failed = true;
    b.failed_invariant = "flux measure mass != 1";
  }
  b.summary_lines.push_back("max (1+|v|) I(v) = " + format_double(kw.max_product));
  b.summary_lines.push_back("int dsigma = " + format_double(flux.total_mass));
}

void run_stuck_mass(const ScenarioConfig& cfg, ReportBundle& b) {
  const PhasePoint p = start_point(cfg, Vec3(0.999, 0.0, 0.0), Vec3(0.0, 4.0, 0.0));
  DiffuseSampler sampler(cfg.seed, 0);
  const std::vector<double> frac =
      stuck_fraction_sweep(cfg.domain, cfg.run.t_max, p, cfg.run.k_max, cfg.run.samples, sampler);
  int k0 = -1;
  for (int k = 2; k <= cfg.run.k_max; ++k) {
    const double f = frac[k - 1];
    JsonRow row;
    row.set("k", k).set("fraction", f).set(
        "stderr", std::sqrt(std::max(f * (1.0 - f), 1e-300) / cfg.run.samples));
    b.rows.push_back(row);
    if (k0 < 0 && f < 0.05) k0 = k;
  }
  b.summary_lines.push_back("k0 (first fraction < 0.05) = " + std::to_string(k0));
  if (k0 < 0) {
    b.check_failed = true;
    b.failed_invariant = "stuck fraction never fell below 0.05";
  }
}

void run_decay(const ScenarioConfig& cfg, ReportBundle& b) {
  const VelocityGrid grid = VelocityGrid::uniform(cfg.run.grid_v_max, cfg.run.grid_n);
  const NuTable nu_table(cfg.kernel, grid.v_max * 2.0);
  const NuFn nu = [&](const Vec3& v) { return nu_table(v); };
  const double nu0 = nu_table.min_on(grid);

  // Phase samples: interior points with grid velocities.
  RandomStream rng(cfg.seed, 0x6465u);
  std::vector<PhasePoint> pts;
  const int n_pts = cfg.bc.kind == BCSpec::Kind::Diffuse
                        ? std::min(cfg.run.phase_samples, 16)
                        : cfg.run.phase_samples;
  for (int i = 0; i < n_pts; ++i) {
    PhasePoint p;
    p.x = sample_interior(cfg.domain, rng);
    p.v = grid.nodes[static_cast<std::size_t>(rng.uniform() * grid.size())];
    pts.push_back(p);
  }

  DiffuseSampler sampler(cfg.seed, 1);
  std::vector<double> times, norms;
  const double t_lo = std::max(cfg.run.t_min, 1e-6);
  for (int i = 0; i < cfg.run.time_samples; ++i) {
    const double t =
        t_lo + (cfg.run.t_max - t_lo) * i / std::max(1, cfg.run.time_samples - 1);
    double sup = 0.0, rem = 0.0;
    for (const auto& p : pts) {
      const GValue gv = transport_G(cfg.domain, cfg.bc, nu, default_h0, t, p, &sampler, 1.5);
      sup = std::max(sup, std::abs(gv.value) + gv.remainder_bound);
      rem = std::max(rem, gv.remainder_bound);
    }
    times.push_back(t);
    norms.push_back(sup);
    JsonRow row;
    row.set("t", t).set("norm", sup).set("remainder_bound", rem);
    b.rows.push_back(row);
  }
  const DecayReport fit = decay_fit(times, norms);
  JsonRow srow;
  srow.set("kind", "fit")
      .set("lambda_hat", fit.lambda_hat)
      .set("fit_residual", fit.fit_residual)
      .set("nu0", nu0)
      .set("grid_n", cfg.run.grid_n)
      .set("grid_v_max", cfg.run.grid_v_max)
      .set("u_nodes", cfg.kernel.u_nodes)
      .set("omega_polar", cfg.kernel.omega_polar)
      .set("omega_azimuth", cfg.kernel.omega_azimuth);
  b.rows.push_back(srow);
  b.summary_lines.push_back("lambda_hat = " + format_double(fit.lambda_hat) +
                            ", nu0 = " + format_double(nu0));
  const double need = cfg.bc.kind == BCSpec::Kind::Diffuse ? 0.45 * nu0 : 0.98 * nu0;
  if (fit.lambda_hat < need) {
    b.check_failed = true;
    b.failed_invariant = "fitted decay rate below the damping floor";
  }
}

void run_solve(const ScenarioConfig& cfg, ReportBundle& b) {
  const VelocityGrid grid = VelocityGrid::uniform(cfg.run.grid_v_max, cfg.run.grid_n);
  DuhamelOptions opt;
  opt.picard_iters = cfg.run.picard_iters;
  opt.time_nodes_per_unit = cfg.run.time_nodes_per_unit;
  opt.cell_h = cfg.run.cell_h;
  const DuhamelResult res =
      duhamel_U(cfg.domain, cfg.bc, cfg.kernel, cfg.weight, default_h0, cfg.run.t_max, opt, grid);
  for (std::size_t i = 0; i < res.level_times.size(); ++i) {
    JsonRow row;
    row.set("t", res.level_times[i]).set("sup_norm", res.level_sup_norms[i]);
    b.rows.push_back(row);
  }
  const DecayReport fit = decay_fit(res.level_times, res.level_sup_norms);
  JsonRow srow;
  srow.set("kind", "fit")
      .set("lambda_hat", fit.lambda_hat)
      .set("fit_residual", fit.fit_residual)
      .set("nu0", res.nu0);
  for (std::size_t i = 0; i < res.iterate_sup_diffs.size(); ++i)
    srow.set("picard_diff_" + std::to_string(i + 1), res.iterate_sup_diffs[i]);
  b.rows.push_back(srow);
  b.summary_lines.push_back("lambda_hat = " + format_double(fit.lambda_hat) +
                            ", residual = " + format_double(fit.fit_residual));
  if (!(fit.lambda_hat > 0.0) || fit.fit_residual >= 0.1) {
    b.check_failed = true;
    b.failed_invariant = "duhamel decay fit failed (lambda <= 0 or residual >= 10%)";
  }
}

void run_coercivity(const ScenarioConfig& cfg, ReportBundle& b) {
  const VelocityGrid grid = VelocityGrid::uniform(cfg.run.grid_v_max, cfg.run.grid_n);
  const NuTable nu_table(cfg.kernel, grid.v_max * 2.0);
  const NuFn nu = [&](const Vec3& v) { return nu_table(v); };
  const auto f_eval = [&](double s, const Vec3& x, const Vec3& v) {
    const GValue gv = transport_G(cfg.domain, cfg.bc, nu, default_h0, s, PhasePoint{x, v});
    return gv.value / weight_w(cfg.weight, v);
  };
  const auto make_times = [](int n) {
    std::vector<double> ts;
    for (int i = 0; i <= n; ++i) ts.push_back(static_cast<double>(i) / n);
    return ts;
  };
  const CoercivityReport coarse = coercivity_ratio(
      cfg.domain, cfg.bc.kind, make_times(4), f_eval, grid, nu, cfg.run.cell_h);
  const CoercivityReport fine = coercivity_ratio(
      cfg.domain, cfg.bc.kind, make_times(8), f_eval, grid, nu, cfg.run.cell_h);
  JsonRow row;
  row.set("numerator", fine.numerator)
      .set("denominator", fine.denominator)
      .set("ratio", fine.ratio)
      .set("ratio_coarse_time_grid", coarse.ratio)
      .set("zero_denominator", fine.zero_denominator);
  b.rows.push_back(row);
  b.summary_lines.push_back("Mhat = " + format_double(fine.ratio));
  if (!fine.zero_denominator && coarse.ratio > 0.0) {
    const double rel = std::abs(fine.ratio - coarse.ratio) / fine.ratio;
    if (rel > 0.2) {
      b.check_failed = true;
      b.failed_invariant = "coercivity ratio unstable under time-grid refinement";
    }
  }
}

}  // namespace

ReportBundle run_scenario(const ScenarioConfig& cfg, const std::string& subcommand) {
  cfg.validate_for(subcommand);
  ReportBundle b = make_bundle(cfg, subcommand);
  if (subcommand == "trace") run_trace(cfg, b);
  else if (subcommand == "cycles") run_cycles(cfg, b);
  else if (subcommand == "jacobian") run_jacobian(cfg, b);
  else if (subcommand == "kernel-check") run_kernel_check(cfg, b);
  else if (subcommand == "stuck-mass") run_stuck_mass(cfg, b);
  else if (subcommand == "decay") run_decay(cfg, b);
  else if (subcommand == "solve") run_solve(cfg, b);
  else if (subcommand == "coercivity") run_coercivity(cfg, b);
  else throw Error(ErrorCode::ConfigInvalid, "unknown subcommand: " + subcommand);
  return b;
}

}  // namespace kinetic
