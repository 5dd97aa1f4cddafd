#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "kinetic/collision.hpp"
#include "kinetic/cycles.hpp"
#include "kinetic/geometry.hpp"
#include "kinetic/trajectory.hpp"

namespace kinetic {

using NuFn = std::function<double(const Vec3&)>;
// h0(x, v) or f0(x, v) depending on context.
using PhaseFn = std::function<double(const Vec3&, const Vec3&)>;
// Weighted inflow datum (w g)(t, x, v) on incoming boundary points.
using BoundaryFn = std::function<double(double, const Vec3&, const Vec3&)>;

struct BCSpec {
  enum class Kind { Inflow, BounceBack, Specular, Diffuse };
  Kind kind{Kind::BounceBack};
  BoundaryFn weighted_datum;  // inflow only; null means g = 0
  WeightParams weight;        // diffuse only: the wtilde chain
  int k_trunc{20};            // diffuse truncation depth, >= 2
  int mc_paths{10000};        // diffuse Monte Carlo paths
  double remainder_cap{0.5};  // max tolerated diffuse stuck fraction

  void validate() const {
    if (kind == Kind::Diffuse && k_trunc < 2)
      throw Error(ErrorCode::ConfigInvalid, "diffuse k_trunc >= 2 required");
  }
};

struct GValue {
  double value{0.0};
  double mc_stderr{0.0};        // 0 for the deterministic boundary conditions
  double remainder_bound{0.0};  // flagged bound on the truncated diffuse tail
  double stuck_fraction{0.0};
};

// Damped transport semigroup G(t) h0 evaluated at one phase point by tracing
// the backward cycle. Diffuse uses a Monte Carlo average of the truncated
// representation; h0_sup bounds |h| for the reported remainder.
GValue transport_G(const LevelSetDomain& domain, const BCSpec& bc, const NuFn& nu,
                   const PhaseFn& h0, double t, const PhasePoint& p,
                   DiffuseSampler* sampler = nullptr, double h0_sup = 1.0,
                   double graze_tol = 1e-8);

// Collocational field: values on {cells} x {velocity grid}.
struct FieldSample {
  enum class WeightMode { Weighted_h, Unweighted_f };
  std::vector<Vec3> cells;
  double cell_weight{1.0};  // spatial quadrature weight per cell
  VelocityGrid grid;
  WeightMode mode{WeightMode::Weighted_h};
  std::vector<double> values;  // [cell * grid.size() + g]

  double& at(std::size_t cell, std::size_t g) { return values[cell * grid.size() + g]; }
  double at(std::size_t cell, std::size_t g) const { return values[cell * grid.size() + g]; }
  double sup_norm() const;

  FieldSample to_unweighted(const WeightParams& p) const;
};

// Tensor cell centers of pitch h strictly inside Omega, weight h^3.
std::vector<Vec3> make_cells(const LevelSetDomain& domain, double h);

struct DuhamelOptions {
  int picard_iters{3};
  int time_nodes_per_unit{16};  // storage levels per unit time
  double cell_h{0.7};
  double graze_tol{1e-8};
  bool richardson_check{false};
};

struct DuhamelResult {
  FieldSample field;                      // U^(N)(t) h0 on cells x grid
  std::vector<double> iterate_sup_diffs;  // sup |U^(n+1) - U^(n)| at final time
  std::vector<double> level_times;
  std::vector<double> level_sup_norms;    // sup norm of the final iterate per level
  double nu0{0.0};
  double richardson_diff{-1.0};
};

// Picard construction U = G + int G K_w U for inflow / bounce-back / specular.
DuhamelResult duhamel_U(const LevelSetDomain& domain, const BCSpec& bc,
                        const KernelConfig& cfg, const WeightParams& params,
                        const PhaseFn& h0, double t, const DuhamelOptions& opt,
                        const VelocityGrid& grid);

struct HydroCoeffs {
  double a{0.0};
  Vec3 b{Vec3::Zero()};
  double c{0.0};
};

struct HydroProjection {
  HydroCoeffs coeffs;
  std::vector<double> projected;  // P f on the grid
  std::vector<double> residual;   // (I - P) f
};

// L2(dv) projection onto span{sqrt(mu), v sqrt(mu), |v|^2 sqrt(mu)}.
HydroProjection hydro_projection(const VelocityGrid& grid, const std::vector<double>& f);

struct ConservationReport {
  double mass_drift{0.0};
  double energy_drift{0.0};
  double angular_drift{0.0};
};

// Drifts of the discrete invariant moments along a trajectory of unweighted
// fields; angular momentum only when an axis is given.
ConservationReport conservation_check(const std::vector<FieldSample>& trajectory,
                                      const std::optional<SymmetryAxis>& axis = std::nullopt);

struct DecayReport {
  std::vector<double> times;
  std::vector<double> norms;
  double lambda_hat{0.0};
  double fit_residual{0.0};  // RMS of log-space residuals
};

// lambda_hat = -slope of the least-squares line through log norms; samples
// before window_min are excluded to skip the initial transient.
DecayReport decay_fit(const std::vector<double>& times, const std::vector<double>& norms,
                      double window_min = 0.25);

struct CoercivityReport {
  double numerator{0.0};
  double denominator{0.0};
  double ratio{0.0};
  bool zero_denominator{false};
};

// Diagnostic Mhat for the coercivity inequality: time-integrated ||P f||_nu^2
// against the BC-dependent dissipation functional. f is the unweighted field.
CoercivityReport coercivity_ratio(const LevelSetDomain& domain, BCSpec::Kind kind,
                                  const std::vector<double>& times,
                                  const std::function<double(double, const Vec3&, const Vec3&)>& f,
                                  const VelocityGrid& grid, const NuFn& nu, double cell_h,
                                  int surface_polar = 16, int surface_azimuth = 32);

struct IterationResult {
  FieldSample field;
  std::vector<double> sup_diffs;  // successive iterate differences at final time
};

// Picard scheme for the weighted nonlinear equation: each step solves the
// linear problem with frozen source w Gamma(h^m / w, h^m / w).
IterationResult nonlinear_iterate(const LevelSetDomain& domain, const BCSpec& bc,
                                  const KernelConfig& cfg, const WeightParams& params,
                                  const PhaseFn& h0, double t, int m_steps,
                                  const DuhamelOptions& opt, const VelocityGrid& grid,
                                  double h0_sup_threshold = 0.1);

struct PositivityResult {
  double min_value{0.0};
  FieldSample field;  // F^m at final time (unweighted F values)
};

// Gain-only iteration with the integrating factor of the loss term; preserves
// nonnegativity of F. Inflow wall datum is the Maxwellian.
PositivityResult positivity_iterate(const LevelSetDomain& domain, const BCSpec& bc,
                                    const KernelConfig& cfg, const PhaseFn& F0, double t,
                                    int m_steps, const DuhamelOptions& opt,
                                    const VelocityGrid& grid);

}  // namespace kinetic
