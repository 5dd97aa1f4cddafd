#pragma once

#include "kinetic/geometry.hpp"
#include "kinetic/types.hpp"

namespace kinetic {

// Backward exit data for a phase point: the particle at x with velocity v,
// traced backward as x - tau*v, leaves the closure of Omega at tau = t_b.
struct ExitRecord {
  double t_b{0.0};
  Vec3 x_b{Vec3::Zero()};
  Vec3 normal{Vec3::Zero()};  // outward normal at x_b
  double dot{0.0};            // v . n(x_b), <= 0 up to grazing tolerance
  bool grazing{false};
};

struct ExitGradients {
  Vec3 grad_x_tb;
  Vec3 grad_v_tb;
  Mat3 grad_x_xb;  // (i,j) = d x_b^i / d x^j
  Mat3 grad_v_xb;  // (i,j) = d x_b^i / d v^j
};

struct GronwallConstant {
  double c{1.0};
};

struct VelocityLemmaReport {
  bool ok{false};
  double worst_margin{0.0};  // log-scale margin, >= -1e-10 when ok
};

struct BounceGapReport {
  double lhs{0.0};
  double rhs{0.0};
  bool ok{false};
};

ExitRecord backward_exit(const LevelSetDomain& domain, const PhasePoint& p,
                         double graze_tol = 1e-8);

// Closed-form derivatives of (t_b, x_b); requires a non-grazing exit.
ExitGradients exit_gradients(const LevelSetDomain& domain, const PhasePoint& p,
                             double graze_tol = 1e-8);

// xi^2 + (v . grad xi)^2 - 2 (v . hess xi v) xi
double alpha(const LevelSetDomain& domain, const PhasePoint& p);

// Domain-dependent constant in the Gronwall bounds; >= 1, equals 1 for the
// quadratic builtins whose third derivatives vanish.
GronwallConstant certify_gronwall_constant(const LevelSetDomain& domain,
                                           int samples = 256, std::uint64_t seed = 1);

// Checks both Gronwall inequalities along the free flight X(s) = x + (s-t1) v
// on [t1, t2], pairwise over 32 interior checkpoints plus the endpoints.
VelocityLemmaReport velocity_lemma_check(const LevelSetDomain& domain, const PhasePoint& p,
                                         double t1, double t2, const GronwallConstant& c);

// |t1 - t2| >= |n(x1) . v| / (C_xi |v|^2) for a chord x1 -> x2 traversed with
// velocity v; C_xi is the max-boundary-curvature constant.
BounceGapReport bounce_gap_bound(const LevelSetDomain& domain, const Vec3& x1, const Vec3& x2,
                                 const Vec3& v, double t1, double t2, double curvature_c = 0.0);

}  // namespace kinetic
