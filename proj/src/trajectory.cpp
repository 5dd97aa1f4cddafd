#include "kinetic/trajectory.hpp"

#include <cmath>
#include <limits>

namespace kinetic {

ExitRecord backward_exit(const LevelSetDomain& domain, const PhasePoint& p, double graze_tol) {
  const double speed = p.v.norm();
  if (speed <= 0.0) throw Error(ErrorCode::ZeroVelocity, "backward_exit: |v| = 0");
  const double btol = domain.boundary_tolerance();
  const double xi0 = domain.xi(p.x);
  if (xi0 > 10.0 * btol)
    throw Error(ErrorCode::PreconditionViolated, "backward_exit: x outside closure");

  const auto g = [&](double tau) { return domain.xi(p.x - tau * p.v); };

  double tb = -1.0;
  // Start on the boundary moving out backward: exit immediately. xi(x - tau v)
  // has derivative -v.grad(xi) at tau=0; positive derivative means xi grows.
  if (std::abs(xi0) <= btol && -p.v.dot(domain.grad_xi(p.x)) > 0.0) {
    tb = 0.0;
  } else {
    // Convexity of xi along the line gives a single sign change for tau > 0.
    const double step = domain.bounding_radius() / (64.0 * speed);
    const double tau_max = 2.5 * domain.bounding_radius() / speed;
    double lo = 0.0, hi = -1.0;
    for (double tau = step; tau <= tau_max + step; tau += step) {
      if (g(tau) > 0.0) {
        hi = tau;
        lo = tau - step;
        break;
      }
    }
    if (hi < 0.0) throw Error(ErrorCode::NoExit, "backward_exit: no crossing in bracket");
    while (hi - lo > 1e-12 * hi) {
      const double mid = 0.5 * (lo + hi);
      (g(mid) > 0.0 ? hi : lo) = mid;
    }
    tb = 0.5 * (lo + hi);
    for (int it = 0; it < 3; ++it) {  // Newton polish on xi(x - tau v) = 0
      const Vec3 xb = p.x - tb * p.v;
      const double dg = -p.v.dot(domain.grad_xi(xb));
      if (std::abs(dg) < 1e-300) break;
      tb -= domain.xi(xb) / dg;
    }
    if (tb < 0.0) tb = 0.0;
  }

  ExitRecord rec;
  rec.t_b = tb;
  rec.x_b = p.x - tb * p.v;
  rec.normal = outward_normal(domain, rec.x_b);
  rec.dot = p.v.dot(rec.normal);
  rec.grazing = std::abs(rec.dot) <= graze_tol * speed;
  return rec;
}

ExitGradients exit_gradients(const LevelSetDomain& domain, const PhasePoint& p,
                             double graze_tol) {
  const ExitRecord rec = backward_exit(domain, p, graze_tol);
  if (rec.grazing)
    throw Error(ErrorCode::GrazingExit, "exit_gradients: formula singular on grazing set");
  const Vec3 n = rec.normal;
  const double dot = rec.dot;  // v . n(x_b) < 0 here
  ExitGradients out;
  out.grad_x_tb = n / dot;
  out.grad_v_tb = -rec.t_b * n / dot;
  out.grad_x_xb = Mat3::Identity() - p.v * out.grad_x_tb.transpose();
  out.grad_v_xb = -rec.t_b * Mat3::Identity() - p.v * out.grad_v_tb.transpose();
  return out;
}

double alpha(const LevelSetDomain& domain, const PhasePoint& p) {
  const double xi = domain.xi(p.x);
  const double vg = p.v.dot(domain.grad_xi(p.x));
  const double vhv = p.v.dot(domain.hess_xi(p.x) * p.v);
  return xi * xi + vg * vg - 2.0 * vhv * xi;
}

GronwallConstant certify_gronwall_constant(const LevelSetDomain& domain, int samples,
                                           std::uint64_t seed) {
  double c_conv = domain.c_xi();
  if (c_conv <= 0.0) {
    const ConvexityReport rep = check_convexity(domain, samples, seed);
    if (!rep.passed)
      throw Error(ErrorCode::PreconditionViolated,
                  "gronwall constant requires a certified-convex domain");
    c_conv = rep.observed_c_xi;
  }
  const double m3 = domain.third_derivative_bound(samples, seed);
  const double safety = domain.tag() == LevelSetDomain::Tag::Custom ? 2.0 : 1.0;
  return GronwallConstant{std::max(1.0, safety * m3 / c_conv)};
}

VelocityLemmaReport velocity_lemma_check(const LevelSetDomain& domain, const PhasePoint& p,
                                         double t1, double t2, const GronwallConstant& c) {
  if (t2 < t1)
    throw Error(ErrorCode::PreconditionViolated, "velocity_lemma_check: t1 <= t2 required");
  const double btol = domain.boundary_tolerance();
  const auto at = [&](double s) { return PhasePoint{p.x + (s - t1) * p.v, p.v}; };
  for (int i = 0; i <= 64; ++i) {
    const double s = t1 + (t2 - t1) * i / 64.0;
    if (domain.xi(at(s).x) > 10.0 * btol)
      throw Error(ErrorCode::SegmentLeavesDomain, "velocity_lemma_check: segment leaves closure");
  }

  constexpr int kInterior = 32;
  const double rate = c.c * (p.v.norm() + 1.0);
  double sgrid[kInterior + 2];
  double la[kInterior + 2];
  for (int i = 0; i < kInterior + 2; ++i) {
    const double s = t1 + (t2 - t1) * i / (kInterior + 1.0);
    sgrid[i] = s;
    const double a = alpha(domain, at(s));
    la[i] = a > 0.0 ? std::log(a) : -std::numeric_limits<double>::infinity();
  }

  double worst = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kInterior + 2; ++i) {
    for (int j = i + 1; j < kInterior + 2; ++j) {
      // e^{rate s_i} a_i <= e^{rate s_j} a_j  and  e^{-rate s_i} a_i >= e^{-rate s_j} a_j
      double m1, m2;
      if (std::isinf(la[i]) && std::isinf(la[j])) {
        m1 = m2 = 0.0;
      } else if (std::isinf(la[i])) {
        m1 = std::numeric_limits<double>::infinity();
        m2 = -std::numeric_limits<double>::infinity();
      } else if (std::isinf(la[j])) {
        m1 = -std::numeric_limits<double>::infinity();
        m2 = std::numeric_limits<double>::infinity();
      } else {
        m1 = (rate * sgrid[j] + la[j]) - (rate * sgrid[i] + la[i]);
        m2 = (-rate * sgrid[i] + la[i]) - (-rate * sgrid[j] + la[j]);
      }
      worst = std::min(worst, std::min(m1, m2));
    }
  }
  return VelocityLemmaReport{worst >= -1e-10, worst};
}

BounceGapReport bounce_gap_bound(const LevelSetDomain& domain, const Vec3& x1, const Vec3& x2,
                                 const Vec3& v, double t1, double t2, double curvature_c) {
  const double speed = v.norm();
  if (speed <= 0.0) throw Error(ErrorCode::ZeroVelocity, "bounce_gap_bound: |v| = 0");
  const double btol = domain.boundary_tolerance();
  if (std::abs(domain.xi(x1)) > 100.0 * btol || std::abs(domain.xi(x2)) > 100.0 * btol)
    throw Error(ErrorCode::PreconditionViolated, "bounce_gap_bound: endpoints not on boundary");
  for (int i = 0; i <= 32; ++i) {
    const Vec3 x = x1 + (x2 - x1) * (i / 32.0);
    if (domain.xi(x) > 100.0 * btol)
      throw Error(ErrorCode::SegmentLeavesDomain, "bounce_gap_bound: chord leaves closure");
  }
  const double c = curvature_c > 0.0 ? curvature_c : domain.curvature_constant();
  const Vec3 n1 = outward_normal(domain, x1);
  BounceGapReport rep;
  rep.lhs = std::abs(t1 - t2);
  rep.rhs = std::abs(n1.dot(v)) / (c * speed * speed);
  rep.ok = rep.lhs >= rep.rhs * (1.0 - 1e-12);
  return rep;
}

}  // namespace kinetic
