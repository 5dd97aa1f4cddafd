#include "kinetic/geometry.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace kinetic {

LevelSetDomain LevelSetDomain::ball(double radius, const Vec3& center) {
  LevelSetDomain d;
  const double r2 = radius * radius;
  d.xi_ = [center, r2](const Vec3& x) { return (x - center).squaredNorm() - r2; };
  d.grad_ = [center](const Vec3& x) { return Vec3(2.0 * (x - center)); };
  d.hess_ = [](const Vec3&) { return Mat3(2.0 * Mat3::Identity()); };
  d.c_xi_ = 2.0;
  d.bounding_radius_ = radius + center.norm();
  d.tag_ = Tag::Ball;
  d.interior_ = center;
  return d;
}

LevelSetDomain LevelSetDomain::ellipsoid(double a, double b, double c, const Vec3& center) {
  LevelSetDomain d;
  const Vec3 inv2(1.0 / (a * a), 1.0 / (b * b), 1.0 / (c * c));
  d.xi_ = [center, inv2](const Vec3& x) {
    const Vec3 y = x - center;
    return inv2[0] * y[0] * y[0] + inv2[1] * y[1] * y[1] + inv2[2] * y[2] * y[2] - 1.0;
  };
  d.grad_ = [center, inv2](const Vec3& x) {
    const Vec3 y = x - center;
    return Vec3(2.0 * inv2[0] * y[0], 2.0 * inv2[1] * y[1], 2.0 * inv2[2] * y[2]);
  };
  Mat3 h = Mat3::Zero();
  h(0, 0) = 2.0 * inv2[0];
  h(1, 1) = 2.0 * inv2[1];
  h(2, 2) = 2.0 * inv2[2];
  d.hess_ = [h](const Vec3&) { return h; };
  d.c_xi_ = std::min(h(0, 0), std::min(h(1, 1), h(2, 2)));
  d.bounding_radius_ = std::max(a, std::max(b, c)) + center.norm();
  d.tag_ = Tag::Ellipsoid;
  d.interior_ = center;
  return d;
}

LevelSetDomain LevelSetDomain::custom(ScalarFn xi, double bounding_radius,
                                      const Vec3& interior0) {
  LevelSetDomain d;
  const double h = 1e-6 * bounding_radius;
  d.xi_ = xi;
  d.grad_ = [xi, h](const Vec3& x) {
    Vec3 g;
    for (int i = 0; i < 3; ++i) {
      Vec3 e = Vec3::Zero();
      e[i] = h;
      g[i] = (xi(x + e) - xi(x - e)) / (2.0 * h);
    }
    return g;
  };
  d.hess_ = [xi, h](const Vec3& x) {
    Mat3 m;
    const double f0 = xi(x);
    for (int i = 0; i < 3; ++i) {
      Vec3 ei = Vec3::Zero();
      ei[i] = h;
      m(i, i) = (xi(x + ei) - 2.0 * f0 + xi(x - ei)) / (h * h);
      for (int j = i + 1; j < 3; ++j) {
        Vec3 ej = Vec3::Zero();
        ej[j] = h;
        const double fpp = xi(x + ei + ej), fpm = xi(x + ei - ej);
        const double fmp = xi(x - ei + ej), fmm = xi(x - ei - ej);
        m(i, j) = m(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
      }
    }
    return m;
  };
  d.c_xi_ = 0.0;  // certified only through check_convexity
  d.bounding_radius_ = bounding_radius;
  d.tag_ = Tag::Custom;
  d.interior_ = interior0;
  if (d.xi_(interior0) >= 0.0)
    throw Error(ErrorCode::ConfigInvalid, "custom domain interior point has xi >= 0");
  return d;
}

double LevelSetDomain::curvature_constant(int samples, std::uint64_t seed) const {
  RandomStream rng(seed, 0x6b61u);
  double kmax = 0.0;
  for (int i = 0; i < samples; ++i) {
    const Vec3 x = project_to_boundary(*this, interior_, rng.uniform_direction());
    const Vec3 g = grad_(x);
    const Vec3 n = g.normalized();
    const Mat3 p = Mat3::Identity() - n * n.transpose();
    const Mat3 tang = p * hess_(x) * p;
    Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (tang + tang.transpose()));
    kmax = std::max(kmax, es.eigenvalues().maxCoeff() / g.norm());
  }
  return kmax;
}

double LevelSetDomain::third_derivative_bound(int samples, std::uint64_t seed) const {
  if (tag_ != Tag::Custom) return 0.0;  // quadratic level sets
  RandomStream rng(seed, 0x7433u);
  const double h = 1e-4 * bounding_radius_;
  double m3 = 0.0;
  for (int i = 0; i < samples; ++i) {
    const Vec3 x = sample_interior(*this, rng);
    const Vec3 z = rng.uniform_direction();
    const double qp = z.dot(hess_(x + h * z) * z);
    const double qm = z.dot(hess_(x - h * z) * z);
    m3 = std::max(m3, std::abs(qp - qm) / (2.0 * h));
  }
  return m3;
}

Vec3 outward_normal(const LevelSetDomain& domain, const Vec3& x) {
  if (!domain.on_boundary(x, 10.0))
    throw Error(ErrorCode::NotOnBoundary, "outward_normal: |xi(x)| exceeds tolerance");
  const Vec3 g = domain.grad_xi(x);
  const double n = g.norm();
  if (n < 1e-14) throw Error(ErrorCode::ZeroGradient, "outward_normal: |grad xi| < 1e-14");
  return g / n;
}

ConvexityReport check_convexity(const LevelSetDomain& domain, int sample_count,
                                std::uint64_t seed) {
  if (sample_count < 1)
    throw Error(ErrorCode::PreconditionViolated, "check_convexity: sample_count >= 1");
  RandomStream rng(seed, 0x636fu);
  double cmin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < sample_count; ++i) {
    const Vec3 x = sample_interior(domain, rng);
    Eigen::SelfAdjointEigenSolver<Mat3> es(domain.hess_xi(x));
    cmin = std::min(cmin, es.eigenvalues().minCoeff());
  }
  return ConvexityReport{cmin > 0.0, cmin};
}

double check_rotational_symmetry(const LevelSetDomain& domain, const SymmetryAxis& axis,
                                 int sample_count, std::uint64_t seed) {
  if (axis.varpi.norm() <= 0.0)
    throw Error(ErrorCode::PreconditionViolated, "symmetry axis direction is zero");
  RandomStream rng(seed, 0x726fu);
  double worst = 0.0;
  for (int i = 0; i < sample_count; ++i) {
    const Vec3 x = project_to_boundary(domain, domain.interior_witness(), rng.uniform_direction());
    const Vec3 n = outward_normal(domain, x);
    worst = std::max(worst, std::abs(((x - axis.x0).cross(axis.varpi)).dot(n)));
  }
  return worst;
}

BoundaryClass classify_boundary(const LevelSetDomain& domain, const Vec3& x, const Vec3& v,
                                double graze_tol) {
  if (!domain.on_boundary(x, 10.0))
    throw Error(ErrorCode::NotOnBoundary, "classify_boundary: x not on boundary");
  const double dot = outward_normal(domain, x).dot(v);
  if (dot > graze_tol) return BoundaryClass::Outgoing;
  if (dot < -graze_tol) return BoundaryClass::Incoming;
  return BoundaryClass::Grazing;
}

Vec3 project_to_boundary(const LevelSetDomain& domain, const Vec3& x0, const Vec3& dir) {
  if (domain.xi(x0) >= 0.0)
    throw Error(ErrorCode::ProjectionFailed, "projection start not interior");
  const Vec3 d = dir.normalized();
  const double step = domain.bounding_radius() / 64.0;
  double lo = 0.0, hi = 0.0;
  bool bracketed = false;
  for (int k = 1; k <= 192; ++k) {
    const double tau = k * step;
    if (domain.xi(x0 + tau * d) > 0.0) {
      lo = tau - step;
      hi = tau;
      bracketed = true;
      break;
    }
  }
  if (!bracketed) throw Error(ErrorCode::ProjectionFailed, "no boundary crossing along ray");
  for (int it = 0; it < 200 && (hi - lo) > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (domain.xi(x0 + mid * d) > 0.0 ? hi : lo) = mid;
  }
  double tau = 0.5 * (lo + hi);
  for (int it = 0; it < 3; ++it) {  // Newton polish
    const Vec3 x = x0 + tau * d;
    const double g = domain.grad_xi(x).dot(d);
    if (std::abs(g) < 1e-14) break;
    tau -= domain.xi(x) / g;
  }
  return x0 + tau * d;
}

Vec3 sample_interior(const LevelSetDomain& domain, RandomStream& rng) {
  const double r = domain.bounding_radius();
  for (int tries = 0; tries < 4096; ++tries) {
    const Vec3 x(rng.uniform(-r, r), rng.uniform(-r, r), rng.uniform(-r, r));
    if (domain.xi(x) < 0.0) return x;
  }
  throw Error(ErrorCode::ProjectionFailed, "interior rejection sampling failed");
}

Vec3 sample_boundary(const LevelSetDomain& domain, RandomStream& rng) {
  return project_to_boundary(domain, domain.interior_witness(), rng.uniform_direction());
}

}  // namespace kinetic
