#pragma once

#include <functional>
#include <string>

#include "kinetic/error.hpp"
#include "kinetic/rng.hpp"
#include "kinetic/types.hpp"

namespace kinetic {

// Convex region Omega = { x : xi(x) < 0 } described by a smooth level set.
// Builtins (ball, ellipsoid) carry analytic derivatives; custom domains fall
// back to central differences with step 1e-6 * bounding_radius.
class LevelSetDomain {
 public:
  enum class Tag { Ball, Ellipsoid, Custom };

  using ScalarFn = std::function<double(const Vec3&)>;
  using GradFn = std::function<Vec3(const Vec3&)>;
  using HessFn = std::function<Mat3(const Vec3&)>;

  static LevelSetDomain ball(double radius = 1.0, const Vec3& center = Vec3::Zero());
  // xi = x1^2/a^2 + x2^2/b^2 + x3^2/c^2 - 1 (translated by center).
  static LevelSetDomain ellipsoid(double a, double b, double c,
                                  const Vec3& center = Vec3::Zero());
  static LevelSetDomain custom(ScalarFn xi, double bounding_radius, const Vec3& interior0);

  double xi(const Vec3& x) const { return xi_(x); }
  Vec3 grad_xi(const Vec3& x) const { return grad_(x); }
  Mat3 hess_xi(const Vec3& x) const { return hess_(x); }

  double c_xi() const { return c_xi_; }
  double bounding_radius() const { return bounding_radius_; }
  double boundary_tolerance() const { return 1e-10 * bounding_radius_; }
  Tag tag() const { return tag_; }
  const Vec3& interior_witness() const { return interior_; }

  bool on_boundary(const Vec3& x, double slack = 1.0) const {
    return std::abs(xi(x)) <= slack * boundary_tolerance();
  }
  bool inside(const Vec3& x) const { return xi(x) <= boundary_tolerance(); }

  // Max eigenvalue of the tangential Hessian / |grad xi| over boundary samples;
  // the constant C_xi of the bounce-gap bound.
  double curvature_constant(int samples = 512, std::uint64_t seed = 1) const;

  // Sup of the third-derivative cubic form over interior samples; 0 for the
  // quadratic builtins.
  double third_derivative_bound(int samples = 256, std::uint64_t seed = 1) const;

 private:
  LevelSetDomain() = default;

  ScalarFn xi_;
  GradFn grad_;
  HessFn hess_;
  double c_xi_{0.0};
  double bounding_radius_{1.0};
  Tag tag_{Tag::Custom};
  Vec3 interior_{Vec3::Zero()};
};

struct SymmetryAxis {
  Vec3 x0{Vec3::Zero()};   // pivot
  Vec3 varpi{0.0, 0.0, 1.0};  // direction, |varpi| > 0
};

enum class BoundaryClass { Incoming, Outgoing, Grazing };

struct ConvexityReport {
  bool passed{false};
  double observed_c_xi{0.0};
};

// n(x) = grad xi / |grad xi| at a boundary point.
Vec3 outward_normal(const LevelSetDomain& domain, const Vec3& x);

ConvexityReport check_convexity(const LevelSetDomain& domain, int sample_count,
                                std::uint64_t seed);

// Max over sampled boundary points of |{(x - x0) x varpi} . n(x)|.
double check_rotational_symmetry(const LevelSetDomain& domain, const SymmetryAxis& axis,
                                 int sample_count, std::uint64_t seed);

BoundaryClass classify_boundary(const LevelSetDomain& domain, const Vec3& x, const Vec3& v,
                                double graze_tol = 1e-8);

// First root of xi along x0 + tau*dir, tau > 0; used for boundary sampling.
Vec3 project_to_boundary(const LevelSetDomain& domain, const Vec3& x0, const Vec3& dir);

Vec3 sample_interior(const LevelSetDomain& domain, RandomStream& rng);
Vec3 sample_boundary(const LevelSetDomain& domain, RandomStream& rng);

}  // namespace kinetic
