#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "kinetic/error.hpp"
#include "kinetic/types.hpp"

namespace kinetic {

// w(v) = (1 + rho |v|^2)^beta exp(theta |v|^2), 0 <= theta < 1/4.
struct WeightParams {
  double rho{1.0};
  double beta{1.0};
  double theta{0.1};

  void validate() const {
    if (!(rho > 0.0)) throw Error(ErrorCode::ConfigInvalid, "weight: rho > 0 required");
    if (!(theta >= 0.0 && theta < 0.25))
      throw Error(ErrorCode::ConfigInvalid, "weight: theta in [0, 1/4) required");
    // Integrability of w^{-2} (1+|v|)^3 in 3-d: automatic for theta > 0,
    // otherwise needs polynomial decay 4 beta > 6.
    if (theta == 0.0 && !(beta > 1.5))
      throw Error(ErrorCode::ConfigInvalid, "weight: theta = 0 requires beta > 3/2");
  }
};

// Hard-potential kernel |v-u|^gamma q0(theta), q0 = |cos theta|, with the
// deterministic quadrature used for all collision integrals.
struct KernelConfig {
  double gamma{1.0};
  double u_max{8.0};
  int u_nodes{24};        // per axis, midpoint tensor grid on [-u_max, u_max]^3
  int omega_polar{6};     // Gauss-Legendre nodes per hemisphere in cos(theta)
  int omega_azimuth{12};  // uniform azimuth nodes
  std::uint64_t seed{0};

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0))
      throw Error(ErrorCode::ConfigInvalid, "kernel: gamma in [0,1] required");
    if (u_nodes < 4 || omega_polar < 1 || omega_azimuth < 2)
      throw Error(ErrorCode::ConfigInvalid, "kernel: quadrature spec too coarse");
  }

  KernelConfig refined() const {
    KernelConfig c = *this;
    c.u_nodes = u_nodes * 3 / 2;
    c.omega_polar = omega_polar * 3 / 2;
    c.omega_azimuth = omega_azimuth * 3 / 2;
    return c;
  }
};

// Uniform midpoint tensor grid on [-v_max, v_max]^3 with equal weights h^3.
struct VelocityGrid {
  double v_max{6.0};
  int n{12};
  double h{1.0};
  std::vector<Vec3> nodes;

  static VelocityGrid uniform(double v_max, int n);

  std::size_t size() const { return nodes.size(); }
  double weight() const { return h * h * h; }
  double axis_coord(int i) const { return -v_max + (i + 0.5) * h; }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * n + j) * n + k;
  }

  // Trilinear interpolation of nodal values; zero outside the grid hull.
  double interpolate(const std::vector<double>& values, const Vec3& v) const;

  // Scatter weights of v onto up to 8 surrounding nodes (trilinear adjoint).
  void scatter(const Vec3& v, std::size_t* idx, double* wgt, int* count) const;
};

using VelocityFn = std::function<double(const Vec3&)>;

inline double maxwellian(const Vec3& v) { return std::exp(-0.5 * v.squaredNorm()); }

inline double weight_w(const WeightParams& p, const Vec3& v) {
  const double s = v.squaredNorm();
  return std::pow(1.0 + p.rho * s, p.beta) * std::exp(p.theta * s);
}

// wtilde = 1 / (w sqrt(mu)) = exp((1/4 - theta)|v|^2) / (1 + rho|v|^2)^beta
inline double weight_wtilde(const WeightParams& p, const Vec3& v) {
  const double s = v.squaredNorm();
  return std::exp((0.25 - p.theta) * s) / std::pow(1.0 + p.rho * s, p.beta);
}

// nu(v) = int |v-u|^gamma mu(u) q0 du domega, reduced to a radial double
// quadrature; deterministic for a fixed spec.
double collision_frequency(const KernelConfig& cfg, const Vec3& v);

// Two refinement levels; throws QuadratureUnderResolved beyond 1e-4 relative.
double collision_frequency_checked(const KernelConfig& cfg, const Vec3& v);

// (K f)(v) from the definition, with the gain/loss split of the collision
// operator evaluated by (u, omega) quadrature. f must be callable off-grid.
double apply_K(const KernelConfig& cfg, const VelocityFn& f, const Vec3& v);

// Weighted conjugate K_w h = w K(h / w).
double apply_Kw(const KernelConfig& cfg, const WeightParams& p, const VelocityFn& h,
                const Vec3& v);

// Grad majorant {|v-v'| + |v-v'|^{-1}} exp(-((1-eps)/8)|v-v'|^2
//                - ((1-eps)/8) (|v|^2-|v'|^2)^2 / |v-v'|^2).
double grad_majorant(const Vec3& v, const Vec3& vprime, double epsilon);

struct KwBoundReport {
  double max_product{0.0};  // max over samples of (1+|v|) * I(v)
  bool ok{false};
  bool form_negative_definite{false};
  double refinement_rel_diff{0.0};
};

// I(v) = int majorant(v,v',eps) w(v)/w(v') dv'; checks boundedness of
// (1+|v|) I(v) and stability under quadrature refinement (2%).
KwBoundReport kw_bound_check(const WeightParams& p, const std::vector<Vec3>& v_samples,
                             double epsilon, int nodes_x = 96, int nodes_y = 48);

// Gamma(f1,f2) = (1/sqrt(mu)) Q(sqrt(mu) f1, sqrt(mu) f2), gain - loss.
double gamma_bilinear(const KernelConfig& cfg, const VelocityFn& f1, const VelocityFn& f2,
                      const Vec3& v);
double gamma_gain(const KernelConfig& cfg, const VelocityFn& f1, const VelocityFn& f2,
                  const Vec3& v);
double gamma_loss(const KernelConfig& cfg, const VelocityFn& f1, const VelocityFn& f2,
                  const Vec3& v);

// Q_gain(F1,F2)(v) and the loss frequency nu(F)(v) for nonnegative F; used by
// the positivity iteration.
double q_gain(const KernelConfig& cfg, const VelocityFn& F1, const VelocityFn& F2,
              const Vec3& v);
double nu_of_F(const KernelConfig& cfg, const VelocityFn& F, const Vec3& v);

struct FluxMeasureReport {
  double c_mu{0.0};               // 1 / quadrature of int_{v.n>0} mu (n.v) dv
  double total_mass{0.0};         // quadrature / 2 pi (exact closed form)
  double wtilde_sq_integral{0.0}; // int wtilde^2 dsigma
};

FluxMeasureReport flux_measure(const WeightParams& p, const Vec3& n);

// Grid-sampled nonlinear helpers: the u-integration runs over the same grid
// and off-grid post-collision points are filled by trilinear interpolation
// (zero outside the hull). Returns values at every grid node.
std::vector<double> gamma_on_grid(const KernelConfig& cfg, const VelocityGrid& grid,
                                  const std::vector<double>& f1,
                                  const std::vector<double>& f2);
std::vector<double> q_gain_on_grid(const KernelConfig& cfg, const VelocityGrid& grid,
                                   const std::vector<double>& F1,
                                   const std::vector<double>& F2);
std::vector<double> nu_of_F_on_grid(const KernelConfig& cfg, const VelocityGrid& grid,
                                    const std::vector<double>& F);

// Radial table of nu for fast repeated evaluation (nu is isotropic).
class NuTable {
 public:
  NuTable() = default;
  NuTable(const KernelConfig& cfg, double r_max, int table_nodes = 1024);
  double operator()(const Vec3& v) const { return at(v.norm()); }
  double at(double speed) const;
  double min_on(const VelocityGrid& grid) const;

 private:
  double r_max_{0.0};
  double dr_{1.0};
  std::vector<double> vals_;
};

// Discrete K_w on a velocity grid: (K_w h)(v_i) ~ sum_j m(i,j) h(v_j).
// Built once from the (u, omega) quadrature with trilinear scattering of the
// post-collision velocities; u-integration runs over the same grid.
struct KwMatrix {
  using Matrix =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  VelocityGrid grid;
  Matrix m;
  std::vector<double> nu_grid;  // nu at grid nodes (radial quadrature)

  std::vector<double> apply(const std::vector<double>& h) const;
};

KwMatrix build_kw_matrix(const KernelConfig& cfg, const WeightParams& p,
                         const VelocityGrid& grid);

}  // namespace kinetic
