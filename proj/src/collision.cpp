#include "kinetic/collision.hpp"

#include <cmath>
#include <limits>

#include "kinetic/parallel.hpp"
#include "kinetic/quadrature.hpp"

namespace kinetic {

VelocityGrid VelocityGrid::uniform(double v_max, int n) {
  VelocityGrid g;
  g.v_max = v_max;
  g.n = n;
  g.h = 2.0 * v_max / n;
  g.nodes.reserve(static_cast<std::size_t>(n) * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        g.nodes.emplace_back(g.axis_coord(i), g.axis_coord(j), g.axis_coord(k));
  return g;
}

void VelocityGrid::scatter(const Vec3& v, std::size_t* idx, double* wgt, int* count) const {
  *count = 0;
  double f[3];
  int i0[3];
  for (int d = 0; d < 3; ++d) {
    const double s = (v[d] + v_max) / h - 0.5;  // fractional node coordinate
    i0[d] = static_cast<int>(std::floor(s));
    f[d] = s - i0[d];
    if (i0[d] < -1 || i0[d] > n - 1) return;  // fully outside
  }
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) {
        const int ia = i0[0] + a, ib = i0[1] + b, ic = i0[2] + c;
        if (ia < 0 || ia >= n || ib < 0 || ib >= n || ic < 0 || ic >= n) continue;
        const double w = (a ? f[0] : 1.0 - f[0]) * (b ? f[1] : 1.0 - f[1]) *
                         (c ? f[2] : 1.0 - f[2]);
        if (w <= 0.0) continue;
        idx[*count] = index(ia, ib, ic);
        wgt[*count] = w;
        ++(*count);
      }
}

double VelocityGrid::interpolate(const std::vector<double>& values, const Vec3& v) const {
  std::size_t idx[8];
  double wgt[8];
  int cnt = 0;
  scatter(v, idx, wgt, &cnt);
  double out = 0.0;
  for (int i = 0; i < cnt; ++i) out += wgt[i] * values[idx[i]];
  return out;
}

namespace {

// Angular quadrature q0-ready: cos(theta) per hemisphere by Gauss-Legendre
// (q0 = |cos| has a kink at 0), uniform azimuth.
struct SphereRule {
  std::vector<double> c, wc, phi;
  double wphi;

  SphereRule(int polar, int azimuth) {
    auto [xc, wx] = gauss_legendre(polar, 0.0, 1.0);
    for (int i = 0; i < polar; ++i) {
      c.push_back(xc[i]);
      wc.push_back(wx[i]);
      c.push_back(-xc[i]);
      wc.push_back(wx[i]);
    }
    for (int j = 0; j < azimuth; ++j) phi.push_back((j + 0.5) * 2.0 * M_PI / azimuth);
    wphi = 2.0 * M_PI / azimuth;
  }
};

// Orthonormal tangent frame for a unit vector.
inline void tangent_frame(const Vec3& e, Vec3* t1, Vec3* t2) {
  const Vec3 a = std::abs(e[0]) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
  *t1 = e.cross(a).normalized();
  *t2 = e.cross(*t1);
}

struct UGrid {
  std::vector<Vec3> nodes;
  double w;

  UGrid(double u_max, int n) {
    const double h = 2.0 * u_max / n;
    w = h * h * h;
    nodes.reserve(static_cast<std::size_t>(n) * n * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          nodes.emplace_back(-u_max + (i + 0.5) * h, -u_max + (j + 0.5) * h,
                             -u_max + (k + 0.5) * h);
  }
};

double sq_disc(const SphereRule& rule) {
  double s = 0.0;
  for (std::size_t i = 0; i < rule.c.size(); ++i) s += std::abs(rule.c[i]) * rule.wc[i];
  return s * rule.wphi * static_cast<double>(rule.phi.size());
}

double nu_radial(const KernelConfig& cfg, double speed, int nrho, int nc) {
  auto [rho, wrho] = gauss_legendre(nrho, 0.0, cfg.u_max);
  auto [cn, wc] = gauss_legendre(nc, -1.0, 1.0);
  double total = 0.0;
  for (int i = 0; i < nrho; ++i) {
    const double p = rho[i];
    double inner = 0.0;
    for (int j = 0; j < nc; ++j) {
      const double d2 = speed * speed + p * p - 2.0 * speed * p * cn[j];
      inner += wc[j] * std::pow(std::max(d2, 0.0), 0.5 * cfg.gamma);
    }
    total += wrho[i] * p * p * std::exp(-0.5 * p * p) * inner;
  }
  // 2 pi azimuth in u, and int q0 domega = 2 pi for q0 = |cos|.
  return 2.0 * M_PI * 2.0 * M_PI * total;
}

}  // namespace

double collision_frequency(const KernelConfig& cfg, const Vec3& v) {
  cfg.validate();
  const int nrho = std::max(32, 2 * cfg.u_nodes);
  const int nc = std::max(24, cfg.u_nodes);
  return nu_radial(cfg, v.norm(), nrho, nc);
}

double collision_frequency_checked(const KernelConfig& cfg, const Vec3& v) {
  cfg.validate();
  const int nrho = std::max(32, 2 * cfg.u_nodes);
  const int nc = std::max(24, cfg.u_nodes);
  const double a = nu_radial(cfg, v.norm(), nrho, nc);
  const double b = nu_radial(cfg, v.norm(), nrho * 3 / 2, nc * 3 / 2);
  if (std::abs(a - b) > 1e-4 * std::abs(b))
    throw Error(ErrorCode::QuadratureUnderResolved, "collision_frequency refinement gap > 1e-4");
  return b;
}

namespace {

// Shared (u, omega) loop: accumulates gain-type integrals
//   sum_u sum_omega B(v,u,omega) G(u, u', v')
// with B = |v-u|^gamma |cos theta|.
template <typename Body>
void kernel_sweep(const KernelConfig& cfg, const Vec3& v, Body&& body) {
  const UGrid ug(cfg.u_max, cfg.u_nodes);
  const SphereRule rule(cfg.omega_polar, cfg.omega_azimuth);
  for (const Vec3& u : ug.nodes) {
    const Vec3 rel = v - u;
    const double dist = rel.norm();
    if (dist < 1e-12) continue;
    const Vec3 e = rel / dist;
    Vec3 t1, t2;
    tangent_frame(e, &t1, &t2);
    const double bgamma = std::pow(dist, cfg.gamma);
    for (std::size_t ic = 0; ic < rule.c.size(); ++ic) {
      const double c = rule.c[ic];
      const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
      const double proj = dist * c;  // (v - u) . omega
      const double wq = rule.wc[ic] * rule.wphi * bgamma * std::abs(c);
      for (double ph : rule.phi) {
        const Vec3 omega = c * e + s * (std::cos(ph) * t1 + std::sin(ph) * t2);
        const Vec3 vp = v - proj * omega;
        const Vec3 up = u + proj * omega;
        body(u, up, vp, ug.w * wq);
      }
    }
  }
}

}  // namespace

double apply_K(const KernelConfig& cfg, const VelocityFn& f, const Vec3& v) {
  cfg.validate();
  const double sqmu_v = std::sqrt(maxwellian(v));
  const auto g = [&](const Vec3& x) { return std::sqrt(maxwellian(x)) * f(x); };

  double gain = 0.0;
  kernel_sweep(cfg, v, [&](const Vec3&, const Vec3& up, const Vec3& vp, double w) {
    gain += w * (maxwellian(up) * g(vp) + g(up) * maxwellian(vp));
  });

  // Loss side: sqrt(mu(v)) int B sqrt(mu(u)) f(u); the omega part separates.
  const UGrid ug(cfg.u_max, cfg.u_nodes);
  const SphereRule rule(cfg.omega_polar, cfg.omega_azimuth);
  const double sq = sq_disc(rule);
  double loss = 0.0;
  for (const Vec3& u : ug.nodes) {
    const double dist = (v - u).norm();
    if (dist < 1e-12) continue;
    loss += std::pow(dist, cfg.gamma) * g(u);
  }
  loss *= ug.w * sq * sqmu_v;
  return gain / sqmu_v - loss;
}

double apply_Kw(const KernelConfig& cfg, const WeightParams& p, const VelocityFn& h,
                const Vec3& v) {
  p.validate();
  const auto f = [&](const Vec3& x) { return h(x) / weight_w(p, x); };
  return weight_w(p, v) * apply_K(cfg, f, v);
}

double grad_majorant(const Vec3& v, const Vec3& vprime, double epsilon) {
  const double dist = (v - vprime).norm();
  if (dist < 1e-12)
    throw Error(ErrorCode::DiagonalSingularity, "grad_majorant: |v - v'| < 1e-12");
  const double c = (1.0 - epsilon) / 8.0;
  const double dsq = dist * dist;
  const double en = (v.squaredNorm() - vprime.squaredNorm());
  return (dist + 1.0 / dist) * std::exp(-c * dsq - c * en * en / dsq);
}

namespace {

double kw_product_integral(const WeightParams& p, double speed, double epsilon, int nx, int ny,
                           double x_max) {
  const double a = -((1.0 - epsilon) / 4.0 + p.theta);
  const double b = (1.0 - epsilon) / 2.0 + 2.0 * p.theta;
  const double c = -(1.0 - epsilon) / 2.0;
  auto [X, wX] = gauss_legendre(nx, 0.0, x_max);
  const double v2 = speed * speed;
  const double wv = std::pow(1.0 + p.rho * v2, p.beta) * std::exp(p.theta * v2);
  auto ratio = [&](double vp2) {
    return wv / (std::pow(1.0 + p.rho * vp2, p.beta) * std::exp(p.theta * vp2));
  };
  if (speed < 1e-12) {
    double total = 0.0;
    for (int i = 0; i < nx; ++i) {
      const double x = X[i];
      total += wX[i] * (x * x * x + x) * std::exp(a * x * x) * ratio(x * x);
    }
    return 4.0 * M_PI * total;
  }
  auto [Y, wY] = gauss_legendre(ny, -speed, speed);
  double total = 0.0;
  for (int i = 0; i < nx; ++i) {
    const double x = X[i];
    double inner = 0.0;
    for (int j = 0; j < ny; ++j) {
      const double y = Y[j];
      const double q = a * x * x + b * x * y + c * y * y;
      const double vp2 = v2 - 2.0 * x * y + x * x;
      inner += wY[j] * std::exp(q) * ratio(vp2);
    }
    total += wX[i] * (x * x * x + x) * inner;
  }
  return 2.0 * M_PI / speed * total;
}

}  // namespace

KwBoundReport kw_bound_check(const WeightParams& p, const std::vector<Vec3>& v_samples,
                             double epsilon, int nodes_x, int nodes_y) {
  // No full WeightParams validation here: the boundary case theta = 1/4 must
  // reach the negative-definiteness precheck and be flagged, not rejected.
  if (!(p.rho > 0.0)) throw Error(ErrorCode::ConfigInvalid, "kw_bound_check: rho > 0");
  KwBoundReport rep;
  const double a = -((1.0 - epsilon) / 4.0 + p.theta);
  const double c = -(1.0 - epsilon) / 2.0;
  const double disc = ((1.0 - epsilon) / 2.0 + 2.0 * p.theta) *
                      (2.0 * p.theta - (1.0 - epsilon) / 2.0);
  rep.form_negative_definite = a < 0.0 && c < 0.0 && disc < 0.0;
  if (!rep.form_negative_definite) {
    rep.max_product = std::numeric_limits<double>::infinity();
    rep.ok = false;
    return rep;
  }
  const double x_max = 40.0;
  double worst_rel = 0.0, max_prod = 0.0;
  for (const Vec3& v : v_samples) {
    const double r = v.norm();
    const double lo = kw_product_integral(p, r, epsilon, nodes_x, nodes_y, x_max);
    const double hi = kw_product_integral(p, r, epsilon, 2 * nodes_x, 2 * nodes_y, x_max);
    worst_rel = std::max(worst_rel, std::abs(hi - lo) / std::abs(hi));
    max_prod = std::max(max_prod, (1.0 + r) * hi);
  }
  rep.max_product = max_prod;
  rep.refinement_rel_diff = worst_rel;
  rep.ok = std::isfinite(max_prod) && worst_rel <= 0.02;
  return rep;
}

double gamma_gain(const KernelConfig& cfg, const VelocityFn& f1, const VelocityFn& f2,
                  const Vec3& v) {
  cfg.validate();
  const auto g1 = [&](const Vec3& x) { return std::sqrt(maxwellian(x)) * f1(x); };
  const auto g2 = [&](const Vec3& x) { return std::sqrt(maxwellian(x)) * f2(x); };
  double gain = 0.0;
  kernel_sweep(cfg, v, [&](const Vec3&, const Vec3& up, const Vec3& vp, double w) {
    gain += w * g1(up) * g2(vp);
  });
  return gain / std::sqrt(maxwellian(v));
}

double gamma_loss(const KernelConfig& cfg, const VelocityFn& f1, const VelocityFn& f2,
                  const Vec3& v) {
  cfg.validate();
  const UGrid ug(cfg.u_max, cfg.u_nodes);
  const SphereRule rule(cfg.omega_polar, cfg.omega_azimuth);
  double loss = 0.0;
  for (const Vec3& u : ug.nodes) {
    const double dist = (v - u).norm();
    if (dist < 1e-12) continue;
    loss += std::pow(dist, cfg.gamma) * std::sqrt(maxwellian(u)) * f1(u);
  }
  return loss * ug.w * sq_disc(rule) * f2(v);
}

double gamma_bilinear(const KernelConfig& cfg, const VelocityFn& f1, const VelocityFn& f2,
                      const Vec3& v) {
  return gamma_gain(cfg, f1, f2, v) - gamma_loss(cfg, f1, f2, v);
}

double q_gain(const KernelConfig& cfg, const VelocityFn& F1, const VelocityFn& F2,
              const Vec3& v) {
  cfg.validate();
  double gain = 0.0;
  kernel_sweep(cfg, v, [&](const Vec3&, const Vec3& up, const Vec3& vp, double w) {
    gain += w * F1(up) * F2(vp);
  });
  return gain;
}

double nu_of_F(const KernelConfig& cfg, const VelocityFn& F, const Vec3& v) {
  cfg.validate();
  const UGrid ug(cfg.u_max, cfg.u_nodes);
  const SphereRule rule(cfg.omega_polar, cfg.omega_azimuth);
  double total = 0.0;
  for (const Vec3& u : ug.nodes) {
    const double dist = (v - u).norm();
    if (dist < 1e-12) continue;
    total += std::pow(dist, cfg.gamma) * F(u);
  }
  return total * ug.w * sq_disc(rule);
}

FluxMeasureReport flux_measure(const WeightParams& p, const Vec3& n) {
  p.validate();
  if (n.norm() <= 0.0) throw Error(ErrorCode::PreconditionViolated, "flux_measure: |n| > 0");
  // Isotropic integrands: int_{v.n>0} F(|v|) (n.v) dv = pi int_0^inf r^3 F(r) dr.
  const double r_cut = std::max(16.0, std::sqrt(30.0 / std::max(p.theta, 0.01)));
  auto [r, w] = gauss_legendre(256, 0.0, r_cut);
  double mass = 0.0, wt2 = 0.0;
  for (int i = 0; i < 256; ++i) {
    const double r2 = r[i] * r[i];
    const double base = w[i] * r[i] * r2 * std::exp(-0.5 * r2);
    mass += base;
    const double wtilde = std::exp((0.25 - p.theta) * r2) / std::pow(1.0 + p.rho * r2, p.beta);
    wt2 += base * wtilde * wtilde;
  }
  FluxMeasureReport rep;
  const double integral = M_PI * mass;  // int_{v.n>0} mu (n.v) dv, exact value 2 pi
  rep.c_mu = 1.0 / integral;
  rep.total_mass = integral / (2.0 * M_PI);
  rep.wtilde_sq_integral = rep.c_mu * M_PI * wt2;
  return rep;
}

std::vector<double> gamma_on_grid(const KernelConfig& cfg, const VelocityGrid& grid,
                                  const std::vector<double>& f1,
                                  const std::vector<double>& f2) {
  cfg.validate();
  const std::size_t n = grid.size();
  const SphereRule rule(cfg.omega_polar, cfg.omega_azimuth);
  const double sq = sq_disc(rule);
  const double wu = grid.weight();
  // Relative formulation: the Gaussian factor mu(u')mu(v') = mu(u)mu(v) is
  // carried exactly (collision invariance); only the smooth ratios
  // s_i = f_i / sqrt(mu) are interpolated off-grid.
  std::vector<double> s1(n), s2(n), g1(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double sqmu = std::sqrt(maxwellian(grid.nodes[j]));
    s1[j] = f1[j] / sqmu;
    s2[j] = f2[j] / sqmu;
    g1[j] = sqmu * f1[j];
  }
  std::vector<double> out(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    const Vec3 v = grid.nodes[i];
    const double sqmu_v = std::sqrt(maxwellian(v));
    double gain = 0.0, loss_int = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const Vec3& u = grid.nodes[j];
      const Vec3 rel = v - u;
      const double dist = rel.norm();
      if (dist < 1e-12) continue;
      const double bgamma = std::pow(dist, cfg.gamma);
      loss_int += bgamma * g1[j];
      const double mu_uv = maxwellian(u) * maxwellian(v);
      const Vec3 e = rel / dist;
      Vec3 t1, t2;
      tangent_frame(e, &t1, &t2);
      for (std::size_t ic = 0; ic < rule.c.size(); ++ic) {
        const double c = rule.c[ic];
        const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
        const double proj = dist * c;
        const double wq = rule.wc[ic] * rule.wphi * bgamma * std::abs(c);
        for (double ph : rule.phi) {
          const Vec3 omega = c * e + s * (std::cos(ph) * t1 + std::sin(ph) * t2);
          gain += wq * mu_uv * grid.interpolate(s1, u + proj * omega) *
                  grid.interpolate(s2, v - proj * omega);
        }
      }
    }
    out[i] = wu * gain / sqmu_v - wu * sq * loss_int * f2[i];
  });
  return out;
}

std::vector<double> q_gain_on_grid(const KernelConfig& cfg, const VelocityGrid& grid,
                                   const std::vector<double>& F1,
                                   const std::vector<double>& F2) {
  cfg.validate();
  const std::size_t n = grid.size();
  const SphereRule rule(cfg.omega_polar, cfg.omega_azimuth);
  const double wu = grid.weight();
  // Relative formulation (see gamma_on_grid): F_i = mu R_i with R interpolated.
  std::vector<double> r1(n), r2(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double mu_j = maxwellian(grid.nodes[j]);
    r1[j] = F1[j] / mu_j;
    r2[j] = F2[j] / mu_j;
  }
  std::vector<double> out(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    const Vec3 v = grid.nodes[i];
    const double mu_v = maxwellian(v);
    double gain = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const Vec3& u = grid.nodes[j];
      const Vec3 rel = v - u;
      const double dist = rel.norm();
      if (dist < 1e-12) continue;
      const double bgamma = std::pow(dist, cfg.gamma);
      const double mu_uv = maxwellian(u) * mu_v;
      const Vec3 e = rel / dist;
      Vec3 t1, t2;
      tangent_frame(e, &t1, &t2);
      for (std::size_t ic = 0; ic < rule.c.size(); ++ic) {
        const double c = rule.c[ic];
        const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
        const double proj = dist * c;
        const double wq = rule.wc[ic] * rule.wphi * bgamma * std::abs(c);
        for (double ph : rule.phi) {
          const Vec3 omega = c * e + s * (std::cos(ph) * t1 + std::sin(ph) * t2);
          gain += wq * mu_uv * grid.interpolate(r1, u + proj * omega) *
                  grid.interpolate(r2, v - proj * omega);
        }
      }
    }
    out[i] = wu * gain;
  });
  return out;
}

std::vector<double> nu_of_F_on_grid(const KernelConfig& cfg, const VelocityGrid& grid,
                                    const std::vector<double>& F) {
  cfg.validate();
  const std::size_t n = grid.size();
  const SphereRule rule(cfg.omega_polar, cfg.omega_azimuth);
  const double sq = sq_disc(rule);
  const double wu = grid.weight();
  std::vector<double> out(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    const Vec3 v = grid.nodes[i];
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double dist = (v - grid.nodes[j]).norm();
      if (dist < 1e-12) continue;
      total += std::pow(dist, cfg.gamma) * F[j];
    }
    out[i] = total * wu * sq;
  });
  return out;
}

NuTable::NuTable(const KernelConfig& cfg, double r_max, int table_nodes) {
  r_max_ = r_max;
  dr_ = r_max / (table_nodes - 1);
  vals_.resize(table_nodes);
  const int nrho = std::max(32, 2 * cfg.u_nodes);
  const int nc = std::max(24, cfg.u_nodes);
  std::vector<double> tmp(table_nodes);
  parallel_for(table_nodes, [&](std::size_t i) {
    tmp[i] = nu_radial(cfg, i * dr_, nrho, nc);
  });
  vals_ = std::move(tmp);
}

double NuTable::at(double speed) const {
  if (vals_.empty()) throw Error(ErrorCode::PreconditionViolated, "NuTable is empty");
  if (speed >= r_max_) return vals_.back();
  const double s = speed / dr_;
  const std::size_t i = std::min(static_cast<std::size_t>(s), vals_.size() - 2);
  const double f = s - i;
  return (1.0 - f) * vals_[i] + f * vals_[i + 1];
}

double NuTable::min_on(const VelocityGrid& grid) const {
  double m = std::numeric_limits<double>::infinity();
  for (const Vec3& v : grid.nodes) m = std::min(m, at(v.norm()));
  return m;
}

std::vector<double> KwMatrix::apply(const std::vector<double>& h) const {
  const Eigen::Map<const Eigen::VectorXd> x(h.data(), h.size());
  Eigen::VectorXd y = m * x;
  return std::vector<double>(y.data(), y.data() + y.size());
}

KwMatrix build_kw_matrix(const KernelConfig& cfg, const WeightParams& p,
                         const VelocityGrid& grid) {
  cfg.validate();
  p.validate();
  KwMatrix kw;
  kw.grid = grid;
  const std::size_t n = grid.size();
  kw.m = KwMatrix::Matrix::Zero(n, n);
  kw.nu_grid.resize(n);
  {
    const int nrho = std::max(32, 2 * cfg.u_nodes);
    const int nc = std::max(24, cfg.u_nodes);
    std::vector<double> tmp(n);
    parallel_for(n, [&](std::size_t i) {
      tmp[i] = nu_radial(cfg, grid.nodes[i].norm(), nrho, nc);
    });
    kw.nu_grid = std::move(tmp);
  }

  // Relative formulation: g(v') = sqrt(mu) h / w = mu(v') p(v') with the
  // smooth composite p = h wtilde interpolated and the Gaussian carried
  // exactly through mu(u') mu(v') = mu(u) mu(v).
  std::vector<double> gfac(n), lossfac(n);
  for (std::size_t j = 0; j < n; ++j) {
    gfac[j] = weight_wtilde(p, grid.nodes[j]);
    lossfac[j] = std::sqrt(maxwellian(grid.nodes[j])) / weight_w(p, grid.nodes[j]);
  }

  const SphereRule rule(cfg.omega_polar, cfg.omega_azimuth);
  const double sq = sq_disc(rule);
  const double wu = grid.weight();

  parallel_for(n, [&](std::size_t i) {
    const Vec3 v = grid.nodes[i];
    // w(v)/sqrt(mu(v)) * mu(u)mu(v) = w(v) sqrt(mu(v)) mu(u)
    const double wfac = weight_w(p, v) * std::sqrt(maxwellian(v));
    auto row = kw.m.row(i);
    std::size_t idx[8];
    double wgt[8];
    int cnt = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const Vec3& u = grid.nodes[j];
      const Vec3 rel = v - u;
      const double dist = rel.norm();
      if (dist < 1e-12) continue;
      const double bgamma = std::pow(dist, cfg.gamma);
      // loss: - w(v) sqrt(mu(v)) int B sqrt(mu(u)) h(u)/w(u)
      row(j) -= wfac * wu * sq * bgamma * lossfac[j];
      const double pref = wfac * maxwellian(u);
      const Vec3 e = rel / dist;
      Vec3 t1, t2;
      tangent_frame(e, &t1, &t2);
      for (std::size_t ic = 0; ic < rule.c.size(); ++ic) {
        const double c = rule.c[ic];
        const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
        const double proj = dist * c;
        const double wq = rule.wc[ic] * rule.wphi * bgamma * std::abs(c) * wu * pref;
        for (double ph : rule.phi) {
          const Vec3 omega = c * e + s * (std::cos(ph) * t1 + std::sin(ph) * t2);
          const Vec3 vp = v - proj * omega;
          const Vec3 up = u + proj * omega;
          // mu(u') g(v') = mu(u) mu(v) p(v')
          grid.scatter(vp, idx, wgt, &cnt);
          for (int q = 0; q < cnt; ++q) row(idx[q]) += wq * wgt[q] * gfac[idx[q]];
          // g(u') mu(v') = mu(u) mu(v) p(u')
          grid.scatter(up, idx, wgt, &cnt);
          for (int q = 0; q < cnt; ++q) row(idx[q]) += wq * wgt[q] * gfac[idx[q]];
        }
      }
    }
  });
  return kw;
}

}  // namespace kinetic
