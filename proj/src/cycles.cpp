#include "kinetic/cycles.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <limits>

#include "kinetic/parallel.hpp"

namespace kinetic {

std::size_t Cycle::segment_index(double s) const {
  if (nodes.empty() || s > nodes.front().t + 1e-12)
    throw Error(ErrorCode::PreconditionViolated, "cycle does not cover requested time");
  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
    if (s >= nodes[k + 1].t) return k;
  }
  if (termination == CycleTermination::ReachedTime)
    throw Error(ErrorCode::PreconditionViolated, "cycle does not cover requested time");
  return nodes.size() - 1;
}

Vec3 Cycle::position_at(double s) const {
  const CycleNode& n = nodes[segment_index(s)];
  return n.x + (s - n.t) * n.v;
}

Vec3 Cycle::velocity_at(double s) const { return nodes[segment_index(s)].v; }

Vec3 DiffuseSampler::sample(const Vec3& outward_n) {
  const Vec3 n = outward_n;
  Vec3 a = std::abs(n[0]) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
  const Vec3 t1 = n.cross(a).normalized();
  const Vec3 t2 = n.cross(t1);
  const double g1 = rng_.normal();
  const double g2 = rng_.normal();
  const double s = rng_.rayleigh();
  return g1 * t1 + g2 * t2 + s * n;
}

namespace {

Cycle generate_cycle(const LevelSetDomain& domain, CycleKind kind, double t,
                     const PhasePoint& p, double stop_time, int max_bounces, double graze_tol,
                     DiffuseSampler* sampler) {
  if (stop_time > t)
    throw Error(ErrorCode::PreconditionViolated, "cycle: stop_time <= t required");
  const double speed = p.v.norm();
  if (speed <= 0.0) throw Error(ErrorCode::ZeroVelocity, "cycle: |v| = 0");
  if (domain.on_boundary(p.x, 10.0)) {
    const double dot = outward_normal(domain, p.x).dot(p.v);
    if (std::abs(dot) <= graze_tol * speed)
      throw Error(ErrorCode::GrazingAbort, "cycle: start on grazing set");
  }

  Cycle cyc;
  cyc.kind = kind;
  cyc.nodes.push_back({t, p.x, p.v});
  for (int k = 0; k < max_bounces; ++k) {
    const CycleNode& cur = cyc.nodes.back();
    const ExitRecord rec = backward_exit(domain, PhasePoint{cur.x, cur.v}, graze_tol);
    const double t_next = cur.t - rec.t_b;
    if (rec.grazing && kind != CycleKind::Diffuse) {
      if (cyc.nodes.size() == 1)
        throw Error(ErrorCode::GrazingAbort, "cycle: first bounce is grazing");
      cyc.termination = CycleTermination::GrazingAbort;
      return cyc;
    }
    Vec3 v_next;
    switch (kind) {
      case CycleKind::BounceBack:
        v_next = -cur.v;
        break;
      case CycleKind::Specular:
        v_next = reflect(cur.v, rec.normal);
        break;
      case CycleKind::Diffuse:
        if (rec.grazing) {
          if (cyc.nodes.size() == 1)
            throw Error(ErrorCode::GrazingAbort, "diffuse cycle: initial leg grazing");
          cyc.termination = CycleTermination::GrazingAbort;
          return cyc;
        }
        v_next = sampler->sample(rec.normal);
        break;
    }
    cyc.nodes.push_back({t_next, rec.x_b, v_next});
    if (t_next <= stop_time) {
      cyc.termination = CycleTermination::ReachedTime;
      return cyc;
    }
  }
  cyc.termination = CycleTermination::MaxBounces;
  return cyc;
}

}  // namespace

Cycle bounce_back_cycle(const LevelSetDomain& domain, double t, const PhasePoint& p,
                        double stop_time, int max_bounces, double graze_tol) {
  return generate_cycle(domain, CycleKind::BounceBack, t, p, stop_time, max_bounces, graze_tol,
                        nullptr);
}

Cycle specular_cycle(const LevelSetDomain& domain, double t, const PhasePoint& p,
                     double stop_time, int max_bounces, double graze_tol) {
  return generate_cycle(domain, CycleKind::Specular, t, p, stop_time, max_bounces, graze_tol,
                        nullptr);
}

Cycle diffuse_cycle_sample(const LevelSetDomain& domain, double t, const PhasePoint& p,
                           double stop_time, DiffuseSampler& sampler, int max_bounces,
                           double graze_tol) {
  return generate_cycle(domain, CycleKind::Diffuse, t, p, stop_time, max_bounces, graze_tol,
                        &sampler);
}

long long zeta(int k) {
  if (k < 1) throw Error(ErrorCode::PreconditionViolated, "zeta: k >= 1");
  static std::vector<long long> memo{0, 0};  // memo[1] = zeta(1) = 0
  while (static_cast<int>(memo.size()) <= k) {
    const int m = static_cast<int>(memo.size());
    long long s1 = 0, s2 = 0;
    for (int p = 1; p <= m - 2; ++p) {
      const int sign1 = ((m - p + 1) % 2 == 0) ? 1 : -1;
      const int sign2 = ((m - 1 - p) % 2 == 0) ? 1 : -1;
      s1 += sign1;
      s2 += sign2 * memo[p];
    }
    memo.push_back(4 * s1 + 4 * s2 + 2 + 3 * memo[m - 1]);
  }
  return memo[k];
}

JacobianReport specular_jacobian_fd(const LevelSetDomain& domain, const Vec3& x1, double eps0,
                                    int k, bool normal_incidence, double graze_tol) {
  if (k < 1) throw Error(ErrorCode::PreconditionViolated, "jacobian: k >= 1");
  if (domain.c_xi() <= 0.0 && domain.tag() == LevelSetDomain::Tag::Custom)
    throw Error(ErrorCode::PreconditionViolated, "jacobian: strictly convex domain required");
  const Vec3 n = outward_normal(domain, x1);
  Vec3 a = std::abs(n[0]) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
  const Vec3 tang = n.cross(a).normalized();

  Vec3 v1;
  if (normal_incidence) {
    v1 = -eps0 * n;
  } else {
    v1 = std::sqrt(eps0 * eps0 - eps0 * eps0 * eps0 * eps0) * tang + eps0 * eps0 * n;
  }

  const auto map_vk = [&](const Vec3& v) -> Vec3 {
    Cycle cyc = generate_cycle(domain, CycleKind::Specular, 0.0, PhasePoint{x1, v},
                               -std::numeric_limits<double>::infinity(), k - 1, graze_tol,
                               nullptr);
    if (static_cast<int>(cyc.nodes.size()) != k)
      throw Error(ErrorCode::GrazingAbort, "jacobian: cycle aborted before k bounces");
    return cyc.nodes[k - 1].v;
  };

  const double h = 1e-6 * eps0;
  Mat3 jac;
  for (int j = 0; j < 3; ++j) {
    Vec3 e = Vec3::Zero();
    e[j] = h;
    jac.col(j) = (map_vk(v1 + e) - map_vk(v1 - e)) / (2.0 * h);
  }
  Eigen::JacobiSVD<Mat3> svd(jac);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (smin <= 0.0 || smax / smin > 1e8)
    throw Error(ErrorCode::IllConditioned, "jacobian: FD matrix condition exceeds 1e8");

  JacobianReport rep;
  rep.k = k;
  rep.eps0 = eps0;
  rep.det_fd = jac.determinant();
  rep.zeta_pred = zeta(k);
  const double pred = normal_incidence ? -1.0 : static_cast<double>(rep.zeta_pred + 1);
  rep.rel_gap = std::abs(rep.det_fd - pred) / std::abs(pred);
  {
    Cycle base = generate_cycle(domain, CycleKind::Specular, 0.0, PhasePoint{x1, v1},
                                -std::numeric_limits<double>::infinity(), k - 1, graze_tol,
                                nullptr);
    rep.cumulative_time = -base.nodes.back().t;
    rep.time_flagged = rep.cumulative_time > 10.0 * domain.bounding_radius() / eps0;
  }
  return rep;
}

namespace {

// Largest j <= k_max with t_j > 0 for one sampled diffuse path (0 if t_1 <= 0).
int stuck_depth(const LevelSetDomain& domain, double t, const PhasePoint& p, int k_max,
                DiffuseSampler& rng) {
  double tk = t;
  Vec3 x = p.x, v = p.v;
  for (int j = 1; j <= k_max; ++j) {
    const ExitRecord rec = backward_exit(domain, PhasePoint{x, v}, 0.0);
    tk -= rec.t_b;
    if (tk <= 0.0) return j - 1;
    x = rec.x_b;
    v = rng.sample(rec.normal);
  }
  return k_max;
}

}  // namespace

StuckFractionReport stuck_fraction_mc(const LevelSetDomain& domain, double t,
                                      const PhasePoint& p, int k, int samples,
                                      const DiffuseSampler& sampler) {
  if (k < 2) throw Error(ErrorCode::PreconditionViolated, "stuck_fraction_mc: k >= 2");
  if (samples < 100)
    throw Error(ErrorCode::PreconditionViolated, "stuck_fraction_mc: samples >= 100");
  std::vector<unsigned char> stuck(samples, 0);
  parallel_for(samples, [&](std::size_t i) {
    DiffuseSampler path_rng = sampler.substream(i);
    stuck[i] = stuck_depth(domain, t, p, k, path_rng) >= k ? 1 : 0;
  });
  long long cnt = 0;
  for (auto b : stuck) cnt += b;
  const double f = static_cast<double>(cnt) / samples;
  return StuckFractionReport{f, std::sqrt(std::max(f * (1.0 - f), 1e-300) / samples)};
}

std::vector<double> stuck_fraction_sweep(const LevelSetDomain& domain, double t,
                                         const PhasePoint& p, int k_max, int samples,
                                         const DiffuseSampler& sampler) {
  std::vector<int> depth(samples, 0);
  parallel_for(samples, [&](std::size_t i) {
    DiffuseSampler path_rng = sampler.substream(i);
    depth[i] = stuck_depth(domain, t, p, k_max, path_rng);
  });
  std::vector<long long> cnt(k_max + 1, 0);
  for (int d : depth) cnt[d] += 1;
  std::vector<double> frac(k_max);
  long long above = 0;
  for (int j = k_max; j >= 1; --j) {
    above += cnt[j];
    frac[j - 1] = static_cast<double>(above) / samples;
  }
  return frac;
}

}  // namespace kinetic
