#pragma once

#include <cstdint>
#include <vector>

#include "kinetic/geometry.hpp"
#include "kinetic/rng.hpp"
#include "kinetic/trajectory.hpp"

namespace kinetic {

enum class CycleKind { BounceBack, Specular, Diffuse };
enum class CycleTermination { ReachedTime, GrazingAbort, MaxBounces };

struct CycleNode {
  double t;
  Vec3 x;
  Vec3 v;
};

// A generalized characteristic: nodes[0] is the start (t, x, v); node k >= 1
// sits on the boundary with the post-reflection velocity. Backward leg k
// covers s in [t_{k+1}, t_k] with X(s) = x_k + (s - t_k) v_k.
struct Cycle {
  CycleKind kind{CycleKind::Specular};
  std::vector<CycleNode> nodes;
  CycleTermination termination{CycleTermination::ReachedTime};

  // Index k of the leg containing time s (t_{k+1} <= s <= t_k).
  std::size_t segment_index(double s) const;
  Vec3 position_at(double s) const;
  Vec3 velocity_at(double s) const;
};

// Samples outgoing wall velocities from d_sigma = c_mu mu(v) (n.v) dv on
// {v.n > 0}: tangential components i.i.d. standard normal, normal component
// Rayleigh. Reproducible for a given (seed, stream_id).
class DiffuseSampler {
 public:
  DiffuseSampler(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed), stream_id_(stream_id), rng_(seed, stream_id) {}

  Vec3 sample(const Vec3& outward_n);

  // Independent per-path substream; deterministic regardless of threading.
  DiffuseSampler substream(std::uint64_t path_index) const {
    return DiffuseSampler(seed_, (stream_id_ << 20) ^ (path_index + 1));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  RandomStream rng_;
};

struct JacobianReport {
  int k{1};
  double eps0{0.0};
  double det_fd{0.0};
  long long zeta_pred{0};      // zeta(k), an even integer
  double rel_gap{0.0};         // |det_fd - (zeta(k)+1)| / |zeta(k)+1|
  double cumulative_time{0.0}; // sum of the bounce gaps of the base cycle
  bool time_flagged{false};    // cumulative time above 10 R / eps0
};

struct StuckFractionReport {
  double fraction{0.0};
  double stderr_{0.0};
};

Cycle bounce_back_cycle(const LevelSetDomain& domain, double t, const PhasePoint& p,
                        double stop_time, int max_bounces = 10000, double graze_tol = 1e-8);

Cycle specular_cycle(const LevelSetDomain& domain, double t, const PhasePoint& p,
                     double stop_time, int max_bounces = 10000, double graze_tol = 1e-8);

Cycle diffuse_cycle_sample(const LevelSetDomain& domain, double t, const PhasePoint& p,
                           double stop_time, DiffuseSampler& sampler, int max_bounces = 10000,
                           double graze_tol = 1e-8);

// zeta(1) = 0; zeta(k) = 4 sum_{p=1}^{k-2} (-1)^{k-p+1}
//                      + 4 sum_{p=1}^{k-2} (-1)^{k-1-p} zeta(p) + 2 + 3 zeta(k-1).
long long zeta(int k);

// Central-difference det(d v_k / d v_1) of the k-bounce specular map started
// at boundary point x1 with |v1| = eps0 and v1.n(x1) = eps0^2. With
// normal_incidence the start is v1 = -eps0 n(x1) (t_b = 0 limit), for which
// the map degenerates to the fixed reflection R(x1) and det -> -1.
JacobianReport specular_jacobian_fd(const LevelSetDomain& domain, const Vec3& x1, double eps0,
                                    int k, bool normal_incidence = false,
                                    double graze_tol = 1e-8);

// Monte Carlo estimate of int 1_{t_k > 0} prod dsigma_l over diffuse cycles
// started at (t, x, v).
StuckFractionReport stuck_fraction_mc(const LevelSetDomain& domain, double t,
                                      const PhasePoint& p, int k, int samples,
                                      const DiffuseSampler& sampler);

// fraction[j-1] = MC estimate for j bounces, j = 1..k_max, on shared paths.
std::vector<double> stuck_fraction_sweep(const LevelSetDomain& domain, double t,
                                         const PhasePoint& p, int k_max, int samples,
                                         const DiffuseSampler& sampler);

inline Vec3 reflect(const Vec3& v, const Vec3& n) { return v - 2.0 * v.dot(n) * n; }

}  // namespace kinetic
