#include "kinetic/semigroup.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>

#include "kinetic/parallel.hpp"
#include "kinetic/quadrature.hpp"

namespace kinetic {

namespace {

Cycle trace_cycle(const LevelSetDomain& domain, BCSpec::Kind kind, double t,
                  const PhasePoint& p, double stop_time, double graze_tol) {
  switch (kind) {
    case BCSpec::Kind::BounceBack:
      return bounce_back_cycle(domain, t, p, stop_time, 10000, graze_tol);
    case BCSpec::Kind::Specular:
      return specular_cycle(domain, t, p, stop_time, 10000, graze_tol);
    default:
      throw Error(ErrorCode::ConfigInvalid, "trace_cycle: reflecting condition required");
  }
}

}  // namespace

GValue transport_G(const LevelSetDomain& domain, const BCSpec& bc, const NuFn& nu,
                   const PhaseFn& h0, double t, const PhasePoint& p, DiffuseSampler* sampler,
                   double h0_sup, double graze_tol) {
  bc.validate();
  GValue out;
  if (t <= 0.0) {
    out.value = h0(p.x, p.v);
    return out;
  }
  switch (bc.kind) {
    case BCSpec::Kind::Inflow: {
      const ExitRecord rec = backward_exit(domain, p, graze_tol);
      if (t - rec.t_b <= 0.0) {
        out.value = std::exp(-nu(p.v) * t) * h0(p.x - t * p.v, p.v);
      } else {
        const double wg =
            bc.weighted_datum ? bc.weighted_datum(t - rec.t_b, rec.x_b, p.v) : 0.0;
        out.value = std::exp(-nu(p.v) * rec.t_b) * wg;
      }
      return out;
    }
    case BCSpec::Kind::BounceBack:
    case BCSpec::Kind::Specular: {
      const Cycle cyc = trace_cycle(domain, bc.kind, t, p, 0.0, graze_tol);
      if (cyc.termination == CycleTermination::GrazingAbort)
        throw Error(ErrorCode::GrazingAbort, "transport_G: cycle hit grazing set");
      if (cyc.termination == CycleTermination::MaxBounces)
        throw Error(ErrorCode::NonConvergence, "transport_G: bounce cap reached");
      out.value = std::exp(-nu(p.v) * t) * h0(cyc.position_at(0.0), cyc.velocity_at(0.0));
      return out;
    }
    case BCSpec::Kind::Diffuse:
      break;
  }

  // Diffuse: Monte Carlo over sampled back-time cycles of the k_trunc-truncated
  // representation. The first leg is deterministic.
  if (sampler == nullptr)
    throw Error(ErrorCode::ConfigInvalid, "transport_G: diffuse needs a sampler");
  const ExitRecord first = backward_exit(domain, p, graze_tol);
  const double t1 = t - first.t_b;
  if (t1 <= 0.0) {
    out.value = std::exp(-nu(p.v) * t) * h0(p.x - t * p.v, p.v);
    return out;
  }
  if (first.grazing)
    throw Error(ErrorCode::GrazingAbort, "transport_G: diffuse initial leg grazing");

  const WeightParams& wp = bc.weight;
  const double prefac = std::exp(nu(p.v) * (t1 - t)) / weight_wtilde(wp, p.v);
  const int paths = bc.mc_paths;
  std::vector<double> vals(paths, 0.0);
  std::vector<double> rems(paths, 0.0);
  std::vector<unsigned char> stuck(paths, 0);
  parallel_for(paths, [&](std::size_t i) {
    DiffuseSampler rng = sampler->substream(i);
    double damp = 1.0;  // prod_{j<l} e^{nu(v_j)(t_{j+1}-t_j)}
    Vec3 x_cur = first.x_b;
    Vec3 n_cur = first.normal;
    double t_cur = t1;
    Vec3 v_last = Vec3::Zero();
    bool crossed = false;
    for (int l = 1; l <= bc.k_trunc - 1; ++l) {
      const Vec3 vl = rng.sample(n_cur);
      v_last = vl;
      const ExitRecord rec = backward_exit(domain, PhasePoint{x_cur, vl}, graze_tol);
      const double t_next = t_cur - rec.t_b;
      if (t_next <= 0.0) {
        vals[i] = prefac * damp * std::exp(-nu(vl) * t_cur) * weight_wtilde(wp, vl) *
                  h0(x_cur - t_cur * vl, vl);
        crossed = true;
        break;
      }
      damp *= std::exp(nu(vl) * (t_next - t_cur));
      x_cur = rec.x_b;
      n_cur = rec.normal;
      t_cur = t_next;
    }
    if (!crossed) {
      stuck[i] = 1;
      rems[i] = prefac * damp * weight_wtilde(wp, v_last) * h0_sup;
    }
  });

  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= paths;
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= std::max(1, paths - 1);
  long long nstuck = 0;
  double rem = 0.0;
  for (int i = 0; i < paths; ++i) {
    nstuck += stuck[i];
    rem += rems[i];
  }
  out.value = mean;
  out.mc_stderr = std::sqrt(var / paths);
  out.remainder_bound = rem / paths;
  out.stuck_fraction = static_cast<double>(nstuck) / paths;
  if (out.stuck_fraction > bc.remainder_cap)
    throw Error(ErrorCode::RemainderTooLarge, "transport_G: diffuse stuck fraction over cap");
  return out;
}

double FieldSample::sup_norm() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

FieldSample FieldSample::to_unweighted(const WeightParams& p) const {
  FieldSample out = *this;
  if (mode == WeightMode::Unweighted_f) return out;
  const std::size_t g = grid.size();
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (std::size_t j = 0; j < g; ++j) out.at(c, j) /= weight_w(p, grid.nodes[j]);
  out.mode = WeightMode::Unweighted_f;
  return out;
}

std::vector<Vec3> make_cells(const LevelSetDomain& domain, double h) {
  std::vector<Vec3> cells;
  const double r = domain.bounding_radius();
  const int n = static_cast<int>(std::ceil(2.0 * r / h));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const Vec3 x(-r + (i + 0.5) * h, -r + (j + 0.5) * h, -r + (k + 0.5) * h);
        if (domain.xi(x) < 0.0) cells.push_back(x);
      }
  if (cells.empty())
    throw Error(ErrorCode::ConfigInvalid, "make_cells: no cell center falls inside the domain");
  return cells;
}

namespace {

// Nearest-cell lookup over the tensor cell lattice.
class CellLocator {
 public:
  CellLocator(const std::vector<Vec3>& cells, double h, double r) : cells_(cells), h_(h), r_(r) {
    for (std::size_t i = 0; i < cells.size(); ++i) map_[key(cells[i])] = i;
  }

  std::size_t locate(const Vec3& x) const {
    auto it = map_.find(key(x));
    if (it != map_.end()) return it->second;
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      const double d = (cells_[i] - x).squaredNorm();
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    return best;
  }

 private:
  long long key(const Vec3& x) const {
    const long long i = static_cast<long long>(std::floor((x[0] + r_) / h_));
    const long long j = static_cast<long long>(std::floor((x[1] + r_) / h_));
    const long long k = static_cast<long long>(std::floor((x[2] + r_) / h_));
    return (i << 42) ^ (j << 21) ^ k;
  }

  const std::vector<Vec3>& cells_;
  double h_, r_;
  std::map<long long, std::size_t> map_;
};

// Exponentially weighted panel integral int_a^b e^{-rate*tau} q(tau) dtau via
// the substitution z = e^{-rate (tau - a)}; q is evaluated through `eval`.
template <typename Eval>
double exp_panel(double a, double b, double rate, Eval&& eval) {
  static const auto gl6 = gauss_legendre(6, 0.0, 1.0);
  if (rate * (b - a) < 1e-4) {
    double s = 0.0;
    for (int i = 0; i < 6; ++i) {
      const double tau = a + (b - a) * gl6.first[i];
      s += gl6.second[i] * std::exp(-rate * (tau - a)) * eval(tau);
    }
    return std::exp(-rate * a) * (b - a) * s;
  }
  const double zb = std::exp(-rate * (b - a));
  double s = 0.0;
  for (int i = 0; i < 6; ++i) {
    const double z = zb + (1.0 - zb) * gl6.first[i];
    if (z <= 0.0) continue;
    const double tau = a - std::log(z) / rate;
    s += gl6.second[i] * eval(std::min(tau, b));
  }
  return std::exp(-rate * a) * (1.0 - zb) / rate * s;
}

// Shared machinery of the Duhamel/Picard construction: levels-stored fields
// on cells x grid, backward cycles per target, exponential-weighted panels.
class LinearCore {
 public:
  using LevelsField = std::vector<std::vector<double>>;  // [level][cell*G + g]

  LinearCore(const LevelSetDomain& domain, const BCSpec& bc, const KernelConfig& cfg,
             const WeightParams& params, const PhaseFn& h0, double t,
             const DuhamelOptions& opt, const VelocityGrid& grid)
      : domain_(domain), bc_(bc), grid_(grid), opt_(opt), t_(t) {
    bc.validate();
    if (bc.kind == BCSpec::Kind::Diffuse)
      throw Error(ErrorCode::ConfigInvalid,
                  "duhamel core supports inflow/bounce-back/specular only");
    cells_ = make_cells(domain, opt.cell_h);
    locator_ = std::make_unique<CellLocator>(cells_, opt.cell_h, domain.bounding_radius());
    const int m = std::max(1, static_cast<int>(std::ceil(t * opt.time_nodes_per_unit)));
    dt_ = t / m;
    for (int j = 0; j <= m; ++j) times_.push_back(j * dt_);

    kw_ = build_kw_matrix(cfg, params, grid);
    nu_g_ = kw_.nu_grid;
    nu0_ = *std::min_element(nu_g_.begin(), nu_g_.end());

    const std::size_t targets = cells_.size() * grid_.size();
    cycles_.resize(targets);
    alive_.assign(targets, 1);
    parallel_for(targets, [&](std::size_t i) {
      const std::size_t c = i / grid_.size();
      const std::size_t g = i % grid_.size();
      const PhasePoint p{cells_[c], grid_.nodes[g]};
      try {
        if (bc.kind == BCSpec::Kind::Inflow) {
          const ExitRecord rec = backward_exit(domain_, p, opt.graze_tol);
          Cycle cyc;
          cyc.kind = CycleKind::Specular;
          cyc.nodes.push_back({0.0, p.x, p.v});
          cyc.nodes.push_back({-rec.t_b, rec.x_b, p.v});
          cyc.termination = CycleTermination::ReachedTime;
          cycles_[i] = cyc;
        } else {
          cycles_[i] = trace_cycle(domain_, bc.kind, 0.0, p, -(t + dt_), opt.graze_tol);
        }
      } catch (const Error&) {
        alive_[i] = 0;  // grazing targets are dropped (measure-zero set)
      }
    });

    // Homogeneous part G(s) h0 at every level.
    g_vals_.assign(times_.size(), std::vector<double>(targets, 0.0));
    for (std::size_t m_i = 0; m_i < times_.size(); ++m_i) {
      auto& lv = g_vals_[m_i];
      const double s = times_[m_i];
      parallel_for(targets, [&](std::size_t i) {
        if (!alive_[i]) return;
        const std::size_t g = i % grid_.size();
        const Cycle& cyc = cycles_[i];
        if (bc_.kind == BCSpec::Kind::Inflow) {
          const double tau_exit = -cyc.nodes.back().t;
          if (s - tau_exit <= 0.0) {
            lv[i] = std::exp(-nu_g_[g] * s) * h0(cyc.nodes[0].x - s * cyc.nodes[0].v,
                                                 cyc.nodes[0].v);
          } else {
            const double wg = bc_.weighted_datum
                                  ? bc_.weighted_datum(s - tau_exit, cyc.nodes.back().x,
                                                       cyc.nodes[0].v)
                                  : 0.0;
            lv[i] = std::exp(-nu_g_[g] * tau_exit) * wg;
          }
        } else {
          if (!covers(cyc, s)) return;
          lv[i] = std::exp(-nu_g_[g] * s) * h0(cyc.position_at(-s), cyc.velocity_at(-s));
        }
      });
    }
  }

  // source: optional raw S(s_level, cell, g); picard >= 1.
  LevelsField solve(int picard, const LevelsField* source, std::vector<double>* sup_diffs) {
    const std::size_t targets = cells_.size() * grid_.size();
    LevelsField u = g_vals_;
    if (source != nullptr) add_source_sweep(u, *source);
    int grow_streak = 0;
    double prev_diff = std::numeric_limits<double>::infinity();
    LevelsField cache(times_.size(), std::vector<double>(targets, 0.0));
    for (int n = 1; n <= picard; ++n) {
      build_cache(u, source, cache);
      LevelsField next(times_.size(), std::vector<double>(targets, 0.0));
      for (std::size_t m_i = 0; m_i < times_.size(); ++m_i) {
        auto& lv = next[m_i];
        const double s_m = times_[m_i];
        parallel_for(targets, [&](std::size_t i) {
          if (!alive_[i]) return;
          lv[i] = g_vals_[m_i][i] + correction(cache, s_m, i);
        });
      }
      double diff = 0.0;
      const auto& a = next.back();
      const auto& b = u.back();
      for (std::size_t i = 0; i < targets; ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
      if (sup_diffs) sup_diffs->push_back(diff);
      grow_streak = diff > prev_diff ? grow_streak + 1 : 0;
      if (grow_streak >= 3)
        throw Error(ErrorCode::NonConvergence, "duhamel: iterate differences grow");
      prev_diff = diff;
      u = std::move(next);
    }
    return u;
  }

  const std::vector<Vec3>& cells() const { return cells_; }
  const std::vector<double>& times() const { return times_; }
  const VelocityGrid& grid() const { return grid_; }
  double nu0() const { return nu0_; }
  double dt() const { return dt_; }
  double cell_weight() const { return opt_.cell_h * opt_.cell_h * opt_.cell_h; }

  FieldSample to_field(const std::vector<double>& level_values) const {
    FieldSample f;
    f.cells = cells_;
    f.cell_weight = cell_weight();
    f.grid = grid_;
    f.mode = FieldSample::WeightMode::Weighted_h;
    f.values = level_values;
    return f;
  }

 private:
  static bool covers(const Cycle& cyc, double s) {
    return cyc.termination == CycleTermination::ReachedTime || -cyc.nodes.back().t >= s;
  }

  // When a raw source S is present the zeroth iterate is G h0 + int G S.
  void add_source_sweep(LevelsField& u, const LevelsField& source) {
    LevelsField cache(times_.size(), std::vector<double>(u[0].size(), 0.0));
    for (std::size_t m_i = 0; m_i < times_.size(); ++m_i) {
      const double strip = std::exp(nu0_ * times_[m_i]);
      auto& row = cache[m_i];
      for (std::size_t i = 0; i < row.size(); ++i) row[i] = strip * source[m_i][i];
    }
    for (std::size_t m_i = 0; m_i < times_.size(); ++m_i) {
      auto& lv = u[m_i];
      const double s_m = times_[m_i];
      parallel_for(lv.size(), [&](std::size_t i) {
        if (!alive_[i]) return;
        lv[i] += correction(cache, s_m, i);
      });
    }
  }

  // cache[level][i] = e^{nu0 s_level} ((K_w u)(s_level) + S(s_level)) at target i.
  void build_cache(const LevelsField& u, const LevelsField* source, LevelsField& cache) {
    const std::size_t g_count = grid_.size();
    for (std::size_t m_i = 0; m_i < times_.size(); ++m_i) {
      const double strip = std::exp(nu0_ * times_[m_i]);
      auto& row = cache[m_i];
      const auto& uin = u[m_i];
      parallel_for(cells_.size(), [&](std::size_t c) {
        Eigen::Map<const Eigen::VectorXd> x(uin.data() + c * g_count, g_count);
        Eigen::VectorXd y = kw_.m * x;
        for (std::size_t g = 0; g < g_count; ++g) {
          double val = y[g];
          if (source != nullptr) val += (*source)[m_i][c * g_count + g];
          row[c * g_count + g] = strip * val;
        }
      });
    }
  }

  // Stripped-cache interpolation at time s1, position x, velocity w.
  double cache_at(const LevelsField& cache, double s1, const Vec3& x, const Vec3& w) const {
    const double sidx = s1 / dt_;
    std::size_t j = static_cast<std::size_t>(std::max(0.0, std::floor(sidx)));
    j = std::min(j, times_.size() - 2);
    const double f = std::min(1.0, std::max(0.0, sidx - j));
    const std::size_t c = locator_->locate(x);
    const std::size_t g_count = grid_.size();
    const double* lo = cache[j].data() + c * g_count;
    const double* hi = cache[j + 1].data() + c * g_count;
    std::size_t idx[8];
    double wgt[8];
    int cnt = 0;
    grid_.scatter(w, idx, wgt, &cnt);
    double a = 0.0, b = 0.0;
    for (int q = 0; q < cnt; ++q) {
      a += wgt[q] * lo[idx[q]];
      b += wgt[q] * hi[idx[q]];
    }
    return (1.0 - f) * a + f * b;
  }

  // int_0^{s_m} e^{-nu_g tau} e^{-nu0 (s_m - tau)} cache(s_m - tau, X(tau), V(tau)) dtau
  double correction(const LevelsField& cache, double s_m, std::size_t i) const {
    if (s_m <= 0.0) return 0.0;
    const std::size_t g = i % grid_.size();
    const Cycle& cyc = cycles_[i];
    const double nu_g = nu_g_[g];
    double tau_end = s_m;
    if (bc_.kind == BCSpec::Kind::Inflow)
      tau_end = std::min(tau_end, -cyc.nodes.back().t);  // zero datum beyond the wall
    else if (!covers(cyc, s_m))
      tau_end = std::min(tau_end, -cyc.nodes.back().t);
    const double rate_gap = nu_g - nu0_;
    if (rate_gap > 0.0) tau_end = std::min(tau_end, 45.0 / rate_gap + dt_);
    if (tau_end <= 0.0) return 0.0;

    // Panel edges: storage levels and bounce times.
    std::vector<double> edges;
    edges.push_back(0.0);
    for (double e = dt_; e < tau_end; e += dt_) edges.push_back(e);
    for (std::size_t k = 1; k < cyc.nodes.size(); ++k) {
      const double tb = -cyc.nodes[k].t;
      if (tb > 0.0 && tb < tau_end) edges.push_back(tb);
    }
    edges.push_back(tau_end);
    std::sort(edges.begin(), edges.end());

    const auto q_eval = [&](double tau) {
      const double s1 = s_m - tau;
      return std::exp(-nu0_ * s1) *
             cache_at(cache, s1, cyc.position_at(-tau), cyc.velocity_at(-tau));
    };
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
      if (edges[k + 1] - edges[k] < 1e-14) continue;
      total += exp_panel(edges[k], edges[k + 1], nu_g, q_eval);
    }
    return total;
  }

  const LevelSetDomain& domain_;
  BCSpec bc_;
  VelocityGrid grid_;
  DuhamelOptions opt_;
  double t_;
  double dt_{1.0};
  std::vector<Vec3> cells_;
  std::unique_ptr<CellLocator> locator_;
  std::vector<double> times_;
  KwMatrix kw_;
  std::vector<double> nu_g_;
  double nu0_{0.0};
  std::vector<Cycle> cycles_;
  std::vector<unsigned char> alive_;
  LevelsField g_vals_;
};

}  // namespace

DuhamelResult duhamel_U(const LevelSetDomain& domain, const BCSpec& bc,
                        const KernelConfig& cfg, const WeightParams& params,
                        const PhaseFn& h0, double t, const DuhamelOptions& opt,
                        const VelocityGrid& grid) {
  if (opt.picard_iters < 1)
    throw Error(ErrorCode::PreconditionViolated, "duhamel_U: picard_iters >= 1");
  DuhamelResult res;
  if (t <= 0.0) {
    // U(0) h0 = h0 exactly.
    FieldSample f;
    f.cells = make_cells(domain, opt.cell_h);
    f.cell_weight = opt.cell_h * opt.cell_h * opt.cell_h;
    f.grid = grid;
    f.mode = FieldSample::WeightMode::Weighted_h;
    f.values.resize(f.cells.size() * grid.size());
    for (std::size_t c = 0; c < f.cells.size(); ++c)
      for (std::size_t g = 0; g < grid.size(); ++g) f.at(c, g) = h0(f.cells[c], grid.nodes[g]);
    res.field = std::move(f);
    return res;
  }
  LinearCore core(domain, bc, cfg, params, h0, t, opt, grid);
  auto levels = core.solve(opt.picard_iters, nullptr, &res.iterate_sup_diffs);
  res.level_times = core.times();
  for (const auto& lv : levels) {
    double m = 0.0;
    for (double v : lv) m = std::max(m, std::abs(v));
    res.level_sup_norms.push_back(m);
  }
  res.nu0 = core.nu0();
  res.field = core.to_field(levels.back());
  if (opt.richardson_check) {
    DuhamelOptions fine = opt;
    fine.richardson_check = false;
    fine.time_nodes_per_unit = 2 * opt.time_nodes_per_unit;
    const DuhamelResult ref = duhamel_U(domain, bc, cfg, params, h0, t, fine, grid);
    double d = 0.0;
    for (std::size_t i = 0; i < res.field.values.size(); ++i)
      d = std::max(d, std::abs(res.field.values[i] - ref.field.values[i]));
    res.richardson_diff = d;
  }
  return res;
}

HydroProjection hydro_projection(const VelocityGrid& grid, const std::vector<double>& f) {
  if (f.size() != grid.size())
    throw Error(ErrorCode::PreconditionViolated, "hydro_projection: size mismatch");
  const std::size_t n = grid.size();
  const double w = grid.weight();
  Eigen::Matrix<double, 5, 5> gram = Eigen::Matrix<double, 5, 5>::Zero();
  Eigen::Matrix<double, 5, 1> rhs = Eigen::Matrix<double, 5, 1>::Zero();
  std::vector<std::array<double, 5>> basis(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& v = grid.nodes[i];
    const double sq = std::sqrt(maxwellian(v));
    basis[i] = {sq, v[0] * sq, v[1] * sq, v[2] * sq, v.squaredNorm() * sq};
    for (int a = 0; a < 5; ++a) {
      rhs[a] += w * basis[i][a] * f[i];
      for (int b = a; b < 5; ++b) gram(a, b) += w * basis[i][a] * basis[i][b];
    }
  }
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < a; ++b) gram(a, b) = gram(b, a);
  Eigen::FullPivLU<Eigen::Matrix<double, 5, 5>> lu(gram);
  if (!lu.isInvertible())
    throw Error(ErrorCode::SingularGram, "hydro_projection: grid too coarse for the moments");
  const Eigen::Matrix<double, 5, 1> coef = lu.solve(rhs);

  HydroProjection out;
  out.coeffs.a = coef[0];
  out.coeffs.b = Vec3(coef[1], coef[2], coef[3]);
  out.coeffs.c = coef[4];
  out.projected.resize(n);
  out.residual.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double p = 0.0;
    for (int a = 0; a < 5; ++a) p += coef[a] * basis[i][a];
    out.projected[i] = p;
    out.residual[i] = f[i] - p;
  }
  return out;
}

ConservationReport conservation_check(const std::vector<FieldSample>& trajectory,
                                      const std::optional<SymmetryAxis>& axis) {
  if (trajectory.empty())
    throw Error(ErrorCode::PreconditionViolated, "conservation_check: empty trajectory");
  for (const auto& f : trajectory)
    if (f.mode != FieldSample::WeightMode::Unweighted_f)
      throw Error(ErrorCode::PreconditionViolated,
                  "conservation_check: unweighted f fields required");
  std::vector<double> mass, energy, angular;
  for (const auto& f : trajectory) {
    double m = 0.0, e = 0.0, l = 0.0;
    const double wv = f.grid.weight();
    for (std::size_t c = 0; c < f.cells.size(); ++c) {
      for (std::size_t g = 0; g < f.grid.size(); ++g) {
        const Vec3& v = f.grid.nodes[g];
        const double base = f.cell_weight * wv * f.at(c, g) * std::sqrt(maxwellian(v));
        m += base;
        e += base * v.squaredNorm();
        if (axis) l += base * ((f.cells[c] - axis->x0).cross(axis->varpi)).dot(v);
      }
    }
    mass.push_back(m);
    energy.push_back(e);
    angular.push_back(l);
  }
  ConservationReport rep;
  for (std::size_t i = 1; i < mass.size(); ++i) {
    rep.mass_drift = std::max(rep.mass_drift, std::abs(mass[i] - mass[0]));
    rep.energy_drift = std::max(rep.energy_drift, std::abs(energy[i] - energy[0]));
    if (axis) rep.angular_drift = std::max(rep.angular_drift, std::abs(angular[i] - angular[0]));
  }
  return rep;
}

DecayReport decay_fit(const std::vector<double>& times, const std::vector<double>& norms,
                      double window_min) {
  if (times.size() != norms.size() || times.size() < 5)
    throw Error(ErrorCode::PreconditionViolated, "decay_fit: need >= 5 samples");
  DecayReport rep;
  std::vector<double> ts, ln;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < window_min) continue;
    if (!(norms[i] > 0.0))
      throw Error(ErrorCode::NonPositiveNorms, "decay_fit: nonpositive norm in window");
    ts.push_back(times[i]);
    ln.push_back(std::log(norms[i]));
    rep.times.push_back(times[i]);
    rep.norms.push_back(norms[i]);
  }
  if (ts.size() < 2)
    throw Error(ErrorCode::PreconditionViolated, "decay_fit: window leaves < 2 samples");
  const double n = static_cast<double>(ts.size());
  double st = 0.0, sl = 0.0, stt = 0.0, stl = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    st += ts[i];
    sl += ln[i];
    stt += ts[i] * ts[i];
    stl += ts[i] * ln[i];
  }
  const double denom = n * stt - st * st;
  if (std::abs(denom) < 1e-30)
    throw Error(ErrorCode::PreconditionViolated, "decay_fit: degenerate time grid");
  const double slope = (n * stl - st * sl) / denom;
  const double icept = (sl - slope * st) / n;
  rep.lambda_hat = -slope;
  double rss = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double r = ln[i] - (icept + slope * ts[i]);
    rss += r * r;
  }
  rep.fit_residual = std::sqrt(rss / n);
  return rep;
}

namespace {

// Boundary surface rule via the radial parametrization from the interior
// witness; area element by finite differences of the chart.
struct SurfaceRule {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<double> weights;
};

SurfaceRule make_surface_rule(const LevelSetDomain& domain, int n_polar, int n_azimuth) {
  SurfaceRule rule;
  auto [ct, wt] = gauss_legendre(n_polar, -1.0, 1.0);
  const double dphi = 2.0 * M_PI / n_azimuth;
  const auto chart = [&](double c, double phi) {
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    const Vec3 dir(s * std::cos(phi), s * std::sin(phi), c);
    return project_to_boundary(domain, domain.interior_witness(), dir);
  };
  const double h = 1e-5;
  for (int i = 0; i < n_polar; ++i) {
    for (int j = 0; j < n_azimuth; ++j) {
      const double phi = (j + 0.5) * dphi;
      const Vec3 x = chart(ct[i], phi);
      const Vec3 dc = (chart(std::min(ct[i] + h, 1.0 - 1e-12), phi) -
                       chart(std::max(ct[i] - h, -1.0 + 1e-12), phi)) /
                      (std::min(ct[i] + h, 1.0 - 1e-12) - std::max(ct[i] - h, -1.0 + 1e-12));
      const Vec3 dp = (chart(ct[i], phi + h) - chart(ct[i], phi - h)) / (2.0 * h);
      rule.points.push_back(x);
      rule.normals.push_back(outward_normal(domain, x));
      rule.weights.push_back(wt[i] * dphi * dc.cross(dp).norm());
    }
  }
  return rule;
}

}  // namespace

CoercivityReport coercivity_ratio(const LevelSetDomain& domain, BCSpec::Kind kind,
                                  const std::vector<double>& times,
                                  const std::function<double(double, const Vec3&, const Vec3&)>& f,
                                  const VelocityGrid& grid, const NuFn& nu, double cell_h,
                                  int surface_polar, int surface_azimuth) {
  if (times.size() < 2)
    throw Error(ErrorCode::PreconditionViolated, "coercivity_ratio: need >= 2 time samples");
  const std::vector<Vec3> cells = make_cells(domain, cell_h);
  const double wc = cell_h * cell_h * cell_h;
  const double wv = grid.weight();
  std::vector<double> nu_g(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) nu_g[g] = nu(grid.nodes[g]);

  SurfaceRule surf;
  const bool needs_boundary =
      kind == BCSpec::Kind::Inflow || kind == BCSpec::Kind::Diffuse;
  if (needs_boundary) surf = make_surface_rule(domain, surface_polar, surface_azimuth);

  double num = 0.0, den = 0.0;
  std::vector<double> fvals(grid.size());
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    // composite trapezoid weight
    double wt = 0.0;
    if (ti > 0) wt += 0.5 * (times[ti] - times[ti - 1]);
    if (ti + 1 < times.size()) wt += 0.5 * (times[ti + 1] - times[ti]);
    const double s = times[ti];

    for (const Vec3& xc : cells) {
      for (std::size_t g = 0; g < grid.size(); ++g) fvals[g] = f(s, xc, grid.nodes[g]);
      const HydroProjection proj = hydro_projection(grid, fvals);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        num += wt * wc * wv * nu_g[g] * proj.projected[g] * proj.projected[g];
        den += wt * wc * wv * nu_g[g] * proj.residual[g] * proj.residual[g];
      }
    }

    if (kind == BCSpec::Kind::Inflow) {
      for (std::size_t b = 0; b < surf.points.size(); ++b) {
        for (std::size_t g = 0; g < grid.size(); ++g) {
          const double dot = surf.normals[b].dot(grid.nodes[g]);
          const double fv = f(s, surf.points[b], grid.nodes[g]);
          den += wt * surf.weights[b] * wv * std::abs(dot) * fv * fv;
        }
      }
    } else if (kind == BCSpec::Kind::Diffuse) {
      // (I - P_gamma) f over the outgoing set.
      const double c_mu = 1.0 / (2.0 * M_PI);
      for (std::size_t b = 0; b < surf.points.size(); ++b) {
        double flux = 0.0;
        for (std::size_t g = 0; g < grid.size(); ++g) {
          const double dot = surf.normals[b].dot(grid.nodes[g]);
          if (dot <= 0.0) continue;
          flux += wv * f(s, surf.points[b], grid.nodes[g]) *
                  std::sqrt(maxwellian(grid.nodes[g])) * dot;
        }
        for (std::size_t g = 0; g < grid.size(); ++g) {
          const double dot = surf.normals[b].dot(grid.nodes[g]);
          if (dot <= 0.0) continue;
          const double pg = c_mu * std::sqrt(maxwellian(grid.nodes[g])) * flux;
          const double r = f(s, surf.points[b], grid.nodes[g]) - pg;
          den += wt * surf.weights[b] * wv * dot * r * r;
        }
      }
    }
  }

  CoercivityReport rep;
  rep.numerator = num;
  rep.denominator = den;
  if (den <= 0.0) {
    rep.zero_denominator = true;
    rep.ratio = num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  } else {
    rep.ratio = num / den;
  }
  return rep;
}

IterationResult nonlinear_iterate(const LevelSetDomain& domain, const BCSpec& bc,
                                  const KernelConfig& cfg, const WeightParams& params,
                                  const PhaseFn& h0, double t, int m_steps,
                                  const DuhamelOptions& opt, const VelocityGrid& grid,
                                  double h0_sup_threshold) {
  if (m_steps < 1)
    throw Error(ErrorCode::PreconditionViolated, "nonlinear_iterate: m_steps >= 1");
  LinearCore core(domain, bc, cfg, params, h0, t, opt, grid);

  double h0_sup = 0.0;
  for (const Vec3& xc : core.cells())
    for (const Vec3& v : grid.nodes) h0_sup = std::max(h0_sup, std::abs(h0(xc, v)));
  if (h0_sup > h0_sup_threshold)
    throw Error(ErrorCode::PreconditionViolated, "nonlinear_iterate: ||h0|| over threshold");

  const std::size_t g_count = grid.size();
  std::vector<double> wg(g_count);
  for (std::size_t g = 0; g < g_count; ++g) wg[g] = weight_w(params, grid.nodes[g]);

  IterationResult out;
  LinearCore::LevelsField h_levels;
  std::vector<double> prev_final;
  int grow_streak = 0;
  double prev_diff = std::numeric_limits<double>::infinity();
  for (int m = 1; m <= m_steps; ++m) {
    std::unique_ptr<LinearCore::LevelsField> source;
    if (m > 1) {
      source = std::make_unique<LinearCore::LevelsField>(
          core.times().size(), std::vector<double>(core.cells().size() * g_count, 0.0));
      std::vector<double> fv(g_count);
      for (std::size_t lvl = 0; lvl < core.times().size(); ++lvl) {
        for (std::size_t c = 0; c < core.cells().size(); ++c) {
          for (std::size_t g = 0; g < g_count; ++g)
            fv[g] = h_levels[lvl][c * g_count + g] / wg[g];
          const std::vector<double> gam = gamma_on_grid(cfg, grid, fv, fv);
          for (std::size_t g = 0; g < g_count; ++g)
            (*source)[lvl][c * g_count + g] = wg[g] * gam[g];
        }
      }
    }
    h_levels = core.solve(opt.picard_iters, source.get(), nullptr);
    const auto& fin = h_levels.back();
    double diff = 0.0;
    if (prev_final.empty()) {
      for (double v : fin) diff = std::max(diff, std::abs(v));
    } else {
      for (std::size_t i = 0; i < fin.size(); ++i)
        diff = std::max(diff, std::abs(fin[i] - prev_final[i]));
    }
    out.sup_diffs.push_back(diff);
    grow_streak = diff >= prev_diff ? grow_streak + 1 : 0;
    if (grow_streak >= 3)
      throw Error(ErrorCode::NonContraction, "nonlinear_iterate: differences fail to decrease");
    prev_diff = diff;
    prev_final = fin;
  }
  out.field = core.to_field(h_levels.back());
  return out;
}

PositivityResult positivity_iterate(const LevelSetDomain& domain, const BCSpec& bc,
                                    const KernelConfig& cfg, const PhaseFn& F0, double t,
                                    int m_steps, const DuhamelOptions& opt,
                                    const VelocityGrid& grid) {
  if (bc.kind == BCSpec::Kind::Diffuse)
    throw Error(ErrorCode::ConfigInvalid, "positivity_iterate: diffuse not supported");
  const std::vector<Vec3> cells = make_cells(domain, opt.cell_h);
  const std::size_t g_count = grid.size();
  const std::size_t targets = cells.size() * g_count;
  CellLocator locator(cells, opt.cell_h, domain.bounding_radius());

  const int m_lvls = std::max(1, static_cast<int>(std::ceil(t * opt.time_nodes_per_unit)));
  const double dt = t / m_lvls;
  std::vector<double> times;
  for (int j = 0; j <= m_lvls; ++j) times.push_back(j * dt);

  // Backward cycles (or single inflow leg) per target.
  std::vector<Cycle> cycles(targets);
  std::vector<unsigned char> alive(targets, 1);
  parallel_for(targets, [&](std::size_t i) {
    const std::size_t c = i / g_count;
    const std::size_t g = i % g_count;
    const PhasePoint p{cells[c], grid.nodes[g]};
    try {
      if (bc.kind == BCSpec::Kind::Inflow) {
        const ExitRecord rec = backward_exit(domain, p, opt.graze_tol);
        Cycle cyc;
        cyc.nodes.push_back({0.0, p.x, p.v});
        cyc.nodes.push_back({-rec.t_b, rec.x_b, p.v});
        cyc.termination = CycleTermination::ReachedTime;
        cycles[i] = cyc;
      } else {
        cycles[i] = trace_cycle(domain, bc.kind, 0.0, p, -(t + dt), opt.graze_tol);
      }
    } catch (const Error&) {
      alive[i] = 0;
    }
  });

  // F^0 = F0, checked nonnegative.
  std::vector<std::vector<double>> F(times.size(), std::vector<double>(targets, 0.0));
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (std::size_t g = 0; g < g_count; ++g) {
      const double val = F0(cells[c], grid.nodes[g]);
      if (val < 0.0)
        throw Error(ErrorCode::PreconditionViolated, "positivity_iterate: F0 < 0 somewhere");
      for (auto& lv : F) lv[c * g_count + g] = val;
    }

  const auto field_at = [&](const std::vector<std::vector<double>>& lvls, double s,
                            const Vec3& x, const Vec3& w) {
    const double sidx = s / dt;
    std::size_t j = static_cast<std::size_t>(std::max(0.0, std::floor(sidx)));
    j = std::min(j, times.size() - 2);
    const double f = std::min(1.0, std::max(0.0, sidx - j));
    const std::size_t c = locator.locate(x);
    std::size_t idx[8];
    double wgt[8];
    int cnt = 0;
    grid.scatter(w, idx, wgt, &cnt);
    double a = 0.0, b = 0.0;
    for (int q = 0; q < cnt; ++q) {
      a += wgt[q] * lvls[j][c * g_count + idx[q]];
      b += wgt[q] * lvls[j + 1][c * g_count + idx[q]];
    }
    return (1.0 - f) * a + f * b;
  };

  static const auto gl4 = gauss_legendre(4, 0.0, 1.0);
  for (int step = 0; step < m_steps; ++step) {
    // Frozen coefficients of the linear problem: nu(F^m) and Q_gain(F^m,F^m).
    std::vector<std::vector<double>> nuF(times.size()), gainF(times.size());
    std::vector<double> buf(g_count);
    for (std::size_t lvl = 0; lvl < times.size(); ++lvl) {
      nuF[lvl].resize(targets);
      gainF[lvl].resize(targets);
      for (std::size_t c = 0; c < cells.size(); ++c) {
        for (std::size_t g = 0; g < g_count; ++g) buf[g] = F[lvl][c * g_count + g];
        const auto nv = nu_of_F_on_grid(cfg, grid, buf);
        const auto qg = q_gain_on_grid(cfg, grid, buf, buf);
        for (std::size_t g = 0; g < g_count; ++g) {
          nuF[lvl][c * g_count + g] = nv[g];
          gainF[lvl][c * g_count + g] = qg[g];
        }
      }
    }

    std::vector<std::vector<double>> Fn(times.size(), std::vector<double>(targets, 0.0));
    for (std::size_t m_i = 0; m_i < times.size(); ++m_i) {
      const double s_m = times[m_i];
      auto& lv = Fn[m_i];
      parallel_for(targets, [&](std::size_t i) {
        if (!alive[i]) {
          lv[i] = F[m_i][i];
          return;
        }
        const Cycle& cyc = cycles[i];
        double tau_end = s_m;
        bool wall = false;
        if (bc.kind == BCSpec::Kind::Inflow) {
          const double tau_exit = -cyc.nodes.back().t;
          if (tau_exit < s_m) {
            tau_end = tau_exit;
            wall = true;
          }
        } else if (cyc.termination != CycleTermination::ReachedTime &&
                   -cyc.nodes.back().t < s_m) {
          tau_end = -cyc.nodes.back().t;  // aborted cycle: truncate
          wall = true;
        }

        // Panel edges along elapsed backward time.
        std::vector<double> edges{0.0};
        for (double e = dt; e < tau_end; e += dt) edges.push_back(e);
        for (std::size_t k = 1; k < cyc.nodes.size(); ++k) {
          const double tb = -cyc.nodes[k].t;
          if (tb > 0.0 && tb < tau_end) edges.push_back(tb);
        }
        edges.push_back(tau_end);
        std::sort(edges.begin(), edges.end());

        const auto nuF_at = [&](double tau) {
          return field_at(nuF, s_m - tau, cyc.position_at(-tau), cyc.velocity_at(-tau));
        };
        const auto gain_at = [&](double tau) {
          return std::max(0.0, field_at(gainF, s_m - tau, cyc.position_at(-tau),
                                        cyc.velocity_at(-tau)));
        };

        // March panels accumulating A(tau) = int_0^tau nu(F) and the gain term.
        double acc = 0.0, a_run = 0.0;
        for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
          const double a = edges[k], b = edges[k + 1];
          if (b - a < 1e-14) continue;
          const double rate = std::max(1e-12, nuF_at(0.5 * (a + b)));
          // int_a^b e^{-A(tau)} gain(tau) dtau with A linearized on the panel
          acc += std::exp(-a_run) *
                 exp_panel(0.0, b - a, rate, [&](double u) { return gain_at(a + u); });
          double panel_nu = 0.0;
          for (int q = 0; q < 4; ++q)
            panel_nu += gl4.second[q] * nuF_at(a + (b - a) * gl4.first[q]);
          a_run += (b - a) * panel_nu;
        }
        double terminal;
        if (!wall) {
          terminal = F0(cyc.position_at(-s_m), cyc.velocity_at(-s_m));
        } else if (bc.kind == BCSpec::Kind::Inflow) {
          terminal = maxwellian(cyc.velocity_at(-tau_end));  // wall datum F = mu
        } else {
          terminal = 0.0;
        }
        lv[i] = acc + std::exp(-a_run) * std::max(0.0, terminal);
      });
    }
    F = std::move(Fn);
  }

  PositivityResult out;
  out.field.cells = cells;
  out.field.cell_weight = opt.cell_h * opt.cell_h * opt.cell_h;
  out.field.grid = grid;
  out.field.mode = FieldSample::WeightMode::Unweighted_f;
  out.field.values = F.back();
  double mn = std::numeric_limits<double>::infinity();
  for (double v : F.back()) mn = std::min(mn, v);
  out.min_value = mn;
  return out;
}

}  // namespace kinetic
