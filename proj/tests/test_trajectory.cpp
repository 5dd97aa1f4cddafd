#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kinetic/trajectory.hpp"

using namespace kinetic;

namespace {

// Quadratic-root oracle for exit times through an axis-aligned ellipsoid.
double ellipsoid_exit_oracle(const Vec3& semi, const Vec3& x, const Vec3& v) {
  double a = 0.0, b = 0.0, c = -1.0;
  for (int i = 0; i < 3; ++i) {
    const double s2 = semi[i] * semi[i];
    a += v[i] * v[i] / s2;
    b += -2.0 * x[i] * v[i] / s2;
    c += x[i] * x[i] / s2;
  }
  // xi(x - tau v) = a tau^2 - b tau + c ... careful with the sign convention:
  // substituting y = x - tau v gives a tau^2 + b tau + c with b as above.
  const double disc = b * b - 4.0 * a * c;
  return (-b + std::sqrt(disc)) / (2.0 * a);
}

}  // namespace

TEST_CASE("backward exit on the unit ball") {
  const auto ball = LevelSetDomain::ball();
  auto rec = backward_exit(ball, {Vec3(0, 0, 0), Vec3(1, 0, 0)});
  CHECK(rec.t_b == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((rec.x_b - Vec3(-1, 0, 0)).norm() < 1e-10);
  CHECK(rec.dot == doctest::Approx(-1.0).epsilon(1e-10));
  CHECK_FALSE(rec.grazing);

  rec = backward_exit(ball, {Vec3(0.5, 0, 0), Vec3(1, 0, 0)});
  CHECK(rec.t_b == doctest::Approx(1.5).epsilon(1e-12));
  CHECK((rec.x_b - Vec3(-1, 0, 0)).norm() < 1e-10);
}

TEST_CASE("backward exit against the quadratic-root oracle") {
  const Vec3 semi(2.0, 1.0, 1.0);
  const auto ell = LevelSetDomain::ellipsoid(semi[0], semi[1], semi[2]);
  const Vec3 v = Vec3(1, 1, 0).normalized();
  const auto rec = backward_exit(ell, {Vec3(0, 0, 0), v});
  CHECK(rec.t_b ==
        doctest::Approx(ellipsoid_exit_oracle(semi, Vec3(0, 0, 0), v)).epsilon(1e-10));

  RandomStream rng(11);
  for (int i = 0; i < 200; ++i) {
    const Vec3 x = sample_interior(ell, rng);
    const Vec3 dir = rng.uniform_direction() * rng.uniform(0.2, 3.0);
    const auto r = backward_exit(ell, {x, dir});
    CHECK(r.t_b == doctest::Approx(ellipsoid_exit_oracle(semi, x, dir)).epsilon(1e-9));
    CHECK(std::abs(ell.xi(r.x_b)) < 1e-9 * ell.bounding_radius());
    CHECK((r.x_b - (x - r.t_b * dir)).norm() < 1e-9);
    CHECK(r.dot <= 1e-8 * dir.norm());
  }
}

TEST_CASE("backward exit degenerate inputs") {
  const auto ball = LevelSetDomain::ball();
  CHECK_THROWS_AS(backward_exit(ball, {Vec3(0, 0, 0), Vec3(0, 0, 0)}), Error);
  // incoming boundary point leaves immediately
  const auto rec = backward_exit(ball, {Vec3(1, 0, 0), Vec3(-1, 0, 0)});
  CHECK(rec.t_b == 0.0);
  CHECK((rec.x_b - Vec3(1, 0, 0)).norm() < 1e-12);
}

TEST_CASE("exit time scaling in |v|") {
  const auto ball = LevelSetDomain::ball();
  RandomStream rng(23);
  for (int i = 0; i < 200; ++i) {
    const Vec3 x = sample_interior(ball, rng);
    const Vec3 v = rng.uniform_direction();
    const double c = rng.uniform(0.5, 4.0);
    const auto r1 = backward_exit(ball, {x, v});
    const auto r2 = backward_exit(ball, {x, c * v});
    CHECK(r2.t_b == doctest::Approx(r1.t_b / c).epsilon(1e-10));
    CHECK((r1.x_b - r2.x_b).norm() < 1e-10);
  }
}

TEST_CASE("exit gradients: closed form vs finite differences") {
  const auto ball = LevelSetDomain::ball();
  // center shot: t_b = 1/|v| and x_b = -v/|v| give the hand values
  const auto g0 = exit_gradients(ball, {Vec3(0, 0, 0), Vec3(1, 0, 0)});
  CHECK((g0.grad_x_tb - Vec3(1, 0, 0)).norm() < 1e-9);
  CHECK((g0.grad_v_tb - Vec3(-1, 0, 0)).norm() < 1e-9);
  Mat3 expect_vxb = -Mat3::Identity();
  expect_vxb(0, 0) = 0.0;  // -I + e1 e1^T
  CHECK((g0.grad_v_xb - expect_vxb).norm() < 1e-9);

  const auto ell = LevelSetDomain::ellipsoid(2.0, 1.0, 1.0);
  RandomStream rng(31);
  int tested = 0;
  while (tested < 100) {
    const Vec3 x = sample_interior(ell, rng);
    const Vec3 v = rng.uniform_direction() * rng.uniform(0.3, 2.0);
    const auto rec = backward_exit(ell, {x, v});
    if (std::abs(rec.dot) < 0.1 * v.norm()) continue;  // stay clear of grazing
    ++tested;
    const auto gr = exit_gradients(ell, {x, v});
    const double h = 1e-6;
    for (int j = 0; j < 3; ++j) {
      Vec3 e = Vec3::Zero();
      e[j] = h;
      const auto xp = backward_exit(ell, {x + e, v});
      const auto xm = backward_exit(ell, {x - e, v});
      CHECK(gr.grad_x_tb[j] ==
            doctest::Approx((xp.t_b - xm.t_b) / (2 * h)).epsilon(1e-6));
      const auto vp = backward_exit(ell, {x, v + e});
      const auto vm = backward_exit(ell, {x, v - e});
      CHECK(gr.grad_v_tb[j] ==
            doctest::Approx((vp.t_b - vm.t_b) / (2 * h)).epsilon(1e-6));
      for (int i = 0; i < 3; ++i) {
        CHECK(gr.grad_x_xb(i, j) ==
              doctest::Approx((xp.x_b[i] - xm.x_b[i]) / (2 * h)).epsilon(2e-6).scale(1.0));
        CHECK(gr.grad_v_xb(i, j) ==
              doctest::Approx((vp.x_b[i] - vm.x_b[i]) / (2 * h)).epsilon(2e-6).scale(1.0));
      }
    }
  }
}

TEST_CASE("exit gradients reject grazing exits") {
  const auto ball = LevelSetDomain::ball();
  // the tangential start resolves to t_b at the float cancellation floor of
  // xi (~1e-8 here), so classify with a band above it
  bool grazing_exit = false;
  try {
    exit_gradients(ball, {Vec3(1, 0, 0), Vec3(0, 1, 0)}, 1e-6);
  } catch (const Error& e) {
    grazing_exit = e.code() == ErrorCode::GrazingExit;
  }
  CHECK(grazing_exit);
}

TEST_CASE("alpha functional") {
  const auto ball = LevelSetDomain::ball();
  // on the boundary: alpha = (v . grad xi)^2 = 4 (v . x)^2
  CHECK(alpha(ball, {Vec3(1, 0, 0), Vec3(0.7, 0.3, 0)}) ==
        doctest::Approx(4.0 * 0.49).epsilon(1e-12));
  // at the center: 1 + 4 |v|^2
  CHECK(alpha(ball, {Vec3(0, 0, 0), Vec3(1, 2, 0)}) ==
        doctest::Approx(1.0 + 4.0 * 5.0).epsilon(1e-12));
  // v = 0: xi^2
  const Vec3 x(0.3, 0.2, 0.1);
  const double xi = ball.xi(x);
  CHECK(alpha(ball, {x, Vec3::Zero()}) == doctest::Approx(xi * xi).epsilon(1e-12));

  RandomStream rng(57);
  for (int i = 0; i < 10000; ++i) {
    const Vec3 x2 = sample_interior(ball, rng);
    const Vec3 v = rng.normal3();
    CHECK(alpha(ball, {x2, v}) >= -1e-12);
  }
}

TEST_CASE("gronwall constant for quadratic level sets") {
  CHECK(certify_gronwall_constant(LevelSetDomain::ball()).c == doctest::Approx(1.0));
  CHECK(certify_gronwall_constant(LevelSetDomain::ellipsoid(2, 1, 1)).c ==
        doctest::Approx(1.0));
}

TEST_CASE("velocity lemma along free flight") {
  const auto ball = LevelSetDomain::ball();
  const auto ell = LevelSetDomain::ellipsoid(2.0, 1.0, 1.0);
  const GronwallConstant c{1.0};

  // v = 0: alpha constant, both inequalities hold
  const auto r0 = velocity_lemma_check(ball, {Vec3(0.2, 0.1, 0), Vec3::Zero()}, 0.0, 2.0, c);
  CHECK(r0.ok);

  RandomStream rng(77);
  for (int i = 0; i < 500; ++i) {
    const auto& dom = (i % 2 == 0) ? ball : ell;
    const Vec3 x = sample_interior(dom, rng);
    const Vec3 v = rng.normal3();
    if (v.norm() < 1e-6) continue;
    const double span = backward_exit(dom, {x, -v}).t_b;
    const auto rep = velocity_lemma_check(dom, {x, v}, 0.0, span, c);
    CHECK(rep.ok);
  }

  // deliberately too-small constant on a curved ellipsoid chord
  const GronwallConstant zero{0.0};
  const Vec3 v = Vec3(1, 1, 0).normalized();
  const double span = backward_exit(ell, {Vec3(0.1, 0.2, 0.1), -v}).t_b * 0.9;
  bool found_violation = !velocity_lemma_check(ell, {Vec3(0.1, 0.2, 0.1), v}, 0.0, span, zero).ok;
  CHECK(found_violation);

  CHECK_THROWS_AS(velocity_lemma_check(ball, {Vec3(0.9, 0, 0), Vec3(1, 0, 0)}, 0.0, 5.0, c),
                  Error);
}

TEST_CASE("bounce gap lower bound") {
  const auto ball = LevelSetDomain::ball();
  // diameter chord at unit speed
  const auto rep =
      bounce_gap_bound(ball, Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(1, 0, 0), 2.0, 0.0, 1.0);
  CHECK(rep.lhs == doctest::Approx(2.0));
  CHECK(rep.rhs == doctest::Approx(1.0));
  CHECK(rep.ok);

  // near-grazing chords: both sides shrink together, bound still holds
  double prev_lhs = 10.0, prev_rhs = 10.0;
  for (double b : {0.9, 0.99, 0.999}) {
    const double y = std::sqrt(1.0 - b * b);
    const Vec3 x1(b, y, 0), x2(b, -y, 0);
    const Vec3 v = (x1 - x2).normalized();
    const double gap = (x1 - x2).norm();
    const auto r = bounce_gap_bound(ball, x1, x2, v, gap, 0.0, 1.0);
    CHECK(r.ok);
    CHECK(r.lhs < prev_lhs);
    CHECK(r.rhs < prev_rhs);
    prev_lhs = r.lhs;
    prev_rhs = r.rhs;
  }

  CHECK_THROWS_AS(
      bounce_gap_bound(ball, Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3::Zero(), 1.0, 0.0, 1.0),
      Error);
}

TEST_CASE("exit time lipschitz consistency with the gradient") {
  const auto ball = LevelSetDomain::ball();
  RandomStream rng(91);
  for (int i = 0; i < 100; ++i) {
    const Vec3 x = sample_interior(ball, rng);
    const Vec3 v = rng.uniform_direction();
    const auto rec = backward_exit(ball, {x, v});
    if (std::abs(rec.dot) < 0.2) continue;
    const auto gr = exit_gradients(ball, {x, v});
    const Vec3 dx = 1e-7 * rng.uniform_direction();
    const auto rec2 = backward_exit(ball, {x + dx, v});
    const double predicted = gr.grad_x_tb.dot(dx);
    CHECK(std::abs((rec2.t_b - rec.t_b) - predicted) < 5e-12);
  }
}
