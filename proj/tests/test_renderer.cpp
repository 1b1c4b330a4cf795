#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <omp.h>

#include "nlos/datasets.hpp"
#include "nlos/renderer.hpp"
#include "support.hpp"

using namespace nlos;
using nlos::testing::small_scene;
using nlos::testing::unit_triangle;

namespace {

double hist_sum(const std::vector<double>& h) {
  double s = 0.0;
  for (double v : h) s += v;
  return s;
}

// Brute-force segment test against every triangle.
bool brute_occluded(const TriangleMesh& mesh, const Vec3& from, const Vec3& to, int exclude) {
  Vec3 d = to - from;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    if (t == exclude || mesh.degenerate(t)) continue;
    Vec3 a = mesh.vertex(t, 0), e1 = mesh.vertex(t, 1) - a, e2 = mesh.vertex(t, 2) - a;
    Vec3 p = d.cross(e2);
    double det = e1.dot(p);
    if (std::abs(det) < 1e-300) continue;
    Vec3 s = from - a;
    double u = s.dot(p) / det;
    if (u < 0 || u > 1) continue;
    Vec3 q = s.cross(e1);
    double v = d.dot(q) / det;
    if (v < 0 || u + v > 1) continue;
    double tt = e2.dot(q) / det;
    if (tt > 0 && tt < 1) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("coupling term") {
  Vec3 n = Vec3::UnitZ();
  CHECK(coupling(Vec3(0, 0, 0), n, Vec3(0, 0, 2), -n, true) == doctest::Approx(0.25));
  CHECK(coupling(Vec3(0, 0, 0), n, Vec3(0, 0, 2), -n, false) == 0.0);
  CHECK(coupling(Vec3(0, 0, 0), n, Vec3(3, 0, 0), n, true) == 0.0);
  CHECK_THROWS_AS(coupling(Vec3(1, 1, 1), n, Vec3(1, 1, 1), n, true), std::invalid_argument);
}

TEST_CASE("filtered deposit examples") {
  TemporalAxis axis{0.0, 1.0, 4};
  std::vector<double> h(4, 0.0);
  deposit_filtered(h, {1.0, {0.0, 1.0, 2.0}}, axis);
  CHECK(h[0] == doctest::Approx(0.5));
  CHECK(h[1] == doctest::Approx(0.5));
  CHECK(h[2] == 0.0);

  std::fill(h.begin(), h.end(), 0.0);
  deposit_filtered(h, {1.0, {2.0, 0.0, 0.5}}, axis);
  // CDF(1) = 1 - (2 - 1)^2 / ((2 - 0)(2 - 0.5))
  CHECK(h[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(h[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  std::fill(h.begin(), h.end(), 0.0);
  deposit_filtered(h, {0.7, {2.5, 2.5, 2.5}}, axis);
  CHECK(h == std::vector<double>{0, 0, 0.7, 0});

  std::fill(h.begin(), h.end(), 0.0);
  deposit_filtered(h, {0.7, {2.1, 2.6, 2.3}}, axis);
  CHECK(h == std::vector<double>{0, 0, 0.7, 0});
}

TEST_CASE("filtered deposit matches numerical integration of the triangular density") {
  TemporalAxis axis{10.0, 0.37, 30};
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(10.5, 20.0);
  for (int trial = 0; trial < 50; ++trial) {
    double a = u(rng), b = a + 2.0 * std::abs(u(rng) - 15) / 5, c = b + 0.1 + std::abs(u(rng) - 15) / 4;
    std::vector<double> h(30, 0.0);
    deposit_filtered(h, {1.0, {c, a, b}}, axis);
    // Midpoint rule on the normalized triangular density.
    std::vector<double> q(30, 0.0);
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      double x = a + (c - a) * (i + 0.5) / n;
      double pdf = x <= b ? 2 * (x - a) / ((c - a) * (b - a)) : 2 * (c - x) / ((c - a) * (c - b));
      if (auto k = axis.bin_index(x)) q[*k] += pdf * (c - a) / n;
    }
    for (int k = 0; k < 30; ++k) CHECK(h[k] == doctest::Approx(q[k]).epsilon(1e-4).scale(1));
  }
}

TEST_CASE("filter drops mass outside the axis") {
  TemporalAxis axis{0.0, 1.0, 2};
  std::vector<double> h(2, 0.0);
  deposit_filtered(h, {1.0, {1.0, 2.0, 3.0}}, axis);  // half of it beyond t = 2
  CHECK(hist_sum(h) == doctest::Approx(0.5));
  std::fill(h.begin(), h.end(), 0.0);
  deposit_filtered(h, {1.0, {-1.0, 0.0, 1.0}}, axis);  // half before t0
  CHECK(hist_sum(h) == doctest::Approx(0.5));
  std::fill(h.begin(), h.end(), 0.0);
  deposit_filtered(h, {1.0, {5.0, 6.0, 7.0}}, axis);
  CHECK(hist_sum(h) == 0.0);
}

TEST_CASE("empty mesh renders a zero image") {
  SceneConfig scene = small_scene();
  TransientImage img = render(scene, TriangleMesh{});
  CHECK(img.n_rows() == scene.n_lasers() * scene.n_detectors());
  CHECK(img.max() == 0.0);
  CHECK(img.sum() == 0.0);
}

TEST_CASE("unit triangle irradiance agrees with a hand evaluation") {
  SceneConfig scene;
  scene.lasers = {Vec3(45, 0, 0)};
  scene.detectors = {Vec3(-45, 0, 0)};
  scene.axis = {80.0, 0.4, 256};
  scene.brdf = Lambertian{0.3};
  TriangleMesh mesh = unit_triangle(Vec3(0, 0, 45));
  RenderContext ctx(scene, mesh);
  auto c = triangle_irradiance(ctx, 0, 0, 0);
  // r^2 = 45^2 + 45^2 = 4050; both cosines are 1/sqrt(2) at each end.
  double eta = 0.5 / 4050.0;
  double expected = 0.3 / std::numbers::pi * eta * eta * 1.0;
  CHECK(c.alpha == doctest::Approx(expected).epsilon(1e-12));
  for (int v = 0; v < 3; ++v) {
    const Vec3& p = mesh.vertex(0, v);
    CHECK(c.tau[v] == doctest::Approx((p - scene.lasers[0]).norm() + (p - scene.detectors[0]).norm()));
  }
}

TEST_CASE("back-facing and shadowed triangles contribute nothing") {
  SceneConfig scene = small_scene(1, 2);
  TriangleMesh front = unit_triangle(Vec3(0, 0, 45));
  TriangleMesh back = front.with_flipped_normals();
  RenderContext ctx(scene, back);
  for (int d = 0; d < scene.n_detectors(); ++d) CHECK(triangle_irradiance(ctx, 0, d, 0).alpha == 0.0);
  CHECK(render(scene, back).max() == 0.0);

  // A big plate between the wall and a small far triangle.
  TriangleMesh blocker = make_plate(Vec3(0, 0, 30), 400.0, 1);
  TriangleMesh both = TriangleMesh::merge(blocker, front);
  RenderContext shadowed(scene, both);
  int far = both.n_triangles() - 1;
  for (int d = 0; d < scene.n_detectors(); ++d) {
    CHECK(triangle_irradiance(shadowed, 0, d, far).alpha == 0.0);
  }
  RenderContext no_shadow(scene, both, false);
  CHECK(triangle_irradiance(no_shadow, 0, 0, far).alpha > 0.0);
}

TEST_CASE("filter on and off deposit the same total per triangle") {
  SceneConfig scene = small_scene(2, 3, 256, 0.4);
  TriangleMesh mesh = unit_triangle(Vec3(2, -1, 45));
  TransientImage on = render(scene, mesh, {true, true});
  TransientImage off = render(scene, mesh, {false, true});
  RenderContext ctx(scene, mesh);
  double alpha_sum = 0.0;
  for (int l = 0; l < scene.n_lasers(); ++l)
    for (int d = 0; d < scene.n_detectors(); ++d) alpha_sum += triangle_irradiance(ctx, l, d, 0).alpha;
  CHECK(on.sum() == doctest::Approx(alpha_sum).epsilon(1e-12));
  CHECK(off.sum() == doctest::Approx(alpha_sum).epsilon(1e-12));
}

TEST_CASE("rendered images are nonnegative and reciprocal") {
  auto preset = make_standard_scene("two-plates");
  SceneConfig scene = small_scene(1, 3, 256, 0.4);
  TransientImage img = render(scene, preset.mesh);
  for (double v : img.values()) CHECK(v >= 0.0);
  CHECK(img.max() > 0.0);

  // Swap one laser spot with one detector.
  SceneConfig swapped = scene;
  std::swap(swapped.lasers[0], swapped.detectors[4]);
  TransientImage a = render(scene, preset.mesh);
  TransientImage b = render(swapped, preset.mesh);
  auto ra = a.row(0, 4);
  auto rb = b.row(0, 4);
  for (int k = 0; k < scene.axis.n_bins; ++k) CHECK(ra[k] == doctest::Approx(rb[k]).epsilon(1e-12));
}

TEST_CASE("rendering is bit-identical across thread counts") {
  auto preset = make_standard_scene("two-plates");
  SceneConfig scene = small_scene(2, 4, 256, 0.4);
  int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  TransientImage one = render(scene, preset.mesh);
  omp_set_num_threads(4);
  TransientImage four = render(scene, preset.mesh);
  omp_set_num_threads(saved);
  CHECK(std::equal(one.values().begin(), one.values().end(), four.values().begin()));
}

TEST_CASE("reference renderer") {
  auto preset = make_standard_scene("two-plates");
  SceneConfig scene = small_scene(1, 3, 256, 0.4);
  TransientImage level0 = reference_render(scene, preset.mesh, 0);
  TransientImage nofilter = render(scene, preset.mesh, {false, true});
  CHECK(std::equal(level0.values().begin(), level0.values().end(), nofilter.values().begin()));

  // Successive refinements move less and less.
  TransientImage r1 = reference_render(scene, preset.mesh, 1);
  TransientImage r2 = reference_render(scene, preset.mesh, 2);
  TransientImage r3 = reference_render(scene, preset.mesh, 3);
  double d12 = rel_l2(r1, r2), d23 = rel_l2(r2, r3);
  CHECK(d23 < d12);
  CHECK_THROWS(reference_render(scene, preset.mesh, -1));
}

TEST_CASE("filtered render approaches the reference on a planar square") {
  SceneConfig scene = small_scene(1, 4, 256, 0.4);
  TriangleMesh square = make_plate(Vec3(0, 0, 45), 16.0, 16);
  TransientImage fast = render(scene, square);
  // Sub-triangle footprint well below dt / 4 at level 4.
  TransientImage ref = reference_render(scene, square, 4);
  CHECK(rel_l2(fast, ref) < 1.0);
}

TEST_CASE("BVH occlusion agrees with brute force") {
  auto preset = make_standard_scene("two-blob");
  const TriangleMesh& mesh = preset.mesh;
  Bvh bvh(mesh);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-20, 20), z(30, 60);
  int hits = 0;
  for (int i = 0; i < 3000; ++i) {
    Vec3 a(u(rng), u(rng) / 2, z(rng)), b(u(rng), u(rng) / 2, z(rng));
    int exclude = i % 5 == 0 ? int(rng() % mesh.n_triangles()) : -1;
    bool expect = brute_occluded(mesh, a, b, exclude);
    hits += expect;
    CHECK(bvh.occluded(a, b, exclude) == expect);
  }
  CHECK(hits > 100);
}
