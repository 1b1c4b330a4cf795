#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "nlos/scene.hpp"
#include "support.hpp"

using namespace nlos;

TEST_CASE("bin_index follows half-open bins") {
  TemporalAxis axis{80.0, 0.4, 256};
  CHECK(axis.bin_index(80.0) == 0);
  CHECK_FALSE(axis.bin_index(79.999).has_value());
  // laser (45,0,0) -> (0,0,45) -> detector (-45,0,0)
  double tau = 2.0 * 45.0 * std::sqrt(2.0);
  CHECK(axis.bin_index(tau) == 118);
  CHECK(axis.bin_index(80.4) == 1);
  CHECK(axis.bin_index(axis.end() - 1e-9) == 255);
  CHECK_FALSE(axis.bin_index(axis.end()).has_value());
  CHECK_FALSE(axis.bin_index(std::nan("")).has_value());
}

TEST_CASE("every tau inside the axis lands in exactly the bin whose edges enclose it") {
  TemporalAxis axis{-3.7, 0.13, 97};
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(axis.t0, axis.end());
  for (int i = 0; i < 20000; ++i) {
    double tau = u(rng);
    auto k = axis.bin_index(tau);
    REQUIRE(k.has_value());
    CHECK(axis.bin_start(*k) <= tau);
    CHECK(tau < axis.bin_start(*k + 1));
  }
  // Exact edges belong to the bin above.
  for (int k = 0; k < axis.n_bins; ++k) CHECK(axis.bin_index(axis.bin_start(k)) == k);
}

TEST_CASE("axis validation") {
  CHECK_THROWS_AS((TemporalAxis{0, 0, 4}).validate(), ConfigError);
  CHECK_THROWS_AS((TemporalAxis{0, 1, 0}).validate(), ConfigError);
  CHECK_NOTHROW((TemporalAxis{0, 1, 1}).validate());
}

TEST_CASE("Lambertian BRDF is constant and integrates to the albedo") {
  Brdf brdf = Lambertian{0.3};
  Vec3 n = Vec3::UnitZ();
  CHECK(eval_brdf(brdf, n, n, n) == doctest::Approx(0.0954930).epsilon(1e-6));
  CHECK(eval_brdf(Lambertian{0.0}, n, Vec3(1, 0, 1).normalized(), n) == 0.0);
  // Midpoint quadrature over the hemisphere of f cos(theta).
  const int nt = 400, np = 200;
  double sum = 0.0;
  for (int i = 0; i < nt; ++i) {
    double theta = (i + 0.5) / nt * std::numbers::pi / 2;
    for (int j = 0; j < np; ++j) {
      double phi = (j + 0.5) / np * 2 * std::numbers::pi;
      Vec3 wo(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta));
      sum += eval_brdf(brdf, n, wo, n) * std::cos(theta) * std::sin(theta);
    }
  }
  sum *= (std::numbers::pi / 2 / nt) * (2 * std::numbers::pi / np);
  CHECK(sum == doctest::Approx(0.3).epsilon(1e-3));
}

TEST_CASE("Blinn metal lobe peaks at retroreflection along the normal") {
  for (double roughness : {0.05, 0.01}) {
    Brdf brdf = BlinnMetal{roughness, 1.0};
    Vec3 n = Vec3::UnitZ();
    double peak = eval_brdf(brdf, n, n, n);
    CHECK(std::isfinite(peak));
    std::mt19937_64 rng(11);
    for (int i = 0; i < 5000; ++i) {
      Vec3 wo = testing::random_unit(rng);
      if (wo.z() < 0) wo.z() = -wo.z();
      double v = eval_brdf(brdf, n, wo, n);
      CHECK(v >= 0.0);
      CHECK(v <= peak * (1 + 1e-12));
    }
  }
}

TEST_CASE("BRDFs vanish below the horizon and stay finite") {
  Brdf metal = BlinnMetal{};
  Vec3 n = Vec3::UnitZ();
  CHECK(eval_brdf(metal, Vec3(0, 0, -1), n, n) == 0.0);
  CHECK(eval_brdf(metal, n, Vec3(1, 0, -0.1).normalized(), n) == 0.0);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    Vec3 a = testing::random_unit(rng), b = testing::random_unit(rng);
    double v = eval_brdf(metal, a, b, n);
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
    CHECK(eval_brdf(metal, a, b, n) == doctest::Approx(eval_brdf(metal, b, a, n)));
  }
}

TEST_CASE("mesh cache matches recomputation from vertices") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0, 10);
  std::vector<Vec3> v;
  for (int i = 0; i < 60; ++i) v.emplace_back(g(rng), g(rng), g(rng));
  std::vector<Triangle> t;
  for (int i = 0; i + 2 < 60; i += 3) t.push_back({i, i + 1, i + 2});
  TriangleMesh mesh(v, t);
  auto check = [](const TriangleMesh& m) {
    for (int i = 0; i < m.n_triangles(); ++i) {
      auto geo = triangle_geometry(m.vertex(i, 0), m.vertex(i, 1), m.vertex(i, 2));
      CHECK(geo.centroid == m.centroid(i));
      CHECK(geo.area == m.area(i));
      CHECK(geo.normal == m.normal(i));
      Vec3 e1 = m.vertex(i, 1) - m.vertex(i, 0), e2 = m.vertex(i, 2) - m.vertex(i, 0);
      CHECK(m.area(i) == doctest::Approx(0.5 * e1.cross(e2).norm()).epsilon(1e-12));
    }
  };
  check(mesh);
  check(mesh.translated(Vec3(1, -2, 3)));
  check(mesh.with_flipped_normals());
  check(TriangleMesh::merge(mesh, mesh.translated(Vec3(5, 5, 5))));
  CHECK((mesh.with_flipped_normals().normal(0) + mesh.normal(0)).norm() < 1e-15);
}

TEST_CASE("degenerate triangles are flagged") {
  std::vector<Vec3> v{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {2, 0, 0}};
  TriangleMesh mesh(v, {Triangle{0, 1, 2}, Triangle{0, 1, 3}});
  CHECK_FALSE(mesh.degenerate(0));
  CHECK(mesh.degenerate(1));
  CHECK_THROWS(TriangleMesh(v, {Triangle{0, 1, 7}}));
}

TEST_CASE("scene validation") {
  SceneConfig scene = testing::small_scene();
  CHECK_NOTHROW(scene.validate());
  for (const auto& d : scene.detectors) CHECK(d.z() == 0.0);

  SceneConfig off = scene;
  off.lasers[0].z() = 1e-3;
  CHECK_THROWS_AS(off.validate(), ConfigError);
  SceneConfig grid = scene;
  grid.detector_grid = {3, 3};
  CHECK_THROWS_AS(grid.validate(), ConfigError);
  SceneConfig albedo = scene;
  albedo.brdf = Lambertian{1.5};
  CHECK_THROWS_AS(albedo.validate(), ConfigError);
}

TEST_CASE("transient image layout and reductions") {
  TransientImage img(2, 3, 4);
  img.at(1, 2, 3) = 5.0;
  img.at(0, 0, 0) = -1.0;
  CHECK(img.values()[(1 * 3 + 2) * 4 + 3] == 5.0);
  CHECK(img.row(1, 2)[3] == 5.0);
  CHECK(img.sum() == 4.0);
  CHECK(img.squared_norm() == 26.0);
  CHECK(img.max() == 5.0);
  CHECK(img.all_finite());
  img.at(0, 1, 1) = std::nan("");
  CHECK_FALSE(img.all_finite());
}
