#pragma once

#include <cmath>
#include <random>

#include "nlos/datasets.hpp"
#include "nlos/scene.hpp"

namespace nlos::testing {

// Small version of the standard setup for fast unit tests.
inline SceneConfig small_scene(int n_lasers = 2, int n = 4, int bins = 160, double dt = 0.8) {
  SceneConfig scene = standard_scene_config(n_lasers, n, n, bins, 80.0, dt);
  scene.volume.resolution = {40, 40, 40};
  return scene;
}

// Triangle with unit area, centroid at `center` and normal -z.
inline TriangleMesh unit_triangle(const Vec3& center) {
  const double s = std::sqrt(2.0);
  Vec3 a(0, 0, 0), b(0, s, 0), c(s, 0, 0);
  Vec3 shift = center - (a + b + c) / 3.0;
  return TriangleMesh({a + shift, b + shift, c + shift}, {Triangle{0, 1, 2}});
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vec3 v(g(rng), g(rng), g(rng));
  return v.normalized();
}

}  // namespace nlos::testing
