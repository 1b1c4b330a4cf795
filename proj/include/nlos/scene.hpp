#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace nlos {

using Vec3 = Eigen::Vector3d;

// Error categories surfaced by the command line front end.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Histogram time axis. Bin k covers [t0 + k*dt, t0 + (k+1)*dt).
/// Time and optical path length share one unit.
struct TemporalAxis {
  double t0 = 0.0;
  double dt = 1.0;
  int n_bins = 1;

  std::optional<int> bin_index(double tau) const;
  double bin_start(int k) const { return t0 + k * dt; }
  double end() const { return t0 + n_bins * dt; }
  void validate() const;
};

struct Plane {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();

  double signed_distance(const Vec3& x) const { return normal.dot(x - point); }
};

struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Vec3 size() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
  double diagonal() const { return size().norm(); }
  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  static Box empty();
};

/// Axis-aligned reconstruction volume split into res[0] x res[1] x res[2]
/// cells. Blob fields are sampled at cell corners, densities at cell centers.
struct VolumeSpec {
  Box box{Vec3(-40, -40, 5), Vec3(40, 40, 85)};
  std::array<int, 3> resolution{128, 128, 128};

  Vec3 cell_size() const {
    return box.size().cwiseQuotient(Vec3(resolution[0], resolution[1], resolution[2]));
  }
  std::size_t cell_count() const {
    return std::size_t(resolution[0]) * resolution[1] * resolution[2];
  }
  Vec3 cell_center(int i, int j, int k) const {
    return box.min + cell_size().cwiseProduct(Vec3(i + 0.5, j + 0.5, k + 0.5));
  }
  void validate() const;
};

struct Lambertian {
  double albedo = 0.3;
};

/// Torrance-Sparrow microfacet lobe with a Blinn distribution of exponent
/// 1/roughness. The conductor Fresnel term is folded into one scalar.
struct BlinnMetal {
  double roughness = 0.05;
  double reflectance = 1.0;
};

using Brdf = std::variant<Lambertian, BlinnMetal>;

/// wi points from the surface toward the light, wo toward the detector.
double eval_brdf(const Brdf& brdf, const Vec3& wi, const Vec3& wo, const Vec3& n);

std::string describe(const Brdf& brdf);

struct SceneConfig {
  Plane wall;
  std::vector<Vec3> detectors;
  // Row-major detector raster (x fastest). {0, 0} for unstructured detectors.
  std::array<int, 2> detector_grid{0, 0};
  // In-plane offsets sampled by every detector, whose response is their
  // average. Empty for point detectors.
  std::vector<Vec3> detector_footprint;
  std::vector<Vec3> lasers;
  TemporalAxis axis;
  Brdf brdf = Lambertian{};
  VolumeSpec volume;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
  int n_lasers() const { return int(lasers.size()); }
  int n_detectors() const { return int(detectors.size()); }
};

/// Space-time response: one histogram per (laser, detector) pair, stored
/// row-major in (laser, detector, bin) order.
class TransientImage {
 public:
  TransientImage() = default;
  TransientImage(int n_lasers, int n_detectors, int n_bins);

  int n_lasers() const { return n_lasers_; }
  int n_detectors() const { return n_detectors_; }
  int n_bins() const { return n_bins_; }
  int n_rows() const { return n_lasers_ * n_detectors_; }
  std::size_t size() const { return data_.size(); }

  double& at(int l, int d, int k) { return data_[index(l, d, k)]; }
  double at(int l, int d, int k) const { return data_[index(l, d, k)]; }

  std::span<double> row(int l, int d) {
    return {data_.data() + index(l, d, 0), std::size_t(n_bins_)};
  }
  std::span<const double> row(int l, int d) const {
    return {data_.data() + index(l, d, 0), std::size_t(n_bins_)};
  }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const TransientImage& o) const {
    return n_lasers_ == o.n_lasers_ && n_detectors_ == o.n_detectors_ && n_bins_ == o.n_bins_;
  }
  bool compatible_with(const SceneConfig& scene) const;

  double sum() const;
  double squared_norm() const;
  double max() const;
  bool all_finite() const;

 private:
  std::size_t index(int l, int d, int k) const {
    return (std::size_t(l) * n_detectors_ + d) * n_bins_ + k;
  }

  int n_lasers_ = 0;
  int n_detectors_ = 0;
  int n_bins_ = 0;
  std::vector<double> data_;
};

using Triangle = std::array<int, 3>;

/// Indexed triangle mesh with an immutable per-triangle cache.
class TriangleMesh {
 public:
  TriangleMesh() = default;
  TriangleMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  int n_triangles() const { return int(triangles_.size()); }
  int n_vertices() const { return int(vertices_.size()); }
  bool empty() const { return triangles_.empty(); }

  const Vec3& centroid(int t) const { return centroids_[t]; }
  double area(int t) const { return areas_[t]; }
  const Vec3& normal(int t) const { return normals_[t]; }
  // Area below 1e-12 of the mean area; consumers skip these.
  bool degenerate(int t) const { return degenerate_[t]; }
  const Vec3& vertex(int t, int corner) const { return vertices_[triangles_[t][corner]]; }

  double total_area() const;
  Box bounds() const;
  Vec3 area_weighted_centroid() const;

  TriangleMesh translated(const Vec3& offset) const;
  TriangleMesh with_flipped_normals() const;
  static TriangleMesh merge(const TriangleMesh& a, const TriangleMesh& b);

 private:
  std::vector<Vec3> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<Vec3> centroids_;
  std::vector<double> areas_;
  std::vector<Vec3> normals_;
  std::vector<bool> degenerate_;
};

/// Per-triangle derived quantities, exposed for cache coherence checks.
struct TriangleGeometry {
  Vec3 centroid;
  double area;
  Vec3 normal;
};
TriangleGeometry triangle_geometry(const Vec3& a, const Vec3& b, const Vec3& c);

/// Bounding box around lasers, detectors and an optional mesh.
Box scene_bounds(const SceneConfig& scene, const TriangleMesh* mesh = nullptr);

}  // namespace nlos
