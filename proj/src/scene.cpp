#include "nlos/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace nlos {

std::optional<int> TemporalAxis::bin_index(double tau) const {
  if (!std::isfinite(tau) || tau < t0) return std::nullopt;
  double k = std::floor((tau - t0) / dt);
  if (k >= n_bins + 1.0) return std::nullopt;
  int bin = int(k);
  // The division can land one bin off near an edge; settle against the
  // same edge formula bin_start() uses.
  if (bin > 0 && tau < bin_start(bin)) --bin;
  if (tau >= bin_start(bin + 1)) ++bin;
  if (bin < 0 || bin >= n_bins) return std::nullopt;
  return bin;
}

void TemporalAxis::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("temporal axis: dt must be positive");
  if (n_bins < 1) throw ConfigError("temporal axis: n_bins must be at least 1");
  if (!std::isfinite(t0)) throw ConfigError("temporal axis: t0 must be finite");
}

Box Box::empty() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return {Vec3::Constant(inf), Vec3::Constant(-inf)};
}

void VolumeSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (resolution[a] < 2) throw ConfigError("volume: resolution must be at least 2 per axis");
    if (!(box.max[a] > box.min[a])) throw ConfigError("volume: box has empty extent");
  }
}

double eval_brdf(const Brdf& brdf, const Vec3& wi, const Vec3& wo, const Vec3& n) {
  if (const auto* lambert = std::get_if<Lambertian>(&brdf)) {
    return lambert->albedo * std::numbers::inv_pi;
  }
  const auto& metal = std::get<BlinnMetal>(brdf);
  double cos_i = n.dot(wi);
  double cos_o = n.dot(wo);
  if (cos_i <= 0.0 || cos_o <= 0.0) return 0.0;
  Vec3 wh = wi + wo;
  double len = wh.norm();
  if (len == 0.0) return 0.0;
  wh /= len;
  double cos_h = std::max(0.0, n.dot(wh));
  double o_dot_h = wo.dot(wh);
  double exponent = 1.0 / metal.roughness;
  double distribution = (exponent + 2.0) * 0.5 * std::numbers::inv_pi * std::pow(cos_h, exponent);
  double masking = std::min({1.0, 2.0 * cos_h * cos_o / o_dot_h, 2.0 * cos_h * cos_i / o_dot_h});
  return metal.reflectance * distribution * masking / (4.0 * cos_i * cos_o);
}

std::string describe(const Brdf& brdf) {
  std::ostringstream out;
  out.precision(17);
  if (const auto* lambert = std::get_if<Lambertian>(&brdf)) {
    out << "lambertian " << lambert->albedo;
  } else {
    const auto& metal = std::get<BlinnMetal>(brdf);
    out << "blinn " << metal.roughness << ' ' << metal.reflectance;
  }
  return out.str();
}

void SceneConfig::validate() const {
  axis.validate();
  volume.validate();
  double nlen = wall.normal.norm();
  if (std::abs(nlen - 1.0) > 1e-9) throw ConfigError("wall normal must be unit length");
  if (lasers.empty()) throw ConfigError("scene needs at least one laser spot");
  if (detectors.empty()) throw ConfigError("scene needs at least one detector");
  for (const auto& p : lasers) {
    if (std::abs(wall.signed_distance(p)) >= 1e-6) throw ConfigError("laser spot off the wall plane");
  }
  for (const auto& p : detectors) {
    if (std::abs(wall.signed_distance(p)) >= 1e-6) throw ConfigError("detector off the wall plane");
  }
  for (const auto& o : detector_footprint) {
    if (std::abs(wall.normal.dot(o)) >= 1e-6) throw ConfigError("detector footprint leaves the wall plane");
  }
  if (detector_grid[0] != 0 || detector_grid[1] != 0) {
    if (detector_grid[0] * detector_grid[1] != n_detectors()) {
      throw ConfigError("detector grid shape does not match detector count");
    }
  }
  if (const auto* lambert = std::get_if<Lambertian>(&brdf)) {
    if (lambert->albedo < 0.0 || lambert->albedo > 1.0) throw ConfigError("albedo outside [0, 1]");
  } else {
    const auto& metal = std::get<BlinnMetal>(brdf);
    if (!(metal.roughness > 0.0)) throw ConfigError("blinn roughness must be positive");
    if (metal.reflectance < 0.0) throw ConfigError("blinn reflectance must be nonnegative");
  }
}

TransientImage::TransientImage(int n_lasers, int n_detectors, int n_bins)
    : n_lasers_(n_lasers), n_detectors_(n_detectors), n_bins_(n_bins) {
  if (n_lasers < 0 || n_detectors < 0 || n_bins < 0) {
    throw DimensionMismatch("transient image dimensions must be nonnegative");
  }
  data_.assign(std::size_t(n_lasers) * n_detectors * n_bins, 0.0);
}

bool TransientImage::compatible_with(const SceneConfig& scene) const {
  return n_lasers_ == scene.n_lasers() && n_detectors_ == scene.n_detectors() &&
         n_bins_ == scene.axis.n_bins;
}

double TransientImage::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

double TransientImage::squared_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

double TransientImage::max() const {
  if (data_.empty()) return 0.0;
  return *std::max_element(data_.begin(), data_.end());
}

bool TransientImage::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

TriangleGeometry triangle_geometry(const Vec3& a, const Vec3& b, const Vec3& c) {
  Vec3 cross = (b - a).cross(c - a);
  double len = cross.norm();
  TriangleGeometry g;
  g.centroid = (a + b + c) / 3.0;
  g.area = 0.5 * len;
  g.normal = len > 0.0 ? Vec3(cross / len) : Vec3::Zero();
  return g;
}

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
  const int nv = int(vertices_.size());
  for (const auto& tri : triangles_) {
    for (int idx : tri) {
      if (idx < 0 || idx >= nv) throw std::out_of_range("triangle index out of range");
    }
  }
  const std::size_t nt = triangles_.size();
  centroids_.resize(nt);
  areas_.resize(nt);
  normals_.resize(nt);
  degenerate_.assign(nt, false);
  double total = 0.0;
  for (std::size_t t = 0; t < nt; ++t) {
    auto g = triangle_geometry(vertices_[triangles_[t][0]], vertices_[triangles_[t][1]],
                               vertices_[triangles_[t][2]]);
    centroids_[t] = g.centroid;
    areas_[t] = g.area;
    normals_[t] = g.normal;
    total += g.area;
  }
  if (nt > 0) {
    double cutoff = 1e-12 * total / double(nt);
    for (std::size_t t = 0; t < nt; ++t) {
      degenerate_[t] = !(areas_[t] >= cutoff) || areas_[t] == 0.0;
    }
  }
}

double TriangleMesh::total_area() const {
  double s = 0.0;
  for (double a : areas_) s += a;
  return s;
}

Box TriangleMesh::bounds() const {
  Box b = Box::empty();
  for (const auto& v : vertices_) b.extend(v);
  return b;
}

Vec3 TriangleMesh::area_weighted_centroid() const {
  Vec3 acc = Vec3::Zero();
  double total = 0.0;
  for (int t = 0; t < n_triangles(); ++t) {
    acc += areas_[t] * centroids_[t];
    total += areas_[t];
  }
  return total > 0.0 ? Vec3(acc / total) : Vec3::Zero();
}

TriangleMesh TriangleMesh::translated(const Vec3& offset) const {
  auto moved = vertices_;
  for (auto& v : moved) v += offset;
  return {std::move(moved), triangles_};
}

TriangleMesh TriangleMesh::with_flipped_normals() const {
  auto flipped = triangles_;
  for (auto& tri : flipped) std::swap(tri[1], tri[2]);
  return {vertices_, std::move(flipped)};
}

TriangleMesh TriangleMesh::merge(const TriangleMesh& a, const TriangleMesh& b) {
  auto vertices = a.vertices_;
  vertices.insert(vertices.end(), b.vertices_.begin(), b.vertices_.end());
  auto triangles = a.triangles_;
  const int offset = a.n_vertices();
  for (auto tri : b.triangles_) {
    for (int& idx : tri) idx += offset;
    triangles.push_back(tri);
  }
  return {std::move(vertices), std::move(triangles)};
}

Box scene_bounds(const SceneConfig& scene, const TriangleMesh* mesh) {
  Box b = Box::empty();
  for (const auto& p : scene.lasers) b.extend(p);
  for (const auto& p : scene.detectors) b.extend(p);
  if (mesh) {
    for (const auto& v : mesh->vertices()) b.extend(v);
  }
  return b;
}

}  // namespace nlos
