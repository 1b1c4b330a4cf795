#include "nlos/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace nlos {

// ---------------------------------------------------------------------------
// BVH

Bvh::Bvh(const TriangleMesh& mesh) {
  std::vector<Vec3> centroids;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    if (mesh.degenerate(t)) continue;
    const Vec3& a = mesh.vertex(t, 0);
    tris_.push_back({a, mesh.vertex(t, 1) - a, mesh.vertex(t, 2) - a, t});
    centroids.push_back(mesh.centroid(t));
  }
  if (tris_.empty()) return;
  nodes_.reserve(tris_.size());
  build(0, int(tris_.size()), centroids);
}

int Bvh::build(int begin, int end, std::vector<Vec3>& centroids) {
  constexpr int kLeafSize = 4;
  int index = int(nodes_.size());
  nodes_.emplace_back();
  Box bounds = Box::empty();
  Box centroid_bounds = Box::empty();
  for (int i = begin; i < end; ++i) {
    const Tri& t = tris_[i];
    bounds.extend(t.v0);
    bounds.extend(t.v0 + t.e1);
    bounds.extend(t.v0 + t.e2);
    centroid_bounds.extend(centroids[i]);
  }
  nodes_[index].lo = bounds.min;
  nodes_[index].hi = bounds.max;
  if (end - begin <= kLeafSize) {
    nodes_[index].first = begin;
    nodes_[index].count = end - begin;
    return index;
  }
  int axis = 0;
  centroid_bounds.size().maxCoeff(&axis);
  int mid = (begin + end) / 2;
  // Sort a permutation so triangles and their centroids move together.
  std::vector<int> order(end - begin);
  std::iota(order.begin(), order.end(), begin);
  std::nth_element(order.begin(), order.begin() + (mid - begin), order.end(),
                   [&](int a, int b) {
                     if (centroids[a][axis] != centroids[b][axis]) {
                       return centroids[a][axis] < centroids[b][axis];
                     }
                     return tris_[a].id < tris_[b].id;
                   });
  std::vector<Tri> tris;
  std::vector<Vec3> cents;
  tris.reserve(order.size());
  cents.reserve(order.size());
  for (int i : order) {
    tris.push_back(tris_[i]);
    cents.push_back(centroids[i]);
  }
  std::copy(tris.begin(), tris.end(), tris_.begin() + begin);
  std::copy(cents.begin(), cents.end(), centroids.begin() + begin);

  build(begin, mid, centroids);
  int right = build(mid, end, centroids);
  nodes_[index].first = right;
  nodes_[index].count = 0;
  return index;
}

bool Bvh::occluded(const Vec3& from, const Vec3& to, int exclude) const {
  if (nodes_.empty()) return false;
  Vec3 dir = to - from;
  const double tmax = 1.0;
  Vec3 inv;
  for (int a = 0; a < 3; ++a) inv[a] = dir[a] != 0.0 ? 1.0 / dir[a] : 1e300;

  int stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    double t0 = 0.0, t1 = tmax;
    bool miss = false;
    for (int a = 0; a < 3; ++a) {
      double ta = (node.lo[a] - from[a]) * inv[a];
      double tb = (node.hi[a] - from[a]) * inv[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) {
        miss = true;
        break;
      }
    }
    if (miss) continue;
    if (node.count == 0) {
      int left = int(&node - nodes_.data()) + 1;
      stack[top++] = node.first;
      stack[top++] = left;
      continue;
    }
    for (int i = node.first; i < node.first + node.count; ++i) {
      const Tri& tri = tris_[i];
      if (tri.id == exclude) continue;
      // Moller-Trumbore, hit accepted strictly inside (0, 1).
      Vec3 p = dir.cross(tri.e2);
      double det = tri.e1.dot(p);
      if (det == 0.0) continue;
      double inv_det = 1.0 / det;
      Vec3 s = from - tri.v0;
      double u = s.dot(p) * inv_det;
      if (u < 0.0 || u > 1.0) continue;
      Vec3 q = s.cross(tri.e1);
      double v = dir.dot(q) * inv_det;
      if (v < 0.0 || u + v > 1.0) continue;
      double t = tri.e2.dot(q) * inv_det;
      if (t > 0.0 && t < tmax) return true;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Shading terms

double coupling(const Vec3& s1, const Vec3& n1, const Vec3& s2, const Vec3& n2, bool visible) {
  Vec3 d = s2 - s1;
  double r2 = d.squaredNorm();
  if (r2 == 0.0) throw std::invalid_argument("coupling: coincident surface points");
  if (!visible) return 0.0;
  // |cos t1| |cos t2| / r^2 with both cosines taken against the unnormalised d.
  return std::abs(n1.dot(d)) * std::abs(n2.dot(d)) / (r2 * r2);
}

RenderContext::RenderContext(const SceneConfig& scene, const TriangleMesh& mesh, bool shadows)
    : scene(scene), mesh(mesh), shadows(shadows) {
  if (shadows) bvh = Bvh(mesh);
  epsilon = 1e-4 * scene_bounds(scene, &mesh).diagonal();
}

bool RenderContext::visible(const Vec3& from, const Vec3& to, int exclude) const {
  if (!shadows) return true;
  Vec3 d = to - from;
  double len = d.norm();
  if (len <= 2.0 * epsilon) return true;
  Vec3 u = d / len;
  return !bvh.occluded(from + epsilon * u, to - epsilon * u, exclude);
}

namespace {

// Wall-side factor of the coupling term for a surface element at p with
// normal n, seen from wall point w: zero when the element faces away from w
// or sits behind the wall, |cos_w| |cos_p| / r^2 otherwise.
struct WallLink {
  double g = 0.0;
  Vec3 dir = Vec3::Zero();  // unit, from p toward w
  double dist = 0.0;
};

WallLink wall_link(const Vec3& w, const Vec3& wall_normal, const Vec3& p, const Vec3& n) {
  WallLink link;
  Vec3 d = w - p;
  double r2 = d.squaredNorm();
  if (r2 == 0.0) return link;
  link.dist = std::sqrt(r2);
  link.dir = d / link.dist;
  double cos_p = n.dot(link.dir);
  double cos_w = -wall_normal.dot(link.dir);
  if (cos_p <= 0.0 || cos_w <= 0.0) return link;
  link.g = cos_p * cos_w / r2;
  return link;
}

}  // namespace

TriangleContribution triangle_irradiance(const RenderContext& ctx, int laser, int detector,
                                         int tri) {
  const auto& mesh = ctx.mesh;
  const auto& scene = ctx.scene;
  const Vec3& l = scene.lasers.at(laser);
  const Vec3& c = scene.detectors.at(detector);
  TriangleContribution out;
  for (int v = 0; v < 3; ++v) {
    const Vec3& p = mesh.vertex(tri, v);
    out.tau[v] = (l - p).norm() + (p - c).norm();
  }
  if (mesh.degenerate(tri)) return out;

  const Vec3& p = mesh.centroid(tri);
  const Vec3& n = mesh.normal(tri);
  const Vec3& nw = scene.wall.normal;
  WallLink in = wall_link(l, nw, p, n);
  if (in.g == 0.0) return out;
  if (!ctx.visible(l, p, tri)) return out;
  WallLink back = wall_link(c, nw, p, n);
  if (back.g == 0.0) return out;
  if (!ctx.visible(p, c, tri)) return out;
  out.alpha = eval_brdf(scene.brdf, in.dir, back.dir, n) * back.g * in.g * mesh.area(tri);
  return out;
}

namespace {

// Triangular density with support [a, c] and mode b, all in bin units
// relative to t0, integrated over the unit bins of hist[0, n). Consecutive
// CDF values telescope, so an interior footprint deposits exactly alpha.
inline void deposit_triangular(double* hist, int n, double alpha, double a, double b, double c) {
  if (c < 0.0 || a >= double(n)) return;
  const int ka = int(std::floor(a));
  const int kc = int(std::floor(c));
  if (ka == kc) {
    hist[ka] += alpha;
    return;
  }
  const double span = c - a;
  const double rise = alpha / (span * (b - a));
  const double fall = alpha / (span * (c - b));
  // Mass below x, valid for a < x <= c.
  auto cdf = [&](double x) {
    return x <= b ? (x - a) * (x - a) * rise : alpha - (c - x) * (c - x) * fall;
  };
  int k = ka;
  double lower = 0.0;
  if (k < 0) {
    k = 0;
    lower = cdf(0.0);
  }
  const int last = std::min(kc, n - 1);
  for (; k <= last; ++k) {
    double upper = k == kc ? alpha : cdf(double(k + 1));
    hist[k] += upper - lower;
    lower = upper;
  }
}

inline void sort3(double& x, double& y, double& z) {
  if (x > y) std::swap(x, y);
  if (y > z) std::swap(y, z);
  if (x > y) std::swap(x, y);
}

}  // namespace

void deposit_point(std::span<double> hist, double alpha, double tau, const TemporalAxis& axis) {
  if (auto k = axis.bin_index(tau)) hist[*k] += alpha;
}

void deposit_filtered(std::span<double> hist, const TriangleContribution& contribution,
                      const TemporalAxis& axis) {
  double alpha = contribution.alpha;
  if (alpha == 0.0) return;
  double a = contribution.tau[0], b = contribution.tau[1], c = contribution.tau[2];
  sort3(a, b, c);
  if (a == c) {
    deposit_point(hist, alpha, a, axis);
    return;
  }
  const double inv_dt = 1.0 / axis.dt;
  deposit_triangular(hist.data(), axis.n_bins, alpha, (a - axis.t0) * inv_dt,
                     (b - axis.t0) * inv_dt, (c - axis.t0) * inv_dt);
}

namespace {

// A shading point: a triangle, or a piece of one, evaluated at its centroid.
struct Patch {
  Vec3 center;
  Vec3 normal;
  double area;
  int parent;
};

std::vector<Patch> subdivide(const TriangleMesh& mesh, int level) {
  std::vector<Patch> patches;
  const int n = 1 << level;
  for (int t = 0; t < mesh.n_triangles(); ++t) {
    if (mesh.degenerate(t)) continue;
    if (level == 0) {
      patches.push_back({mesh.centroid(t), mesh.normal(t), mesh.area(t), t});
      continue;
    }
    const Vec3& a = mesh.vertex(t, 0);
    Vec3 u = (mesh.vertex(t, 1) - a) / n;
    Vec3 v = (mesh.vertex(t, 2) - a) / n;
    double area = mesh.area(t) / (double(n) * n);
    auto at = [&](double i, double j) { return Vec3(a + i * u + j * v); };
    for (int i = 0; i < n; ++i) {
      for (int j = 0; i + j < n; ++j) {
        patches.push_back({at(i + 1.0 / 3.0, j + 1.0 / 3.0), mesh.normal(t), area, t});
        if (i + j + 2 <= n) {
          patches.push_back({at(i + 2.0 / 3.0, j + 2.0 / 3.0), mesh.normal(t), area, t});
        }
      }
    }
  }
  return patches;
}

// Core loop shared by the fast and the reference renderer. With `filter`
// the patches must be the mesh triangles themselves (one per triangle, in
// order) and vertex path lengths drive the temporal filter; otherwise each
// patch lands in the bin of its centroid path length.
TransientImage render_patches(const RenderContext& ctx, const std::vector<Patch>& patches,
                              bool filter) {
  const auto& scene = ctx.scene;
  const auto& mesh = ctx.mesh;
  const int nl = scene.n_lasers(), nd = scene.n_detectors();
  TransientImage image(nl, nd, scene.axis.n_bins);
  const int np = int(patches.size());
  if (np == 0) return image;
  const int nv = mesh.n_vertices();
  const Vec3& nw = scene.wall.normal;
  const bool lambertian = std::holds_alternative<Lambertian>(scene.brdf);
  const double t0 = scene.axis.t0, inv_dt = 1.0 / scene.axis.dt;
  const int n_bins = scene.axis.n_bins;
  const double lambert_f =
      lambertian ? eval_brdf(scene.brdf, Vec3::UnitZ(), Vec3::UnitZ(), Vec3::UnitZ()) : 0.0;

  // Laser-side terms, shared by every detector.
  std::vector<WallLink> laser_links(std::size_t(nl) * np);
  std::vector<double> laser_vertex_dist(filter ? std::size_t(nl) * nv : 0);
  std::vector<char> lit(np, 0);
#pragma omp parallel for schedule(dynamic, 1)
  for (int l = 0; l < nl; ++l) {
    const Vec3& lp = scene.lasers[l];
    for (int i = 0; i < np; ++i) {
      const Patch& patch = patches[i];
      WallLink link = wall_link(lp, nw, patch.center, patch.normal);
      if (link.g != 0.0 && !ctx.visible(lp, patch.center, patch.parent)) link.g = 0.0;
      laser_links[std::size_t(l) * np + i] = link;
    }
    if (filter) {
      for (int v = 0; v < nv; ++v) {
        laser_vertex_dist[std::size_t(l) * nv + v] = (lp - mesh.vertices()[v]).norm();
      }
    }
  }
  for (int l = 0; l < nl; ++l) {
    for (int i = 0; i < np; ++i) {
      if (laser_links[std::size_t(l) * np + i].g != 0.0) lit[i] = 1;
    }
  }

#pragma omp parallel
  {
    std::vector<WallLink> det_links(np);
    std::vector<double> det_vertex_dist(filter ? nv : 0);
#pragma omp for schedule(dynamic, 1)
    for (int d = 0; d < nd; ++d) {
      const Vec3& dp = scene.detectors[d];
      for (int i = 0; i < np; ++i) {
        const Patch& patch = patches[i];
        WallLink link;
        if (lit[i]) {
          link = wall_link(dp, nw, patch.center, patch.normal);
          if (link.g != 0.0 && !ctx.visible(patch.center, dp, patch.parent)) link.g = 0.0;
        }
        det_links[i] = link;
      }
      if (filter) {
        for (int v = 0; v < nv; ++v) det_vertex_dist[v] = (mesh.vertices()[v] - dp).norm();
      }
      for (int l = 0; l < nl; ++l) {
        auto row = image.row(l, d);
        const WallLink* in_links = laser_links.data() + std::size_t(l) * np;
        const double* lvd = filter ? laser_vertex_dist.data() + std::size_t(l) * nv : nullptr;
        for (int i = 0; i < np; ++i) {
          const WallLink& in = in_links[i];
          const WallLink& back = det_links[i];
          if (in.g == 0.0 || back.g == 0.0) continue;
          const Patch& patch = patches[i];
          double f = lambertian ? lambert_f : eval_brdf(scene.brdf, in.dir, back.dir, patch.normal);
          double alpha = f * back.g * in.g * patch.area;
          if (filter) {
            const Triangle& tri = mesh.triangles()[patch.parent];
            double a = lvd[tri[0]] + det_vertex_dist[tri[0]];
            double b = lvd[tri[1]] + det_vertex_dist[tri[1]];
            double c = lvd[tri[2]] + det_vertex_dist[tri[2]];
            sort3(a, b, c);
            if (a == c) {
              deposit_point(row, alpha, a, scene.axis);
            } else {
              deposit_triangular(row.data(), n_bins, alpha, (a - t0) * inv_dt, (b - t0) * inv_dt,
                                 (c - t0) * inv_dt);
            }
          } else {
            deposit_point(row, alpha, in.dist + back.dist, scene.axis);
          }
        }
      }
    }
  }
  return image;
}

}  // namespace

namespace {

// Extended detectors are rendered as point samples and averaged back.
TransientImage render_extended(const SceneConfig& scene, const TriangleMesh& mesh, int level,
                               bool filter, bool shadows) {
  if (scene.detector_footprint.empty()) {
    RenderContext ctx(scene, mesh, shadows);
    return render_patches(ctx, subdivide(mesh, level), filter);
  }
  const int nd = scene.n_detectors();
  const int nf = int(scene.detector_footprint.size());
  SceneConfig points = scene;
  points.detector_footprint.clear();
  points.detector_grid = {0, 0};
  points.detectors.clear();
  points.detectors.reserve(std::size_t(nd) * nf);
  for (const Vec3& d : scene.detectors) {
    for (const Vec3& o : scene.detector_footprint) points.detectors.push_back(d + o);
  }
  RenderContext ctx(points, mesh, shadows);
  TransientImage fine = render_patches(ctx, subdivide(mesh, level), filter);
  TransientImage image(scene.n_lasers(), nd, scene.axis.n_bins);
  const double inv = 1.0 / nf;
  for (int l = 0; l < scene.n_lasers(); ++l) {
    for (int d = 0; d < nd; ++d) {
      auto dst = image.row(l, d);
      for (int f = 0; f < nf; ++f) {
        auto src = fine.row(l, d * nf + f);
        for (int k = 0; k < scene.axis.n_bins; ++k) dst[k] += src[k] * inv;
      }
    }
  }
  return image;
}

}  // namespace

TransientImage render(const SceneConfig& scene, const TriangleMesh& mesh,
                      const RenderOptions& options) {
  if (mesh.empty()) return TransientImage(scene.n_lasers(), scene.n_detectors(), scene.axis.n_bins);
  return render_extended(scene, mesh, 0, options.filter, options.shadows);
}

TransientImage reference_render(const SceneConfig& scene, const TriangleMesh& mesh, int level) {
  if (level < 0) throw std::invalid_argument("reference_render: subdivision level must be >= 0");
  if (mesh.empty()) return TransientImage(scene.n_lasers(), scene.n_detectors(), scene.axis.n_bins);
  return render_extended(scene, mesh, level, false, true);
}

}  // namespace nlos
