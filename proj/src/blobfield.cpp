#include "nlos/blobfield.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nlos {
namespace {

// Cube corner c sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
constexpr std::array<std::array<int, 2>, 12> kEdgeCorners{{
    {0, 1}, {2, 3}, {4, 5}, {6, 7},  // along x
    {0, 2}, {1, 3}, {4, 6}, {5, 7},  // along y
    {0, 4}, {1, 5}, {2, 6}, {3, 7},  // along z
}};

// Face corners in counter-clockwise order seen from outside the cube.
constexpr std::array<std::array<int, 4>, 6> kFaces{{
    {0, 4, 6, 2},  // x = 0
    {1, 3, 7, 5},  // x = 1
    {0, 1, 5, 4},  // y = 0
    {2, 6, 7, 3},  // y = 1
    {0, 2, 3, 1},  // z = 0
    {4, 5, 7, 6},  // z = 1
}};

int edge_between(int a, int b) {
  if (a > b) std::swap(a, b);
  for (int e = 0; e < 12; ++e) {
    if (kEdgeCorners[e][0] == a && kEdgeCorners[e][1] == b) return e;
  }
  throw std::logic_error("corners do not share a cube edge");
}

Vec3 corner_offset(int c) { return Vec3(c & 1, (c >> 1) & 1, (c >> 2) & 1); }

using CaseTriangles = std::vector<std::array<int, 3>>;

// Builds the 256-case triangle table by tracing the iso-contour around the
// cube faces. On each face the contour keeps the inside on its left (seen
// from outside), so contour loops chain head to tail and fan triangulation
// yields consistently wound triangles.
std::array<CaseTriangles, 256> build_case_table() {
  std::array<CaseTriangles, 256> table;
  for (int config = 0; config < 256; ++config) {
    auto inside = [config](int c) { return ((config >> c) & 1) != 0; };
    std::array<int, 12> successor;
    successor.fill(-1);
    for (const auto& face : kFaces) {
      for (int k = 0; k < 4; ++k) {
        int a = face[k], b = face[(k + 1) % 4];
        if (inside(a) || !inside(b)) continue;  // not an entry edge
        int entry = edge_between(a, b);
        for (int step = 1; step < 4; ++step) {
          int c0 = face[(k + step) % 4], c1 = face[(k + step + 1) % 4];
          if (inside(c0) != inside(c1)) {
            successor[edge_between(c0, c1)] = entry;
            break;
          }
        }
      }
    }
    std::array<bool, 12> visited{};
    for (int start = 0; start < 12; ++start) {
      if (successor[start] < 0 || visited[start]) continue;
      std::vector<int> loop;
      for (int e = start; !visited[e]; e = successor[e]) {
        visited[e] = true;
        loop.push_back(e);
      }
      for (std::size_t i = 1; i + 1 < loop.size(); ++i) {
        table[config].push_back({loop[0], loop[i], loop[i + 1]});
      }
    }
  }
  // Orient so normals point away from the inside: with corner 0 alone
  // inside, the normal must point into the cube.
  const auto& probe = table[1].front();
  auto midpoint = [](int e) {
    return Vec3(0.5 * (corner_offset(kEdgeCorners[e][0]) + corner_offset(kEdgeCorners[e][1])));
  };
  Vec3 n = (midpoint(probe[1]) - midpoint(probe[0])).cross(midpoint(probe[2]) - midpoint(probe[0]));
  if (n.dot(Vec3(1, 1, 1)) < 0.0) {
    for (auto& tris : table) {
      for (auto& tri : tris) std::swap(tri[1], tri[2]);
    }
  }
  return table;
}

const std::array<CaseTriangles, 256>& case_table() {
  static const auto table = build_case_table();
  return table;
}

double kernel_factor(double d, double inv_two_var) { return std::exp(-d * d * inv_two_var); }

}  // namespace

std::vector<double> flatten(const BlobSet& blobs) {
  std::vector<double> p;
  p.reserve(blobs.size() * 4);
  for (const auto& b : blobs) {
    p.insert(p.end(), {b.center.x(), b.center.y(), b.center.z(), b.sigma});
  }
  return p;
}

BlobSet unflatten(std::span<const double> params) {
  if (params.size() % 4 != 0) throw std::invalid_argument("blob parameter count not a multiple of 4");
  BlobSet blobs(params.size() / 4);
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    blobs[i].center = Vec3(params[4 * i], params[4 * i + 1], params[4 * i + 2]);
    blobs[i].sigma = params[4 * i + 3];
  }
  return blobs;
}

double eval_field(const BlobSet& blobs, const Vec3& x) {
  double sum = 0.0;
  for (const auto& b : blobs) {
    Vec3 d = x - b.center;
    double cutoff = kKernelCutoff * b.sigma;
    if (d.squaredNorm() >= cutoff * cutoff) continue;
    double w = 0.5 / (b.sigma * b.sigma);
    sum += kernel_factor(d.x(), w) * kernel_factor(d.y(), w) * kernel_factor(d.z(), w);
  }
  return sum;
}

double iso_radius(double sigma, double iso) { return sigma * std::sqrt(-2.0 * std::log(iso)); }

ScalarGrid::ScalarGrid(const Vec3& origin, const Vec3& spacing, std::array<int, 3> dims)
    : origin(origin), spacing(spacing), dims(dims) {
  values.assign(std::size_t(dims[0]) * dims[1] * dims[2], 0.0);
}

namespace {

// Lattice index range [lo, hi] (inclusive) of corners the blobs can reach.
struct CornerRange {
  std::array<int, 3> lo{0, 0, 0};
  std::array<int, 3> hi{-1, -1, -1};
  bool empty() const { return hi[0] < lo[0] || hi[1] < lo[1] || hi[2] < lo[2]; }
};

CornerRange blob_support(const Blob& b, const VolumeSpec& volume) {
  CornerRange r;
  Vec3 h = volume.cell_size();
  for (int a = 0; a < 3; ++a) {
    double reach = kKernelCutoff * b.sigma;
    double lo = (b.center[a] - reach - volume.box.min[a]) / h[a];
    double hi = (b.center[a] + reach - volume.box.min[a]) / h[a];
    r.lo[a] = std::max(0, int(std::ceil(lo)));
    r.hi[a] = std::min(volume.resolution[a], int(std::floor(hi)));
  }
  return r;
}

// Adds the blob kernels into grid, whose sample (0,0,0) is volume corner
// `offset`. Blobs accumulate in set order, matching eval_field.
void splat_blobs(const BlobSet& blobs, const VolumeSpec& volume, const std::array<int, 3>& offset,
                 ScalarGrid& grid) {
  Vec3 h = volume.cell_size();
  std::vector<double> fx, fy, fz;
  for (const auto& b : blobs) {
    CornerRange r = blob_support(b, volume);
    for (int a = 0; a < 3; ++a) {
      r.lo[a] = std::max(r.lo[a], offset[a]);
      r.hi[a] = std::min(r.hi[a], offset[a] + grid.dims[a] - 1);
    }
    if (r.empty()) continue;
    double w = 0.5 / (b.sigma * b.sigma);
    double cutoff2 = kKernelCutoff * b.sigma * kKernelCutoff * b.sigma;
    auto axis_factors = [&](int a, std::vector<double>& f, std::vector<double>& d2) {
      f.resize(r.hi[a] - r.lo[a] + 1);
      d2.resize(f.size());
      for (int i = r.lo[a]; i <= r.hi[a]; ++i) {
        double d = volume.box.min[a] + i * h[a] - b.center[a];
        f[i - r.lo[a]] = kernel_factor(d, w);
        d2[i - r.lo[a]] = d * d;
      }
    };
    std::vector<double> dx2, dy2, dz2;
    axis_factors(0, fx, dx2);
    axis_factors(1, fy, dy2);
    axis_factors(2, fz, dz2);
    for (int k = r.lo[2]; k <= r.hi[2]; ++k) {
      for (int j = r.lo[1]; j <= r.hi[1]; ++j) {
        double fyz = fy[j - r.lo[1]] * fz[k - r.lo[2]];
        double dyz = dy2[j - r.lo[1]] + dz2[k - r.lo[2]];
        for (int i = r.lo[0]; i <= r.hi[0]; ++i) {
          if (dx2[i - r.lo[0]] + dyz >= cutoff2) continue;
          grid.at(i - offset[0], j - offset[1], k - offset[2]) += fx[i - r.lo[0]] * fyz;
        }
      }
    }
  }
}

}  // namespace

ScalarGrid sample_field(const BlobSet& blobs, const VolumeSpec& volume) {
  const auto& res = volume.resolution;
  ScalarGrid grid(volume.box.min, volume.cell_size(), {res[0] + 1, res[1] + 1, res[2] + 1});
  splat_blobs(blobs, volume, {0, 0, 0}, grid);
  return grid;
}

TriangleMesh marching_cubes(const ScalarGrid& grid, double iso) {
  const int nx = grid.dims[0], ny = grid.dims[1], nz = grid.dims[2];
  if (nx < 2 || ny < 2 || nz < 2) return {};
  const auto& table = case_table();

  // One potential vertex per lattice edge, keyed by (lower sample, axis).
  std::vector<int> edge_vertex(grid.values.size() * 3, -1);
  std::vector<Vec3> vertices;
  const std::array<int, 3> limit{nx, ny, nz};
  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        double v0 = grid.at(i, j, k);
        bool in0 = v0 >= iso;
        std::array<int, 3> p{i, j, k};
        for (int axis = 0; axis < 3; ++axis) {
          if (p[axis] + 1 >= limit[axis]) continue;
          std::array<int, 3> q = p;
          ++q[axis];
          double v1 = grid.at(q[0], q[1], q[2]);
          if ((v1 >= iso) == in0) continue;
          double t = (iso - v0) / (v1 - v0);
          Vec3 a = grid.position(i, j, k);
          Vec3 b = grid.position(q[0], q[1], q[2]);
          edge_vertex[grid.index(i, j, k) * 3 + axis] = int(vertices.size());
          vertices.push_back(a + t * (b - a));
        }
      }
    }
  }
  if (vertices.empty()) return {};

  std::vector<Triangle> triangles;
  for (int k = 0; k + 1 < nz; ++k) {
    for (int j = 0; j + 1 < ny; ++j) {
      for (int i = 0; i + 1 < nx; ++i) {
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          if (grid.at(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) >= iso) {
            config |= 1 << c;
          }
        }
        if (config == 0 || config == 255) continue;
        for (const auto& tri : table[config]) {
          Triangle out;
          for (int v = 0; v < 3; ++v) {
            int a = kEdgeCorners[tri[v]][0];
            int b = kEdgeCorners[tri[v]][1];
            int axis = (a ^ b) == 1 ? 0 : ((a ^ b) == 2 ? 1 : 2);
            std::size_t base = grid.index(i + (a & 1), j + ((a >> 1) & 1), k + ((a >> 2) & 1));
            out[v] = edge_vertex[base * 3 + axis];
          }
          triangles.push_back(out);
        }
      }
    }
  }
  return {std::move(vertices), std::move(triangles)};
}

TriangleMesh extract_mesh(const BlobSet& blobs, const VolumeSpec& volume, double iso) {
  if (blobs.empty()) return {};
  // Only the union of kernel supports can reach iso > 0; march that corner
  // box and leave the zero field outside it alone.
  CornerRange active;
  bool any = false;
  for (const auto& b : blobs) {
    CornerRange r = blob_support(b, volume);
    if (r.empty()) continue;
    for (int a = 0; a < 3; ++a) {
      active.lo[a] = any ? std::min(active.lo[a], r.lo[a]) : r.lo[a];
      active.hi[a] = any ? std::max(active.hi[a], r.hi[a]) : r.hi[a];
    }
    any = true;
  }
  if (!any) return {};
  std::array<int, 3> dims;
  Vec3 h = volume.cell_size();
  for (int a = 0; a < 3; ++a) {
    active.lo[a] = std::max(0, active.lo[a] - 1);
    active.hi[a] = std::min(volume.resolution[a], active.hi[a] + 1);
    dims[a] = active.hi[a] - active.lo[a] + 1;
  }
  Vec3 origin = volume.box.min + h.cwiseProduct(Vec3(active.lo[0], active.lo[1], active.lo[2]));
  ScalarGrid grid(origin, h, dims);
  splat_blobs(blobs, volume, active.lo, grid);
  return marching_cubes(grid, iso);
}

}  // namespace nlos
