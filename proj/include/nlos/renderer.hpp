#pragma once

#include <array>
#include <span>
#include <vector>

#include "nlos/scene.hpp"

namespace nlos {

/// Bounding volume hierarchy over mesh triangles for any-hit segment queries.
/// Immutable after construction; concurrent queries are safe.
class Bvh {
 public:
  Bvh() = default;
  explicit Bvh(const TriangleMesh& mesh);

  /// True iff a non-degenerate triangle other than `exclude` crosses the
  /// open segment (from, to).
  bool occluded(const Vec3& from, const Vec3& to, int exclude = -1) const;

  bool empty() const { return nodes_.empty(); }

 private:
  struct Node {
    Vec3 lo, hi;
    int first = 0;  // first triangle slot (leaf) or left child (inner)
    int count = 0;  // triangles in a leaf, 0 for inner nodes
  };
  struct Tri {
    Vec3 v0, e1, e2;
    int id;
  };

  int build(int begin, int end, std::vector<Vec3>& centroids);

  std::vector<Node> nodes_;
  std::vector<Tri> tris_;
};

struct RenderOptions {
  bool filter = true;
  bool shadows = true;
};

/// Geometric coupling V |cos t1| |cos t2| / |s1 - s2|^2 between two oriented
/// surface points. Throws std::invalid_argument for coincident points.
double coupling(const Vec3& s1, const Vec3& n1, const Vec3& s2, const Vec3& n2, bool visible);

/// Shared read-only state for evaluating one mesh inside one scene.
struct RenderContext {
  RenderContext(const SceneConfig& scene, const TriangleMesh& mesh, bool shadows = true);

  const SceneConfig& scene;
  const TriangleMesh& mesh;
  Bvh bvh;
  bool shadows;
  // Shadow segments are pulled in by this much at both ends.
  double epsilon;

  bool visible(const Vec3& from, const Vec3& to, int exclude) const;
};

struct TriangleContribution {
  double alpha = 0.0;
  std::array<double, 3> tau{0.0, 0.0, 0.0};
};

/// Radiance one triangle sends from a laser spot to a detector, shaded at its
/// centroid, plus the path lengths through its three vertices.
TriangleContribution triangle_irradiance(const RenderContext& ctx, int laser, int detector,
                                         int tri);

/// Spreads alpha over the histogram as a triangular density spanning
/// [min tau, max tau] with its apex at the median tau, integrating it exactly
/// over every bin. Mass outside the axis is dropped.
void deposit_filtered(std::span<double> hist, const TriangleContribution& c,
                      const TemporalAxis& axis);

/// Deposits alpha entirely into the bin containing tau, if any.
void deposit_point(std::span<double> hist, double alpha, double tau, const TemporalAxis& axis);

/// Three-bounce transient rendering, wall -> object -> wall.
TransientImage render(const SceneConfig& scene, const TriangleMesh& mesh,
                      const RenderOptions& options = {});

/// Slow quadrature reference: every triangle is split into 4^level
/// congruent sub-triangles, each shaded, shadow-tested and binned at its own
/// centroid without temporal filtering. Level 0 equals render() with the
/// filter off.
TransientImage reference_render(const SceneConfig& scene, const TriangleMesh& mesh, int level);

}  // namespace nlos
