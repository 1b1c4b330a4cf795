#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "nlos/scene.hpp"

namespace nlos {

inline constexpr double kIsoLevel = 0.75;
inline constexpr double kSigmaMin = 1e-3;
// Kernels are cut off at this many standard deviations.
inline constexpr double kKernelCutoff = 4.0;

/// Isotropic Gaussian kernel exp(-|x - center|^2 / (2 sigma^2)).
struct Blob {
  Vec3 center = Vec3::Zero();
  double sigma = 1.0;

  bool operator==(const Blob&) const = default;
};

/// Parameter vector of the geometry, flattened as (x, y, z, sigma) per blob.
using BlobSet = std::vector<Blob>;

std::vector<double> flatten(const BlobSet& blobs);
BlobSet unflatten(std::span<const double> params);

/// Sum of Gaussian kernels at x, each truncated at kKernelCutoff sigma.
double eval_field(const BlobSet& blobs, const Vec3& x);

/// Scalar samples on a regular lattice; sample (i, j, k) sits at
/// origin + spacing * (i, j, k), x fastest in memory.
struct ScalarGrid {
  Vec3 origin = Vec3::Zero();
  Vec3 spacing = Vec3::Ones();
  std::array<int, 3> dims{0, 0, 0};
  std::vector<double> values;

  ScalarGrid() = default;
  ScalarGrid(const Vec3& origin, const Vec3& spacing, std::array<int, 3> dims);

  std::size_t index(int i, int j, int k) const {
    return (std::size_t(k) * dims[1] + j) * dims[0] + i;
  }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }
  double& at(int i, int j, int k) { return values[index(i, j, k)]; }
  Vec3 position(int i, int j, int k) const {
    return origin + spacing.cwiseProduct(Vec3(i, j, k));
  }
};

/// Samples the blob field at the (res + 1)^3 cell corners of the volume.
ScalarGrid sample_field(const BlobSet& blobs, const VolumeSpec& volume);

/// Marching cubes over every lattice cell. Vertices are interpolated
/// linearly along cell edges and shared between neighbouring cells; the
/// inside is where values >= iso and triangle normals point toward lower
/// values. Ambiguous faces always separate the inside corners, so
/// neighbouring cells agree and the surface is closed away from the
/// lattice boundary.
TriangleMesh marching_cubes(const ScalarGrid& grid, double iso);

/// Isosurface G(P) of the blob field at iso over the reconstruction volume.
TriangleMesh extract_mesh(const BlobSet& blobs, const VolumeSpec& volume,
                          double iso = kIsoLevel);

/// Radius of a lone blob's iso-sphere.
double iso_radius(double sigma, double iso = kIsoLevel);

}  // namespace nlos
