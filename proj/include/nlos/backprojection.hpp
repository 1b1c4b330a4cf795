#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "nlos/scene.hpp"

namespace nlos {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) { return double(rng() >> 11) * 0x1.0p-53; }

/// Per-voxel accumulated votes over the reconstruction volume, x fastest.
struct DensityVolume {
  VolumeSpec spec;
  std::vector<double> values;

  DensityVolume() = default;
  explicit DensityVolume(const VolumeSpec& spec) : spec(spec), values(spec.cell_count(), 0.0) {}

  std::size_t index(int i, int j, int k) const {
    return (std::size_t(k) * spec.resolution[1] + j) * spec.resolution[0] + i;
  }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }
  double& at(int i, int j, int k) { return values[index(i, j, k)]; }
  std::array<int, 3> voxel(std::size_t index) const;
  Vec3 voxel_center(std::size_t index) const;
  double max() const;
  std::size_t argmax() const;
};

/// Ellipsoidal backprojection by gather: every voxel center v adds the
/// image value of bin(|l - v| + |v - d|) for every laser/detector pair.
/// Signed input gives signed votes. Throws DimensionMismatch when the image
/// does not fit the scene.
DensityVolume backproject(const TransientImage& image, const SceneConfig& scene,
                          const VolumeSpec& volume);

/// Voxel sampling distribution. Weights are |value| (use_abs) or
/// max(value, 0); an all-zero volume becomes uniform. A `floor` share of the
/// mass is spread uniformly over all voxels.
class SamplingPdf {
 public:
  SamplingPdf(const VolumeSpec& spec, std::vector<double> weights);

  const VolumeSpec& spec() const { return spec_; }
  double probability(std::size_t voxel) const { return probabilities_[voxel]; }
  const std::vector<double>& probabilities() const { return probabilities_; }
  std::size_t draw_voxel(Rng& rng) const;

 private:
  VolumeSpec spec_;
  std::vector<double> probabilities_;
  std::vector<double> cdf_;
};

SamplingPdf density_to_pdf(const DensityVolume& volume, bool use_abs, double floor = 0.0);

/// Draws a voxel by weight and returns a point uniformly jittered inside it.
Vec3 sample_location(const SamplingPdf& pdf, Rng& rng);

/// Negated Laplacian-of-Gaussian (sigma in voxels) clamped at zero.
DensityVolume sharpen(const DensityVolume& volume, double sigma_voxels = 1.0);

struct BaselineOptions {
  double iso_fraction = 0.5;
  bool sharpen = true;
  double sharpen_sigma = 1.0;
};

/// Backprojection baseline: backproject, sharpen, then extract the
/// isosurface at iso_fraction times the volume maximum.
TriangleMesh baseline_reconstruct(const TransientImage& image, const SceneConfig& scene,
                                  const BaselineOptions& options = {});

/// Marching cubes over a density volume, sampled at voxel centers.
TriangleMesh density_isosurface(const DensityVolume& volume, double iso);

}  // namespace nlos
