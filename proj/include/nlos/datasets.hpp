#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nlos/blobfield.hpp"
#include "nlos/scene.hpp"

namespace nlos {

/// A scene preset together with its ground-truth geometry. `blobs` is set
/// when the object is itself a blob field.
struct StandardScene {
  SceneConfig scene;
  TriangleMesh mesh;
  BlobSet blobs;
};

std::vector<std::string> standard_presets();

/// Wall at z = 0, 16x16 detectors over 80x80 units, dt = 0.4, 256 bins, and
/// an object centered near z = 45. Presets:
///   4laser-16x16x256   four lasers, t0 = 80, bunny-class object
///   4laser-16x16x256-t90  same with t0 = 90
///   1laser             laser (45, 0, 0) only, t0 = 90, bunny-class object
///   unit-square        four lasers, a unit square facing the wall
///   two-blob           four lasers, two sigma = 3 blobs 20 units apart
///   bunny-class        alias of 4laser-16x16x256
///   two-plates         four lasers, two overlapping plates (~2k triangles)
/// Throws ConfigError for an unknown name.
StandardScene make_standard_scene(const std::string& preset);

/// Four lasers at (+-45, 0, 0), (0, +-45, 0) and an nx x ny detector grid
/// over 80x80 units.
SceneConfig standard_scene_config(int n_lasers, int nx, int ny, int n_bins, double t0,
                                  double dt = 0.4);

/// Square plate of side `size` centered at `center`, normal toward -z,
/// tessellated into n x n quads.
TriangleMesh make_plate(const Vec3& center, double size, int n);

// ---------------------------------------------------------------------------
// Degradation

struct DegradationSpec {
  // Detector blocks of spatial x spatial are averaged into one.
  int spatial = 1;
  // Groups of `temporal` bins are summed into one.
  int temporal = 1;
  // Expected count at the image maximum; <= 0 disables Poisson noise.
  double poisson_scale = 0.0;
  // Odd box width in bins; 1 disables the blur.
  int blur_width = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DegradedData {
  TransientImage image;
  SceneConfig scene;
};

/// Spatial decimation, temporal aggregation, temporal box blur and Poisson
/// counting, in that order. Decimated detectors sit at their block centers
/// and carry the block as their footprint (taken from the first block, so the
/// grid is assumed regular). Throws DimensionMismatch when a factor does not
/// divide the corresponding dimension.
DegradedData degrade(const TransientImage& image, const SceneConfig& scene,
                     const DegradationSpec& spec);

/// Scales the image so its maximum equals `scale` and replaces every entry
/// by an independent Poisson count. Entry i uses its own generator seeded
/// from (seed, i), so the result does not depend on evaluation order.
TransientImage poisson_counts(const TransientImage& image, double scale, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Measured-data preprocessing

enum class PreprocessMode { none, spad_background };

struct PreprocessOptions {
  PreprocessMode mode = PreprocessMode::spad_background;
  double lowpass_sigma_bins = 1000.0;
  int downsample = 25;
};

/// spad_background: subtracts a Gaussian lowpass along time, clamps
/// negatives to zero, then sums groups of `downsample` bins (a trailing
/// partial group is dropped). none: identity.
DegradedData preprocess_measured(const TransientImage& image, const SceneConfig& scene,
                                 const PreprocessOptions& options);

/// Normalized Gaussian lowpass along each histogram, truncated at 3 sigma
/// and renormalized near the ends.
TransientImage temporal_lowpass(const TransientImage& image, double sigma_bins);

// ---------------------------------------------------------------------------
// Metrics

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 20 log10(max(reference) / rmse(candidate - reference)); +inf when equal.
double psnr(const TransientImage& candidate, const TransientImage& reference);
/// 100 |candidate - reference| / |reference|.
double rel_l2(const TransientImage& candidate, const TransientImage& reference);

/// Least-squares gain g minimizing |reference - g * rendered|; 1 when rendered is zero.
double fit_gain(const TransientImage& rendered, const TransientImage& reference);

/// Distance from each detector to the first surface hit along the wall
/// normal; NaN where the ray misses.
std::vector<double> depth_map(const TriangleMesh& mesh, const SceneConfig& scene);

struct DepthComparison {
  // candidate depth minus ground-truth depth; NaN outside the silhouette or
  // where the candidate misses.
  std::vector<double> error;
  std::vector<bool> silhouette;
  double mean_abs_error = 0.0;  // over pixels with a finite error
  int coverage = 0;             // pixels with a finite error
};

DepthComparison compare_depth(const TriangleMesh& candidate, const TriangleMesh& ground_truth,
                              const SceneConfig& scene);

struct MetricReport {
  double psnr = 0.0;
  double rel_l2 = 0.0;
  std::optional<DepthComparison> depth;
  std::vector<std::string> notes;
};

/// Image metrics, plus depth metrics when both meshes are given. Throws
/// DimensionMismatch on a shape mismatch.
MetricReport compute_metrics(const TransientImage& candidate, const TransientImage& reference,
                             const SceneConfig& scene, const TriangleMesh* candidate_mesh = nullptr,
                             const TriangleMesh* ground_truth = nullptr);

/// Relative noise of a Poisson draw, measured against the scaled expectation
/// (before normalization) and after rescaling the counts to the clean
/// image's maximum. Both in percent.
struct NoiseLevels {
  double before_normalization = 0.0;
  double after_normalization = 0.0;
};
NoiseLevels poisson_noise_levels(const TransientImage& clean, const TransientImage& counts,
                                 double scale);

}  // namespace nlos
