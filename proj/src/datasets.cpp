#include "nlos/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nlos/io.hpp"

namespace nlos {
namespace {

// Counter-style generator: cheap to construct per entry, so every entry of a
// noisy image has its own stream.
struct SplitMix64 {
  using result_type = std::uint64_t;
  std::uint64_t state;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type(0); }
  result_type operator()() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
};

std::uint64_t mix(std::uint64_t seed, std::uint64_t index) {
  SplitMix64 a{seed};
  SplitMix64 b{a() ^ index};
  return b();
}

void require_same_shape(const TransientImage& a, const TransientImage& b, const char* what) {
  if (!a.same_shape(b)) throw DimensionMismatch(std::string(what) + ": image shapes differ");
}

double diff_squared(const TransientImage& a, const TransientImage& b) {
  auto x = a.values();
  auto y = b.values();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return s;
}

TransientImage sum_bins(const TransientImage& image, int factor) {
  const int nb = image.n_bins() / factor;
  TransientImage out(image.n_lasers(), image.n_detectors(), nb);
  for (int l = 0; l < image.n_lasers(); ++l) {
    for (int d = 0; d < image.n_detectors(); ++d) {
      auto in = image.row(l, d);
      auto row = out.row(l, d);
      for (int k = 0; k < nb; ++k) {
        double s = 0.0;
        for (int o = 0; o < factor; ++o) s += in[std::size_t(k) * factor + o];
        row[k] = s;
      }
    }
  }
  return out;
}

// Moller-Trumbore, both faces; returns the ray parameter or NaN.
double intersect(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                 const Vec3& c) {
  Vec3 e1 = b - a, e2 = c - a;
  Vec3 p = dir.cross(e2);
  double det = e1.dot(p);
  if (std::abs(det) < 1e-14) return std::nan("");
  double inv = 1.0 / det;
  Vec3 s = origin - a;
  double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nan("");
  Vec3 q = s.cross(e1);
  double v = dir.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nan("");
  double t = e2.dot(q) * inv;
  return t > 0.0 ? t : std::nan("");
}

}  // namespace

// ---------------------------------------------------------------------------

SceneConfig standard_scene_config(int n_lasers, int nx, int ny, int n_bins, double t0,
                                  double dt) {
  static const Vec3 kLasers[4] = {{45, 0, 0}, {-45, 0, 0}, {0, 45, 0}, {0, -45, 0}};
  if (n_lasers < 1 || n_lasers > 4) throw ConfigError("standard scene: 1 to 4 lasers");
  SceneConfig scene;
  scene.lasers.assign(kLasers, kLasers + n_lasers);
  scene.detectors = make_detector_grid(scene.wall, Vec3::Zero(), nx, ny, 80.0, 80.0);
  scene.detector_grid = {nx, ny};
  scene.axis = {t0, dt, n_bins};
  scene.validate();
  return scene;
}

TriangleMesh make_plate(const Vec3& center, double size, int n) {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) {
      vertices.push_back(center + Vec3((double(i) / n - 0.5) * size, (double(j) / n - 0.5) * size, 0));
    }
  }
  auto id = [n](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      // Clockwise seen from +z, so normals face the wall.
      triangles.push_back({id(i, j), id(i, j + 1), id(i + 1, j)});
      triangles.push_back({id(i + 1, j), id(i, j + 1), id(i + 1, j + 1)});
    }
  }
  return {std::move(vertices), std::move(triangles)};
}

std::vector<std::string> standard_presets() {
  return {"4laser-16x16x256", "4laser-16x16x256-t90", "1laser", "unit-square",
          "two-blob",         "bunny-class",          "two-plates"};
}

StandardScene make_standard_scene(const std::string& preset) {
  auto bunny = [] {
    return BlobSet{{Vec3(0, -3, 47), 6.0},  {Vec3(0, 3, 46), 5.5},    {Vec3(0, 9, 42), 4.0},
                   {Vec3(-2, 13, 40), 1.8}, {Vec3(2, 13.5, 41), 1.8}, {Vec3(0, -10, 48), 2.5}};
  };
  StandardScene out;
  if (preset == "4laser-16x16x256" || preset == "bunny-class" || preset == "4laser-16x16x256-t90" ||
      preset == "1laser") {
    bool one = preset == "1laser";
    double t0 = (preset == "4laser-16x16x256-t90" || one) ? 90.0 : 80.0;
    out.scene = standard_scene_config(one ? 1 : 4, 16, 16, 256, t0);
    out.blobs = bunny();
  } else if (preset == "two-blob") {
    out.scene = standard_scene_config(4, 16, 16, 256, 80.0);
    out.blobs = {{Vec3(-10, 0, 45), 3.0}, {Vec3(10, 0, 45), 3.0}};
  } else if (preset == "unit-square") {
    out.scene = standard_scene_config(4, 16, 16, 256, 80.0);
    out.mesh = make_plate(Vec3(0, 0, 45), 1.0, 1);
    return out;
  } else if (preset == "two-plates") {
    out.scene = standard_scene_config(4, 16, 16, 256, 80.0);
    // The nearer plate hides part of the farther one from the wall.
    out.mesh = TriangleMesh::merge(make_plate(Vec3(-7, 0, 40), 20.0, 24),
                                   make_plate(Vec3(7, 2, 50), 20.0, 24));
    return out;
  } else {
    throw ConfigError("unknown preset '" + preset + "'");
  }
  out.mesh = extract_mesh(out.blobs, out.scene.volume);
  return out;
}

// ---------------------------------------------------------------------------

void DegradationSpec::validate() const {
  if (spatial < 1 || temporal < 1) throw ConfigError("degrade: factors must be positive");
  if (blur_width < 1 || blur_width % 2 == 0) throw ConfigError("degrade: blur width must be odd");
  if (!std::isfinite(poisson_scale)) throw ConfigError("degrade: poisson scale must be finite");
}

TransientImage poisson_counts(const TransientImage& image, double scale, std::uint64_t seed) {
  TransientImage out(image.n_lasers(), image.n_detectors(), image.n_bins());
  double peak = image.max();
  if (!(peak > 0.0)) return out;
  double gain = scale / peak;
  auto in = image.values();
  auto counts = out.values();
  const std::int64_t n = std::int64_t(in.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    double lambda = std::max(0.0, in[i] * gain);
    if (lambda == 0.0) continue;
    SplitMix64 engine{mix(seed, std::uint64_t(i))};
    std::poisson_distribution<long long> draw(lambda);
    counts[i] = double(draw(engine));
  }
  return out;
}

DegradedData degrade(const TransientImage& image, const SceneConfig& scene,
                     const DegradationSpec& spec) {
  spec.validate();
  if (!image.compatible_with(scene)) throw DimensionMismatch("degrade: image does not match scene");
  DegradedData out{image, scene};

  if (spec.spatial > 1) {
    const int f = spec.spatial;
    const int nx = scene.detector_grid[0], ny = scene.detector_grid[1];
    if (nx == 0 || nx % f != 0 || ny % f != 0) {
      throw DimensionMismatch("degrade: spatial factor must divide the detector grid");
    }
    const int mx = nx / f, my = ny / f;
    TransientImage img(image.n_lasers(), mx * my, image.n_bins());
    std::vector<Vec3> detectors(std::size_t(mx) * my, Vec3::Zero());
    const double inv = 1.0 / double(f * f);
    for (int by = 0; by < my; ++by) {
      for (int bx = 0; bx < mx; ++bx) {
        int target = by * mx + bx;
        for (int oy = 0; oy < f; ++oy) {
          for (int ox = 0; ox < f; ++ox) {
            int source = (by * f + oy) * nx + bx * f + ox;
            detectors[target] += scene.detectors[source] * inv;
            for (int l = 0; l < image.n_lasers(); ++l) {
              auto src = image.row(l, source);
              auto dst = img.row(l, target);
              for (int k = 0; k < image.n_bins(); ++k) dst[k] += src[k] * inv;
            }
          }
        }
      }
    }
    // Each new detector covers its block, so the footprint becomes the block
    // offsets composed with whatever footprint the source detectors had.
    std::vector<Vec3> footprint;
    std::vector<Vec3> base = scene.detector_footprint;
    if (base.empty()) base.push_back(Vec3::Zero());
    for (int oy = 0; oy < f; ++oy) {
      for (int ox = 0; ox < f; ++ox) {
        Vec3 shift = scene.detectors[oy * nx + ox] - detectors[0];
        for (const Vec3& o : base) footprint.push_back(shift + o);
      }
    }
    out.image = std::move(img);
    out.scene.detectors = std::move(detectors);
    out.scene.detector_grid = {mx, my};
    out.scene.detector_footprint = std::move(footprint);
  }

  if (spec.temporal > 1) {
    if (out.image.n_bins() % spec.temporal != 0) {
      throw DimensionMismatch("degrade: temporal factor must divide the bin count");
    }
    out.image = sum_bins(out.image, spec.temporal);
    out.scene.axis.dt *= spec.temporal;
    out.scene.axis.n_bins /= spec.temporal;
  }

  if (spec.blur_width > 1) {
    const int r = spec.blur_width / 2;
    const int nb = out.image.n_bins();
    TransientImage blurred(out.image.n_lasers(), out.image.n_detectors(), nb);
    for (int l = 0; l < out.image.n_lasers(); ++l) {
      for (int d = 0; d < out.image.n_detectors(); ++d) {
        auto src = out.image.row(l, d);
        auto dst = blurred.row(l, d);
        for (int k = 0; k < nb; ++k) {
          double s = 0.0;
          for (int o = -r; o <= r; ++o) s += src[std::clamp(k + o, 0, nb - 1)];
          dst[k] = s / double(spec.blur_width);
        }
      }
    }
    out.image = std::move(blurred);
  }

  if (spec.poisson_scale > 0.0) out.image = poisson_counts(out.image, spec.poisson_scale, spec.seed);
  return out;
}

// ---------------------------------------------------------------------------

TransientImage temporal_lowpass(const TransientImage& image, double sigma_bins) {
  if (!(sigma_bins > 0.0)) throw ConfigError("lowpass: sigma must be positive");
  const int nb = image.n_bins();
  const int radius = std::min(nb - 1, int(std::ceil(3.0 * sigma_bins)));
  std::vector<double> kernel(2 * std::size_t(radius) + 1);
  for (int o = -radius; o <= radius; ++o) {
    kernel[o + radius] = std::exp(-0.5 * double(o) * o / (sigma_bins * sigma_bins));
  }
  TransientImage out(image.n_lasers(), image.n_detectors(), nb);
#pragma omp parallel for schedule(static)
  for (int row = 0; row < image.n_rows(); ++row) {
    int l = row / image.n_detectors(), d = row % image.n_detectors();
    auto src = image.row(l, d);
    auto dst = out.row(l, d);
    for (int k = 0; k < nb; ++k) {
      double s = 0.0, w = 0.0;
      int lo = std::max(0, k - radius), hi = std::min(nb - 1, k + radius);
      for (int q = lo; q <= hi; ++q) {
        double g = kernel[q - k + radius];
        s += g * src[q];
        w += g;
      }
      dst[k] = s / w;
    }
  }
  return out;
}

DegradedData preprocess_measured(const TransientImage& image, const SceneConfig& scene,
                                 const PreprocessOptions& options) {
  if (options.mode == PreprocessMode::none) return {image, scene};
  if (options.downsample < 1) throw ConfigError("preprocess: downsample factor must be positive");
  TransientImage low = temporal_lowpass(image, options.lowpass_sigma_bins);
  TransientImage clean(image.n_lasers(), image.n_detectors(), image.n_bins());
  auto in = image.values();
  auto lp = low.values();
  auto c = clean.values();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = std::max(0.0, in[i] - lp[i]);

  DegradedData out{std::move(clean), scene};
  if (options.downsample > 1) {
    if (image.n_bins() < options.downsample) {
      throw DimensionMismatch("preprocess: fewer bins than the downsampling factor");
    }
    out.image = sum_bins(out.image, options.downsample);
    out.scene.axis.dt *= options.downsample;
    out.scene.axis.n_bins = out.image.n_bins();
  }
  return out;
}

// ---------------------------------------------------------------------------

double psnr(const TransientImage& candidate, const TransientImage& reference) {
  require_same_shape(candidate, reference, "psnr");
  double se = diff_squared(candidate, reference);
  if (se == 0.0) return kPsnrIdentical;
  double rmse = std::sqrt(se / double(reference.size()));
  return 20.0 * std::log10(reference.max() / rmse);
}

double rel_l2(const TransientImage& candidate, const TransientImage& reference) {
  require_same_shape(candidate, reference, "rel_l2");
  return 100.0 * std::sqrt(diff_squared(candidate, reference)) / std::sqrt(reference.squared_norm());
}

double fit_gain(const TransientImage& rendered, const TransientImage& reference) {
  require_same_shape(rendered, reference, "fit_gain");
  auto a = rendered.values();
  auto b = reference.values();
  double ab = 0.0, aa = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
  }
  return aa > 0.0 ? ab / aa : 1.0;
}

std::vector<double> depth_map(const TriangleMesh& mesh, const SceneConfig& scene) {
  const Vec3 dir = scene.wall.normal;
  std::vector<double> depth(scene.detectors.size(), std::nan(""));
#pragma omp parallel for schedule(dynamic, 4)
  for (int d = 0; d < scene.n_detectors(); ++d) {
    double best = std::numeric_limits<double>::infinity();
    for (int t = 0; t < mesh.n_triangles(); ++t) {
      double hit = intersect(scene.detectors[d], dir, mesh.vertex(t, 0), mesh.vertex(t, 1),
                             mesh.vertex(t, 2));
      if (hit < best) best = hit;  // NaN compares false
    }
    if (std::isfinite(best)) depth[d] = best;
  }
  return depth;
}

DepthComparison compare_depth(const TriangleMesh& candidate, const TriangleMesh& ground_truth,
                              const SceneConfig& scene) {
  auto cand = depth_map(candidate, scene);
  auto truth = depth_map(ground_truth, scene);
  DepthComparison out;
  out.error.assign(cand.size(), std::nan(""));
  out.silhouette.assign(cand.size(), false);
  double sum = 0.0;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    out.silhouette[i] = std::isfinite(truth[i]);
    if (out.silhouette[i] && std::isfinite(cand[i])) {
      out.error[i] = cand[i] - truth[i];
      sum += std::abs(out.error[i]);
      ++out.coverage;
    }
  }
  if (out.coverage > 0) out.mean_abs_error = sum / out.coverage;
  return out;
}

MetricReport compute_metrics(const TransientImage& candidate, const TransientImage& reference,
                             const SceneConfig& scene, const TriangleMesh* candidate_mesh,
                             const TriangleMesh* ground_truth) {
  require_same_shape(candidate, reference, "metrics");
  MetricReport report;
  report.psnr = psnr(candidate, reference);
  report.rel_l2 = rel_l2(candidate, reference);
  if (candidate_mesh && ground_truth) {
    report.depth = compare_depth(*candidate_mesh, *ground_truth, scene);
    report.notes.push_back("depth error is candidate minus ground truth along the wall normal");
  }
  if (std::isinf(report.psnr)) report.notes.push_back("images identical; psnr is +inf");
  return report;
}

NoiseLevels poisson_noise_levels(const TransientImage& clean, const TransientImage& counts,
                                 double scale) {
  require_same_shape(clean, counts, "noise levels");
  NoiseLevels out;
  double peak = clean.max();
  if (!(peak > 0.0)) return out;
  TransientImage expected = clean;
  for (double& v : expected.values()) v *= scale / peak;
  out.before_normalization = rel_l2(counts, expected);
  TransientImage renormalized = counts;
  double count_peak = counts.max();
  if (count_peak > 0.0) {
    for (double& v : renormalized.values()) v *= peak / count_peak;
  }
  out.after_normalization = rel_l2(renormalized, clean);
  return out;
}

}  // namespace nlos
