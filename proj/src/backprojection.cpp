#include "nlos/backprojection.hpp"

#include <algorithm>
#include <stdexcept>
#include <cmath>

#include "nlos/blobfield.hpp"

namespace nlos {

std::array<int, 3> DensityVolume::voxel(std::size_t index) const {
  const auto& r = spec.resolution;
  int i = int(index % r[0]);
  int j = int((index / r[0]) % r[1]);
  int k = int(index / (std::size_t(r[0]) * r[1]));
  return {i, j, k};
}

Vec3 DensityVolume::voxel_center(std::size_t index) const {
  auto v = voxel(index);
  return spec.cell_center(v[0], v[1], v[2]);
}

double DensityVolume::max() const {
  return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
}

std::size_t DensityVolume::argmax() const {
  return std::size_t(std::max_element(values.begin(), values.end()) - values.begin());
}

DensityVolume backproject(const TransientImage& image, const SceneConfig& scene,
                          const VolumeSpec& volume) {
  if (!image.compatible_with(scene)) {
    throw DimensionMismatch("backproject: image dimensions do not match the scene");
  }
  DensityVolume out(volume);
  const int nl = scene.n_lasers(), nd = scene.n_detectors();
  const TemporalAxis& axis = scene.axis;

  // Bin range holding nonzero entries per row; rows without any are skipped.
  struct Row {
    int l, d, first, last;
  };
  std::vector<Row> rows;
  for (int l = 0; l < nl; ++l) {
    for (int d = 0; d < nd; ++d) {
      auto hist = image.row(l, d);
      int first = -1, last = -1;
      for (int k = 0; k < axis.n_bins; ++k) {
        if (hist[k] != 0.0) {
          if (first < 0) first = k;
          last = k;
        }
      }
      if (first >= 0) rows.push_back({l, d, first, last});
    }
  }
  if (rows.empty()) return out;

  const auto& res = volume.resolution;
  const double inv_dt = 1.0 / axis.dt;
#pragma omp parallel
  {
    std::vector<double> laser_dist(nl), det_dist(nd);
#pragma omp for schedule(dynamic, 1)
    for (int k = 0; k < res[2]; ++k) {
      for (int j = 0; j < res[1]; ++j) {
        for (int i = 0; i < res[0]; ++i) {
          Vec3 v = volume.cell_center(i, j, k);
          for (int l = 0; l < nl; ++l) laser_dist[l] = (scene.lasers[l] - v).norm() - axis.t0;
          for (int d = 0; d < nd; ++d) det_dist[d] = (v - scene.detectors[d]).norm();
          double acc = 0.0;
          for (const Row& row : rows) {
            double t = (laser_dist[row.l] + det_dist[row.d]) * inv_dt;
            if (t < row.first || t >= row.last + 1) continue;
            acc += image.at(row.l, row.d, int(t));
          }
          out.at(i, j, k) = acc;
        }
      }
    }
  }
  return out;
}

SamplingPdf::SamplingPdf(const VolumeSpec& spec, std::vector<double> weights)
    : spec_(spec), probabilities_(std::move(weights)) {
  cdf_.resize(probabilities_.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < probabilities_.size(); ++i) {
    acc += probabilities_[i];
    cdf_[i] = acc;
  }
}

std::size_t SamplingPdf::draw_voxel(Rng& rng) const {
  double u = uniform01(rng) * cdf_.back();
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  std::size_t index = std::size_t(it - cdf_.begin());
  return std::min(index, cdf_.size() - 1);
}

SamplingPdf density_to_pdf(const DensityVolume& volume, bool use_abs, double floor) {
  if (!(floor >= 0.0 && floor <= 1.0)) throw std::invalid_argument("pdf floor must lie in [0, 1]");
  const std::size_t n = volume.values.size();
  std::vector<double> weights(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double v = volume.values[i];
    weights[i] = use_abs ? std::abs(v) : std::max(v, 0.0);
    total += weights[i];
  }
  const double uniform = 1.0 / double(n);
  if (!(total > 0.0) || !std::isfinite(total)) {
    std::fill(weights.begin(), weights.end(), uniform);
  } else {
    for (auto& w : weights) w = (1.0 - floor) * (w / total) + floor * uniform;
  }
  return {volume.spec, std::move(weights)};
}

Vec3 sample_location(const SamplingPdf& pdf, Rng& rng) {
  DensityVolume shape;
  shape.spec = pdf.spec();
  std::size_t index = pdf.draw_voxel(rng);
  auto v = shape.voxel(index);
  Vec3 h = pdf.spec().cell_size();
  Vec3 jitter(uniform01(rng), uniform01(rng), uniform01(rng));
  return pdf.spec().box.min + h.cwiseProduct(Vec3(v[0], v[1], v[2]) + jitter);
}

namespace {

// Separable 1D pass along `axis` with edge-clamped boundaries.
std::vector<double> convolve_axis(const std::vector<double>& in, const std::array<int, 3>& res,
                                  int axis, const std::vector<double>& kernel) {
  const int radius = int(kernel.size() / 2);
  std::vector<double> out(in.size(), 0.0);
  const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? std::size_t(res[0]) : std::size_t(res[0]) * res[1]);
  const int n = res[axis];
#pragma omp parallel for schedule(static)
  for (int k = 0; k < res[2]; ++k) {
    for (int j = 0; j < res[1]; ++j) {
      for (int i = 0; i < res[0]; ++i) {
        std::array<int, 3> p{i, j, k};
        std::size_t base = (std::size_t(k) * res[1] + j) * res[0] + i;
        int pos = p[axis];
        double acc = 0.0;
        for (int o = -radius; o <= radius; ++o) {
          int q = std::clamp(pos + o, 0, n - 1);
          acc += kernel[o + radius] * in[base + (std::ptrdiff_t(q) - pos) * std::ptrdiff_t(stride)];
        }
        out[base] = acc;
      }
    }
  }
  return out;
}

}  // namespace

DensityVolume sharpen(const DensityVolume& volume, double sigma) {
  const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> gauss(2 * radius + 1), second(2 * radius + 1);
  double gsum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    gauss[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    gsum += gauss[i + radius];
  }
  for (auto& g : gauss) g /= gsum;
  double ssum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    second[i + radius] = (double(i * i) / (sigma * sigma) - 1.0) / (sigma * sigma) * gauss[i + radius];
    ssum += second[i + radius];
  }
  // Zero-sum so flat regions map to zero.
  for (auto& s : second) s -= ssum / double(second.size());

  const auto& res = volume.spec.resolution;
  std::vector<double> laplacian(volume.values.size(), 0.0);
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<double> term = volume.values;
    for (int a = 0; a < 3; ++a) term = convolve_axis(term, res, a, a == axis ? second : gauss);
    for (std::size_t i = 0; i < term.size(); ++i) laplacian[i] += term[i];
  }
  DensityVolume out(volume.spec);
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = std::max(0.0, -laplacian[i]);
  return out;
}

TriangleMesh density_isosurface(const DensityVolume& volume, double iso) {
  Vec3 h = volume.spec.cell_size();
  ScalarGrid grid(volume.spec.box.min + 0.5 * h, h, volume.spec.resolution);
  grid.values = volume.values;
  return marching_cubes(grid, iso);
}

TriangleMesh baseline_reconstruct(const TransientImage& image, const SceneConfig& scene,
                                  const BaselineOptions& options) {
  DensityVolume density = backproject(image, scene, scene.volume);
  if (options.sharpen) density = sharpen(density, options.sharpen_sigma);
  double peak = density.max();
  if (!(peak > 0.0)) return {};
  return density_isosurface(density, options.iso_fraction * peak);
}

}  // namespace nlos
