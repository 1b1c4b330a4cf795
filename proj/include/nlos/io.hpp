#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "nlos/blobfield.hpp"
#include "nlos/optimizer.hpp"
#include "nlos/scene.hpp"

namespace nlos {

struct DensityVolume;

/// A transient image plus the acquisition geometry it was recorded with.
/// On disk: a text header terminated by "end_header\n", then the samples as
/// little-endian float64 in (laser, detector, bin) order.
struct TransientCube {
  TransientImage image;
  TemporalAxis axis;
  std::vector<Vec3> lasers;
  std::vector<Vec3> detectors;
  std::array<int, 2> detector_grid{0, 0};
  std::vector<Vec3> detector_footprint;
};

TransientCube make_cube(TransientImage image, const SceneConfig& scene);

/// Scene carrying the cube's lasers, detectors and time axis; wall, BRDF and
/// volume come from base.
SceneConfig scene_from_cube(const TransientCube& cube, const SceneConfig& base);

void write_cube(std::ostream& out, const TransientCube& cube);
TransientCube read_cube(std::istream& in);
void save_cube(const std::filesystem::path& path, const TransientCube& cube);
TransientCube load_cube(const std::filesystem::path& path);

// ASCII OBJ, "v" and "f" records only. Polygons are fan-triangulated on read.
void write_obj(std::ostream& out, const TriangleMesh& mesh);
TriangleMesh read_obj(std::istream& in);
void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh);
TriangleMesh load_obj(const std::filesystem::path& path);

// One blob per line: "x y z sigma". '#' starts a comment.
void write_blobs(std::ostream& out, const BlobSet& blobs);
BlobSet read_blobs(std::istream& in);
void save_blobs(const std::filesystem::path& path, const BlobSet& blobs);
BlobSet load_blobs(const std::filesystem::path& path);

/// Key-value scene description ("key = value", '#' comments). Recognised
/// keys: wall_point, wall_normal, laser (repeatable), detector (repeatable),
/// detector_shape, detector_grid = nx ny width height, detector_center,
/// t0, dt, bins, brdf, volume_min, volume_max, volume_resolution.
SceneConfig parse_scene_config(std::istream& in);
SceneConfig load_scene_config(const std::filesystem::path& path);
void write_scene_config(std::ostream& out, const SceneConfig& scene);

/// Key-value optimizer settings, same syntax as the scene description.
/// Keys are the OptimizerConfig field names; LM settings use an "lm_"
/// prefix. Unset keys keep `base` values.
OptimizerConfig parse_optimizer_config(std::istream& in, OptimizerConfig base = {});
OptimizerConfig load_optimizer_config(const std::filesystem::path& path,
                                      OptimizerConfig base = {});
void write_optimizer_config(std::ostream& out, const OptimizerConfig& config);

/// Regular detector raster on the wall plane, x fastest, pixel centers.
std::vector<Vec3> make_detector_grid(const Plane& wall, const Vec3& center, int nx, int ny,
                                     double width, double height);

void write_density(std::ostream& out, const DensityVolume& volume);
DensityVolume read_density(std::istream& in);
void save_density(const std::filesystem::path& path, const DensityVolume& volume);
DensityVolume load_density(const std::filesystem::path& path);

/// 8-bit binary PGM of a width x height raster, linearly mapped from
/// [lo, hi]. NaN pixels are written black.
void save_pgm(const std::filesystem::path& path, const std::vector<double>& pixels, int width,
              int height, double lo, double hi);

/// Writes through a temporary sibling file and renames it into place, so a
/// failed writer never leaves a partial output behind.
void write_atomically(const std::filesystem::path& path,
                      const std::function<void(std::ostream&)>& writer);

}  // namespace nlos
