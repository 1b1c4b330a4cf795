#include "nlos/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <type_traits>

#include "nlos/backprojection.hpp"

namespace nlos {
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary payloads are written in native little-endian order");

void write_f64(std::ostream& out, std::span<const double> values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            std::streamsize(values.size() * sizeof(double)));
}

void read_f64(std::istream& in, std::span<double> values, const char* what) {
  in.read(reinterpret_cast<char*>(values.data()), std::streamsize(values.size() * sizeof(double)));
  if (std::size_t(in.gcount()) != values.size() * sizeof(double)) {
    throw IoError(std::string(what) + ": truncated payload");
  }
}

std::string format_vec(const Vec3& v) {
  std::ostringstream s;
  s << std::setprecision(17) << v.x() << ' ' << v.y() << ' ' << v.z();
  return s.str();
}

// Reads header lines up to "end_header", returning (key, rest-of-line) pairs
// in order.
std::vector<std::pair<std::string, std::string>> read_header(std::istream& in,
                                                             const std::string& magic,
                                                             const char* what) {
  std::string line;
  if (!std::getline(in, line) || line != magic) {
    throw IoError(std::string(what) + ": missing '" + magic + "' signature");
  }
  std::vector<std::pair<std::string, std::string>> entries;
  while (std::getline(in, line)) {
    if (line == "end_header") return entries;
    std::istringstream s(line);
    std::string key;
    s >> key;
    std::string rest;
    std::getline(s, rest);
    entries.emplace_back(key, rest);
  }
  throw IoError(std::string(what) + ": header not terminated");
}

template <typename... T>
void parse_fields(const std::string& text, const std::string& key, T&... out) {
  std::istringstream s(text);
  ((s >> out), ...);
  std::string extra;
  if (s.fail() || (s >> extra)) throw IoError("malformed value for '" + key + "'");
}

Vec3 parse_vec(const std::string& text, const std::string& key) {
  double x, y, z;
  parse_fields(text, key, x, y, z);
  return {x, y, z};
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

}  // namespace

void write_atomically(const std::filesystem::path& path,
                      const std::function<void(std::ostream&)>& writer) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  try {
    {
      std::ofstream out = open_out(tmp);
      writer(out);
      out.flush();
      if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
}

// ---------------------------------------------------------------------------

TransientCube make_cube(TransientImage image, const SceneConfig& scene) {
  if (!image.compatible_with(scene)) {
    throw DimensionMismatch("cube: image does not match the scene dimensions");
  }
  return {std::move(image), scene.axis, scene.lasers, scene.detectors, scene.detector_grid,
          scene.detector_footprint};
}

SceneConfig scene_from_cube(const TransientCube& cube, const SceneConfig& base) {
  SceneConfig scene = base;
  scene.lasers = cube.lasers;
  scene.detectors = cube.detectors;
  scene.detector_grid = cube.detector_grid;
  scene.detector_footprint = cube.detector_footprint;
  scene.axis = cube.axis;
  return scene;
}

void write_cube(std::ostream& out, const TransientCube& cube) {
  const TransientImage& img = cube.image;
  out << "NLOS-TRANSIENT-CUBE 1\n"
      << "endianness little\n"
      << "dims " << img.n_lasers() << ' ' << img.n_detectors() << ' ' << img.n_bins() << '\n'
      << std::setprecision(17) << "t0 " << cube.axis.t0 << '\n'
      << "dt " << cube.axis.dt << '\n'
      << "grid " << cube.detector_grid[0] << ' ' << cube.detector_grid[1] << '\n';
  for (const Vec3& l : cube.lasers) out << "laser " << format_vec(l) << '\n';
  for (const Vec3& d : cube.detectors) out << "detector " << format_vec(d) << '\n';
  for (const Vec3& o : cube.detector_footprint) out << "footprint " << format_vec(o) << '\n';
  out << "end_header\n";
  write_f64(out, img.values());
}

TransientCube read_cube(std::istream& in) {
  auto header = read_header(in, "NLOS-TRANSIENT-CUBE 1", "cube");
  TransientCube cube;
  int nl = -1, nd = -1, nb = -1;
  bool have_t0 = false, have_dt = false;
  for (const auto& [key, value] : header) {
    if (key == "endianness") {
      std::string e;
      parse_fields(value, key, e);
      if (e != "little") throw IoError("cube: unsupported endianness " + e);
    } else if (key == "dims") {
      parse_fields(value, key, nl, nd, nb);
    } else if (key == "t0") {
      parse_fields(value, key, cube.axis.t0);
      have_t0 = true;
    } else if (key == "dt") {
      parse_fields(value, key, cube.axis.dt);
      have_dt = true;
    } else if (key == "grid") {
      parse_fields(value, key, cube.detector_grid[0], cube.detector_grid[1]);
    } else if (key == "laser") {
      cube.lasers.push_back(parse_vec(value, key));
    } else if (key == "detector") {
      cube.detectors.push_back(parse_vec(value, key));
    } else if (key == "footprint") {
      cube.detector_footprint.push_back(parse_vec(value, key));
    } else {
      throw IoError("cube: unknown header key '" + key + "'");
    }
  }
  if (nl < 1 || nd < 1 || nb < 1 || !have_t0 || !have_dt) {
    throw IoError("cube: incomplete header");
  }
  if (int(cube.lasers.size()) != nl || int(cube.detectors.size()) != nd) {
    throw IoError("cube: laser/detector count disagrees with dims");
  }
  cube.axis.n_bins = nb;
  cube.image = TransientImage(nl, nd, nb);
  read_f64(in, cube.image.values(), "cube");
  return cube;
}

void save_cube(const std::filesystem::path& path, const TransientCube& cube) {
  write_atomically(path, [&](std::ostream& out) { write_cube(out, cube); });
}

TransientCube load_cube(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_cube(in);
}

// ---------------------------------------------------------------------------

void write_obj(std::ostream& out, const TriangleMesh& mesh) {
  out << std::setprecision(17);
  for (const Vec3& v : mesh.vertices()) out << "v " << format_vec(v) << '\n';
  for (const Triangle& t : mesh.triangles()) {
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
}

TriangleMesh read_obj(std::istream& in) {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream s(line);
    std::string tag;
    if (!(s >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(s >> x >> y >> z)) throw IoError("obj: bad vertex on line " + std::to_string(line_no));
      vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> face;
      std::string token;
      while (s >> token) {
        // "7", "7/1" and "7//3" all name vertex 7.
        int index = 0;
        try {
          index = std::stoi(token.substr(0, token.find('/')));
        } catch (const std::logic_error&) {
          throw IoError("obj: bad face index on line " + std::to_string(line_no));
        }
        if (index < 0) index = int(vertices.size()) + index + 1;
        face.push_back(index - 1);
      }
      if (face.size() < 3) throw IoError("obj: short face on line " + std::to_string(line_no));
      for (std::size_t i = 1; i + 1 < face.size(); ++i) {
        triangles.push_back({face[0], face[i], face[i + 1]});
      }
    }
  }
  try {
    return TriangleMesh(std::move(vertices), std::move(triangles));
  } catch (const std::logic_error& e) {
    throw IoError(std::string("obj: ") + e.what());
  }
}

void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  write_atomically(path, [&](std::ostream& out) { write_obj(out, mesh); });
}

TriangleMesh load_obj(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_obj(in);
}

// ---------------------------------------------------------------------------

void write_blobs(std::ostream& out, const BlobSet& blobs) {
  out << "# x y z sigma\n" << std::setprecision(17);
  for (const Blob& b : blobs) out << format_vec(b.center) << ' ' << b.sigma << '\n';
}

BlobSet read_blobs(std::istream& in) {
  BlobSet blobs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream s(line);
    double x, y, z, sigma;
    if (!(s >> x)) continue;
    std::string extra;
    if (!(s >> y >> z >> sigma) || (s >> extra)) {
      throw IoError("blobs: malformed line " + std::to_string(line_no));
    }
    if (!(sigma > 0.0)) throw IoError("blobs: non-positive sigma on line " + std::to_string(line_no));
    blobs.push_back({Vec3(x, y, z), sigma});
  }
  return blobs;
}

void save_blobs(const std::filesystem::path& path, const BlobSet& blobs) {
  write_atomically(path, [&](std::ostream& out) { write_blobs(out, blobs); });
}

BlobSet load_blobs(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_blobs(in);
}

// ---------------------------------------------------------------------------

std::vector<Vec3> make_detector_grid(const Plane& wall, const Vec3& center, int nx, int ny,
                                     double width, double height) {
  if (nx < 1 || ny < 1) throw ConfigError("detector grid needs positive dimensions");
  Vec3 n = wall.normal.normalized();
  // In-plane axes; for the z = 0 wall these are +x and +y.
  Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  Vec3 u = (helper - helper.dot(n) * n).normalized();
  Vec3 v = n.cross(u);
  std::vector<Vec3> out;
  out.reserve(std::size_t(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      double a = ((i + 0.5) / nx - 0.5) * width;
      double b = ((j + 0.5) / ny - 0.5) * height;
      out.push_back(center + a * u + b * v);
    }
  }
  return out;
}

SceneConfig parse_scene_config(std::istream& in) {
  SceneConfig scene;
  bool grid_requested = false;
  int gx = 0, gy = 0;
  double gw = 0, gh = 0;
  Vec3 grid_center = Vec3::Zero();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    auto eq = line.find('=');
    std::istringstream probe(line);
    std::string first;
    if (!(probe >> first)) continue;
    if (eq == std::string::npos) {
      throw ConfigError("scene config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::istringstream ks(line.substr(0, eq));
    std::string key;
    ks >> key;
    std::string value = line.substr(eq + 1);
    try {
      if (key == "wall_point") {
        scene.wall.point = parse_vec(value, key);
      } else if (key == "wall_normal") {
        scene.wall.normal = parse_vec(value, key).normalized();
      } else if (key == "laser") {
        scene.lasers.push_back(parse_vec(value, key));
      } else if (key == "detector") {
        scene.detectors.push_back(parse_vec(value, key));
      } else if (key == "detector_footprint") {
        scene.detector_footprint.push_back(parse_vec(value, key));
      } else if (key == "detector_shape") {
        parse_fields(value, key, scene.detector_grid[0], scene.detector_grid[1]);
      } else if (key == "detector_grid") {
        parse_fields(value, key, gx, gy, gw, gh);
        grid_requested = true;
      } else if (key == "detector_center") {
        grid_center = parse_vec(value, key);
      } else if (key == "t0") {
        parse_fields(value, key, scene.axis.t0);
      } else if (key == "dt") {
        parse_fields(value, key, scene.axis.dt);
      } else if (key == "bins") {
        parse_fields(value, key, scene.axis.n_bins);
      } else if (key == "brdf") {
        std::istringstream s(value);
        std::string kind;
        s >> kind;
        if (kind == "lambertian") {
          Lambertian l;
          if (!(s >> l.albedo)) l = Lambertian{};
          scene.brdf = l;
        } else if (kind == "blinn") {
          BlinnMetal b;
          if (s >> b.roughness) {
            if (!(s >> b.reflectance)) b.reflectance = 1.0;
          } else {
            b = BlinnMetal{};
          }
          scene.brdf = b;
        } else {
          throw ConfigError("unknown brdf '" + kind + "'");
        }
      } else if (key == "volume_min") {
        scene.volume.box.min = parse_vec(value, key);
      } else if (key == "volume_max") {
        scene.volume.box.max = parse_vec(value, key);
      } else if (key == "volume_resolution") {
        auto& r = scene.volume.resolution;
        parse_fields(value, key, r[0], r[1], r[2]);
      } else {
        throw ConfigError("unknown key '" + key + "'");
      }
    } catch (const IoError& e) {
      throw ConfigError("scene config line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("scene config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (grid_requested) {
    if (!scene.detectors.empty()) {
      throw ConfigError("scene config: detector and detector_grid are exclusive");
    }
    scene.detectors = make_detector_grid(scene.wall, grid_center, gx, gy, gw, gh);
    scene.detector_grid = {gx, gy};
  }
  scene.validate();
  return scene;
}

SceneConfig load_scene_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_scene_config(in);
}

void write_scene_config(std::ostream& out, const SceneConfig& scene) {
  out << std::setprecision(17);
  out << "wall_point = " << format_vec(scene.wall.point) << '\n';
  out << "wall_normal = " << format_vec(scene.wall.normal) << '\n';
  for (const Vec3& l : scene.lasers) out << "laser = " << format_vec(l) << '\n';
  for (const Vec3& d : scene.detectors) out << "detector = " << format_vec(d) << '\n';
  out << "detector_shape = " << scene.detector_grid[0] << ' ' << scene.detector_grid[1] << '\n';
  for (const Vec3& o : scene.detector_footprint) {
    out << "detector_footprint = " << format_vec(o) << '\n';
  }
  out << "t0 = " << scene.axis.t0 << '\n';
  out << "dt = " << scene.axis.dt << '\n';
  out << "bins = " << scene.axis.n_bins << '\n';
  if (const auto* l = std::get_if<Lambertian>(&scene.brdf)) {
    out << "brdf = lambertian " << l->albedo << '\n';
  } else {
    const auto& b = std::get<BlinnMetal>(scene.brdf);
    out << "brdf = blinn " << b.roughness << ' ' << b.reflectance << '\n';
  }
  out << "volume_min = " << format_vec(scene.volume.box.min) << '\n';
  out << "volume_max = " << format_vec(scene.volume.box.max) << '\n';
  const auto& r = scene.volume.resolution;
  out << "volume_resolution = " << r[0] << ' ' << r[1] << ' ' << r[2] << '\n';
}

// ---------------------------------------------------------------------------

namespace {

// Binds every optimizer setting to its key so reading and writing share one
// list.
template <typename Visitor>
void visit_optimizer_fields(OptimizerConfig& c, Visitor&& visit) {
  visit("sigma0", c.sigma0);
  visit("sigma_max", c.sigma_max);
  visit("eta", c.eta);
  visit("k_neighbors", c.k_neighbors);
  visit("c_thresh_ratio", c.c_thresh_ratio);
  visit("split_offset", c.split_offset);
  visit("fd_position_min", c.fd_position_min);
  visit("fd_position_rel", c.fd_position_rel);
  visit("fd_log_sigma", c.fd_log_sigma);
  visit("lm_max_iterations", c.lm.max_iterations);
  visit("lm_initial_damping", c.lm.initial_damping);
  visit("lm_damping_increase", c.lm.damping_increase);
  visit("lm_damping_decrease", c.lm.damping_decrease);
  visit("lm_max_damping", c.lm.max_damping);
  visit("lm_relative_tolerance", c.lm.relative_tolerance);
  visit("lm_absolute_tolerance", c.lm.absolute_tolerance);
  visit("seed", c.seed);
  visit("max_outer_iterations", c.max_outer_iterations);
  visit("pdf_resolution", c.pdf_resolution);
  visit("pdf_sharpen", c.pdf_sharpen);
  visit("pdf_power", c.pdf_power);
  visit("pdf_floor", c.pdf_floor);
}

}  // namespace

OptimizerConfig parse_optimizer_config(std::istream& in, OptimizerConfig base) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream probe(line);
    std::string first;
    if (!(probe >> first)) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("optimizer config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::istringstream ks(line.substr(0, eq));
    std::string key;
    ks >> key;
    std::string value = line.substr(eq + 1);
    bool found = false;
    visit_optimizer_fields(base, [&](const char* name, auto& field) {
      if (key != name) return;
      found = true;
      try {
        if constexpr (std::is_same_v<std::decay_t<decltype(field)>, bool>) {
          std::string word;
          parse_fields(value, key, word);
          if (word == "true" || word == "1") {
            field = true;
          } else if (word == "false" || word == "0") {
            field = false;
          } else {
            throw IoError("expected true or false for '" + key + "'");
          }
        } else {
          parse_fields(value, key, field);
        }
      } catch (const IoError& e) {
        throw ConfigError("optimizer config line " + std::to_string(line_no) + ": " + e.what());
      }
    });
    if (!found) throw ConfigError("optimizer config: unknown key '" + key + "'");
  }
  base.validate();
  return base;
}

OptimizerConfig load_optimizer_config(const std::filesystem::path& path, OptimizerConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_optimizer_config(in, base);
}

void write_optimizer_config(std::ostream& out, const OptimizerConfig& config) {
  OptimizerConfig copy = config;
  out << std::setprecision(17) << std::boolalpha;
  visit_optimizer_fields(copy, [&](const char* name, auto& field) {
    out << name << " = " << field << '\n';
  });
}

// ---------------------------------------------------------------------------

void write_density(std::ostream& out, const DensityVolume& volume) {
  const auto& r = volume.spec.resolution;
  out << "NLOS-DENSITY-VOLUME 1\n"
      << "endianness little\n"
      << "resolution " << r[0] << ' ' << r[1] << ' ' << r[2] << '\n'
      << "box_min " << format_vec(volume.spec.box.min) << '\n'
      << "box_max " << format_vec(volume.spec.box.max) << '\n'
      << "end_header\n";
  write_f64(out, volume.values);
}

DensityVolume read_density(std::istream& in) {
  auto header = read_header(in, "NLOS-DENSITY-VOLUME 1", "density");
  VolumeSpec spec;
  for (const auto& [key, value] : header) {
    if (key == "endianness") {
      std::string e;
      parse_fields(value, key, e);
      if (e != "little") throw IoError("density: unsupported endianness " + e);
    } else if (key == "resolution") {
      parse_fields(value, key, spec.resolution[0], spec.resolution[1], spec.resolution[2]);
    } else if (key == "box_min") {
      spec.box.min = parse_vec(value, key);
    } else if (key == "box_max") {
      spec.box.max = parse_vec(value, key);
    } else {
      throw IoError("density: unknown header key '" + key + "'");
    }
  }
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw IoError(std::string("density: ") + e.what());
  }
  DensityVolume volume(spec);
  read_f64(in, volume.values, "density");
  return volume;
}

void save_density(const std::filesystem::path& path, const DensityVolume& volume) {
  write_atomically(path, [&](std::ostream& out) { write_density(out, volume); });
}

DensityVolume load_density(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_density(in);
}

void save_pgm(const std::filesystem::path& path, const std::vector<double>& pixels, int width,
              int height, double lo, double hi) {
  if (width < 1 || height < 1 || pixels.size() != std::size_t(width) * height) {
    throw DimensionMismatch("pgm: pixel count does not match width x height");
  }
  write_atomically(path, [&](std::ostream& out) {
    out << "P5\n" << width << ' ' << height << "\n255\n";
    double span = hi > lo ? hi - lo : 1.0;
    std::vector<unsigned char> bytes(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      double p = pixels[i];
      if (std::isnan(p)) {
        bytes[i] = 0;
        continue;
      }
      double t = std::clamp((p - lo) / span, 0.0, 1.0);
      bytes[i] = static_cast<unsigned char>(std::lround(t * 255.0));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  });
}

}  // namespace nlos
