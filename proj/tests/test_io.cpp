#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nlos/io.hpp"
#include "nlos/renderer.hpp"
#include "support.hpp"

using namespace nlos;
using nlos::testing::small_scene;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("nlos_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("transient cube round trip") {
  SceneConfig scene = small_scene(2, 3, 40, 0.8);
  scene.detector_footprint = {Vec3(-1, 0, 0), Vec3(1, 0, 0)};
  TransientImage img(2, 9, 40);
  for (std::size_t i = 0; i < img.size(); ++i) img.values()[i] = 0.1 * double(i) - 3.0;
  TransientCube cube = make_cube(img, scene);
  std::stringstream buf;
  write_cube(buf, cube);
  TransientCube back = read_cube(buf);
  CHECK(std::equal(img.values().begin(), img.values().end(), back.image.values().begin()));
  CHECK(back.axis.t0 == scene.axis.t0);
  CHECK(back.axis.dt == scene.axis.dt);
  CHECK(back.lasers == scene.lasers);
  CHECK(back.detectors == scene.detectors);
  CHECK(back.detector_grid == scene.detector_grid);
  CHECK(back.detector_footprint == scene.detector_footprint);
  SceneConfig rebuilt = scene_from_cube(back, scene);
  CHECK_NOTHROW(rebuilt.validate());
  CHECK_THROWS_AS(make_cube(TransientImage(1, 1, 1), scene), DimensionMismatch);
}

TEST_CASE("malformed cubes are rejected") {
  auto reject = [](const std::string& text) {
    std::istringstream in(text);
    CHECK_THROWS_AS(read_cube(in), IoError);
  };
  reject("");
  reject("NOT-A-CUBE 1\nend_header\n");
  reject("NLOS-TRANSIENT-CUBE 1\nendianness big\ndims 1 1 1\nt0 0\ndt 1\nlaser 0 0 0\ndetector 0 0 0\nend_header\n");
  reject("NLOS-TRANSIENT-CUBE 1\ndims 1 1 1\nt0 0\ndt 1\nlaser 0 0 0\nend_header\n");
  reject("NLOS-TRANSIENT-CUBE 1\ndims 1 1 1\nt0 0\nlaser 0 0 0\ndetector 0 0 0\nend_header\n");
  reject("NLOS-TRANSIENT-CUBE 1\ndims 1 1 1\nt0 0\ndt 1\nlaser 0 0 0\ndetector 0 0 0\nbogus 1\nend_header\n");
  // Truncated payload.
  reject("NLOS-TRANSIENT-CUBE 1\ndims 1 1 2\nt0 0\ndt 1\nlaser 0 0 0\ndetector 0 0 0\nend_header\n1234567");
}

TEST_CASE("OBJ round trip and parsing") {
  TriangleMesh mesh = nlos::testing::unit_triangle(Vec3(1, 2, 3));
  std::stringstream buf;
  write_obj(buf, mesh);
  TriangleMesh back = read_obj(buf);
  CHECK(back.vertices() == mesh.vertices());
  CHECK(back.triangles() == mesh.triangles());

  std::istringstream quad("# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 3/1 -1/1\n");
  TriangleMesh fan = read_obj(quad);
  CHECK(fan.n_triangles() == 2);
  CHECK(fan.total_area() == doctest::Approx(1.0));

  std::istringstream bad_index("v 0 0 0\nf 1 2 3\n");
  CHECK_THROWS_AS(read_obj(bad_index), IoError);
  std::istringstream bad_number("v 0 zero 0\n");
  CHECK_THROWS_AS(read_obj(bad_number), IoError);
}

TEST_CASE("blob files") {
  BlobSet blobs{{Vec3(1.5, -2, 40), 3.25}, {Vec3(0.1, 0.2, 0.3), 1e-3}};
  std::stringstream buf;
  write_blobs(buf, blobs);
  BlobSet back = read_blobs(buf);
  REQUIRE(back.size() == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(back[i].center == blobs[i].center);
    CHECK(back[i].sigma == blobs[i].sigma);
  }
  std::istringstream commented("# x y z sigma\n\n1 2 3 4\n");
  CHECK(read_blobs(commented).size() == 1);
  std::istringstream negative("1 2 3 -4\n");
  CHECK_THROWS_AS(read_blobs(negative), IoError);
  std::istringstream short_line("1 2 3\n");
  CHECK_THROWS_AS(read_blobs(short_line), IoError);
}

TEST_CASE("scene description round trip") {
  SceneConfig scene = small_scene(2, 3, 40, 0.8);
  scene.brdf = BlinnMetal{0.2, 0.8};
  scene.detector_footprint = {Vec3(0, 1, 0)};
  std::stringstream buf;
  write_scene_config(buf, scene);
  SceneConfig back = parse_scene_config(buf);
  CHECK(back.lasers == scene.lasers);
  CHECK(back.detectors == scene.detectors);
  CHECK(back.detector_grid == scene.detector_grid);
  CHECK(back.detector_footprint == scene.detector_footprint);
  CHECK(back.axis.t0 == scene.axis.t0);
  CHECK(back.axis.n_bins == scene.axis.n_bins);
  CHECK(back.volume.resolution == scene.volume.resolution);
  CHECK(describe(back.brdf) == describe(scene.brdf));
}

TEST_CASE("scene description with a generated grid") {
  std::istringstream in(
      "laser = 45 0 0\n"
      "detector_grid = 4 2 80 40\n"
      "t0 = 80\ndt = 0.4\nbins = 256\n"
      "brdf = lambertian 0.5\n");
  SceneConfig scene = parse_scene_config(in);
  CHECK(scene.n_detectors() == 8);
  CHECK(scene.detectors[0] == Vec3(-30, -10, 0));
  CHECK(scene.detectors[7] == Vec3(30, 10, 0));
  CHECK(std::get<Lambertian>(scene.brdf).albedo == 0.5);

  auto reject = [](const std::string& text) {
    std::istringstream s(text);
    CHECK_THROWS_AS(parse_scene_config(s), ConfigError);
  };
  reject("laser = 45 0 0\ndetector = 0 0 0\nbins = 0\n");
  reject("laser = 45 0 5\ndetector = 0 0 0\n");
  reject("laser = 45 0 0\ndetector = 0 0 0\nunknown_key = 3\n");
  reject("laser = 45 0 0\ndetector = 0 0 0\ndt = fast\n");
  reject("detector = 0 0 0\n");
}

TEST_CASE("optimizer settings round trip") {
  OptimizerConfig config;
  config.eta = 1.02;
  config.sigma0 = 2.0;
  config.seed = 99;
  config.lm.max_iterations = 7;
  config.pdf_sharpen = false;
  std::stringstream buf;
  write_optimizer_config(buf, config);
  OptimizerConfig back = parse_optimizer_config(buf);
  CHECK(back.eta == 1.02);
  CHECK(back.sigma0 == 2.0);
  CHECK(back.seed == 99);
  CHECK(back.lm.max_iterations == 7);
  CHECK(!back.pdf_sharpen);

  std::istringstream partial("eta = 1.1\n");
  OptimizerConfig merged = parse_optimizer_config(partial, config);
  CHECK(merged.eta == 1.1);
  CHECK(merged.seed == 99);
  std::istringstream bad("eta = 0.5\n");
  CHECK_THROWS_AS(parse_optimizer_config(bad), ConfigError);
}

TEST_CASE("density volume round trip") {
  VolumeSpec spec;
  spec.resolution = {3, 4, 5};
  DensityVolume vol(spec);
  for (std::size_t i = 0; i < vol.values.size(); ++i) vol.values[i] = double(i) * 0.5 - 7;
  std::stringstream buf;
  write_density(buf, vol);
  DensityVolume back = read_density(buf);
  CHECK(back.spec.resolution == spec.resolution);
  CHECK(back.spec.box.min == spec.box.min);
  CHECK(back.values == vol.values);
}

TEST_CASE("atomic writes leave nothing behind on failure") {
  fs::path dir = scratch_dir("atomic");
  fs::path target = dir / "out.txt";
  write_atomically(target, [](std::ostream& out) { out << "first"; });
  CHECK_THROWS(write_atomically(target, [](std::ostream& out) {
    out << "partial";
    throw std::runtime_error("writer failed");
  }));
  std::ifstream in(target);
  std::string content;
  in >> content;
  CHECK(content == "first");
  int entries = 0;
  for (auto& e : fs::directory_iterator(dir)) entries += e.is_regular_file();
  CHECK(entries == 1);
  CHECK_THROWS_AS(load_cube(dir / "missing.cube"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("PGM output") {
  fs::path dir = scratch_dir("pgm");
  fs::path path = dir / "depth.pgm";
  save_pgm(path, {0.0, 1.0, std::nan(""), 0.5}, 2, 2, 0.0, 1.0);
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  int w, h, maxv;
  in >> magic >> w >> h >> maxv;
  in.get();
  unsigned char px[4];
  in.read(reinterpret_cast<char*>(px), 4);
  CHECK(magic == "P5");
  CHECK(w == 2);
  CHECK(h == 2);
  CHECK(int(px[0]) == 0);
  CHECK(int(px[1]) == 255);
  CHECK(int(px[2]) == 0);
  CHECK(std::abs(int(px[3]) - 128) <= 1);
  fs::remove_all(dir);
}
