#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>
#include <openssl/evp.h>

#include "nlos/backprojection.hpp"
#include "nlos/datasets.hpp"
#include "nlos/io.hpp"
#include "nlos/optimizer.hpp"
#include "nlos/renderer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace nlos;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kConfig = 3, kIo = 4, kDimension = 5 };

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string() + " for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buffer(1 << 16);
  while (in) {
    in.read(buffer.data(), std::streamsize(buffer.size()));
    EVP_DigestUpdate(ctx, buffer.data(), std::size_t(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  }
  return hex.str();
}

json scene_json(const SceneConfig& scene) {
  std::ostringstream text;
  write_scene_config(text, scene);
  return text.str();
}

// Collects provenance while a command runs and writes it next to the outputs.
struct Manifest {
  std::string command;
  json config = json::object();
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  std::optional<std::uint64_t> seed;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write(const fs::path& path) const {
    json j;
    j["command"] = command;
    j["version"] = NLOS_VERSION;
    j["config"] = config;
    j["seed"] = seed ? json(*seed) : json(nullptr);
    auto digests = [](const std::vector<fs::path>& files) {
      json list = json::array();
      for (const auto& f : files) list.push_back({{"path", f.string()}, {"sha256", sha256_file(f)}});
      return list;
    };
    j["inputs"] = digests(inputs);
    j["outputs"] = digests(outputs);
    j["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    j["finished_utc"] = stamp;
    write_atomically(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
  }
};

fs::path manifest_path(const fs::path& output) {
  fs::path p = output;
  p += ".manifest.json";
  return p;
}

// Scene from --scene or --preset; a preset also supplies ground truth.
struct SceneSource {
  std::string scene_path;
  std::string preset;

  void add_to(CLI::App* app) {
    auto* s = app->add_option("--scene", scene_path, "Scene description (key = value file)");
    auto* p = app->add_option("--preset", preset,
                              "Built-in scene preset instead of --scene");
    s->excludes(p);
    p->excludes(s);
  }

  SceneConfig load(Manifest& m) const {
    if (!scene_path.empty()) {
      m.inputs.push_back(scene_path);
      m.config["scene_file"] = scene_path;
      return load_scene_config(scene_path);
    }
    if (!preset.empty()) {
      m.config["preset"] = preset;
      return make_standard_scene(preset).scene;
    }
    return {};
  }
};

TriangleMesh load_geometry(const std::string& mesh_path, const std::string& blob_path,
                           const SceneConfig& scene, Manifest& m) {
  if (!mesh_path.empty()) {
    m.inputs.push_back(mesh_path);
    return load_obj(mesh_path);
  }
  m.inputs.push_back(blob_path);
  return extract_mesh(load_blobs(blob_path), scene.volume);
}

void dump_slices(const fs::path& dir, const TransientImage& image, const SceneConfig& scene,
                 int step, Manifest& m) {
  const int nx = scene.detector_grid[0], ny = scene.detector_grid[1];
  if (nx * ny != scene.n_detectors() || nx == 0) {
    throw ConfigError("--slices needs a rectangular detector grid");
  }
  fs::create_directories(dir);
  double hi = image.max();
  for (int l = 0; l < image.n_lasers(); ++l) {
    for (int k = 0; k < image.n_bins(); k += step) {
      std::vector<double> pixels(std::size_t(nx) * ny);
      for (int d = 0; d < scene.n_detectors(); ++d) pixels[d] = image.at(l, d, k);
      char name[64];
      std::snprintf(name, sizeof name, "laser%d_bin%04d.pgm", l, k);
      save_pgm(dir / name, pixels, nx, ny, 0.0, hi);
      m.outputs.push_back(dir / name);
    }
  }
}

TransientCube load_input_cube(const std::string& path, Manifest& m) {
  m.inputs.push_back(path);
  return load_cube(path);
}

void write_run_log(const fs::path& path, const RunRecord& record) {
  write_atomically(path, [&](std::ostream& out) {
    out << "iteration\tphase\tchoice\tcost_before\tcost_after\tblobs\tseconds\n"
        << std::setprecision(17);
    for (const RunStep& s : record.steps) {
      out << s.iteration << '\t' << s.phase << '\t' << (s.choice.empty() ? "-" : s.choice) << '\t'
          << s.cost_before << '\t' << s.cost_after << '\t' << s.blobs << '\t' << s.seconds << '\n';
    }
  });
}

void write_state(const fs::path& dir, const ReconstructState& state) {
  char name[64];
  std::snprintf(name, sizeof name, "iter_%04d.blobs", state.iteration);
  save_blobs(dir / name, state.blobs);
  std::ostringstream rng;
  rng << state.rng;
  json j{{"iteration", state.iteration},
         {"cost", state.cost},
         {"initial_cost", state.initial_cost},
         {"blobs", name},
         {"rng", rng.str()}};
  write_atomically(dir / "state.json", [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

ReconstructState read_state(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    in >> j;
    ReconstructState state;
    state.iteration = j.at("iteration").get<int>();
    state.cost = j.at("cost").get<double>();
    state.initial_cost = j.at("initial_cost").get<double>();
    state.blobs = load_blobs(path.parent_path() / j.at("blobs").get<std::string>());
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> state.rng;
    if (!rng) throw IoError("corrupt generator state");
    return state;
  } catch (const json::exception& e) {
    throw IoError("state file " + path.string() + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transient rendering and reconstruction of hidden geometry"};
  app.set_version_flag("--version", std::string(NLOS_VERSION));
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads,
                 "Worker thread cap; 0 uses NLOS_THREADS or the OpenMP default")
      ->capture_default_str();

  Manifest manifest;
  std::function<void()> action;

  // render / reference-render
  SceneSource render_scene;
  std::string mesh_path, blob_path, render_out, slices_dir;
  bool no_filter = false, no_shadows = false;
  int reference_level = -1, slice_step = 1;
  auto* render_cmd = app.add_subcommand("render", "Render a transient cube from a mesh or blob file");
  render_scene.add_to(render_cmd);
  auto* mesh_opt = render_cmd->add_option("--mesh", mesh_path, "Triangle mesh (OBJ)");
  auto* blob_opt = render_cmd->add_option("--blobs", blob_path, "Blob file (x y z sigma per line)");
  mesh_opt->excludes(blob_opt);
  render_cmd->add_option("--out", render_out, "Output transient cube")->required();
  render_cmd->add_flag("--no-filter", no_filter, "Bin each triangle at its centroid path length");
  render_cmd->add_flag("--no-shadows", no_shadows, "Skip shadow tests");
  render_cmd->add_option("--reference-level", reference_level,
                         "Use the quadrature reference with 4^N sub-triangles (-1 = off)")
      ->capture_default_str();
  render_cmd->add_option("--slices", slices_dir, "Directory for per-bin PGM images");
  render_cmd->add_option("--slice-step", slice_step, "Bin stride for --slices")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  render_cmd->callback([&] {
    action = [&] {
      manifest.command = "render";
      if (mesh_path.empty() && blob_path.empty()) throw ConfigError("render needs --mesh or --blobs");
      SceneConfig scene = render_scene.load(manifest);
      if (render_scene.scene_path.empty() && render_scene.preset.empty()) {
        throw ConfigError("render needs --scene or --preset");
      }
      TriangleMesh mesh = load_geometry(mesh_path, blob_path, scene, manifest);
      TransientImage image = reference_level >= 0
                                 ? reference_render(scene, mesh, reference_level)
                                 : render(scene, mesh, {!no_filter, !no_shadows});
      manifest.config["filter"] = !no_filter;
      manifest.config["shadows"] = !no_shadows;
      manifest.config["reference_level"] = reference_level;
      manifest.config["scene"] = scene_json(scene);
      save_cube(render_out, make_cube(std::move(image), scene));
      manifest.outputs.push_back(render_out);
      if (!slices_dir.empty()) {
        dump_slices(slices_dir, load_cube(render_out).image, scene, slice_step, manifest);
      }
      manifest.write(manifest_path(render_out));
    };
  });

  SceneSource ref_scene;
  std::string ref_mesh, ref_blobs, ref_out;
  int ref_level = 3;
  auto* ref_cmd = app.add_subcommand("reference-render", "Slow quadrature reference rendering");
  ref_scene.add_to(ref_cmd);
  auto* rm = ref_cmd->add_option("--mesh", ref_mesh, "Triangle mesh (OBJ)");
  auto* rb = ref_cmd->add_option("--blobs", ref_blobs, "Blob file");
  rm->excludes(rb);
  ref_cmd->add_option("--out", ref_out, "Output transient cube")->required();
  ref_cmd->add_option("--level", ref_level, "Subdivision level (4^level pieces per triangle)")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  ref_cmd->callback([&] {
    action = [&] {
      manifest.command = "reference-render";
      if (ref_mesh.empty() && ref_blobs.empty()) throw ConfigError("need --mesh or --blobs");
      if (ref_scene.scene_path.empty() && ref_scene.preset.empty()) {
        throw ConfigError("reference-render needs --scene or --preset");
      }
      SceneConfig scene = ref_scene.load(manifest);
      TriangleMesh mesh = load_geometry(ref_mesh, ref_blobs, scene, manifest);
      manifest.config["level"] = ref_level;
      manifest.config["scene"] = scene_json(scene);
      save_cube(ref_out, make_cube(reference_render(scene, mesh, ref_level), scene));
      manifest.outputs.push_back(ref_out);
      manifest.write(manifest_path(ref_out));
    };
  });

  // backproject
  SceneSource bp_scene;
  std::string bp_cube, bp_density, bp_mesh;
  BaselineOptions bp_options;
  auto* bp_cmd = app.add_subcommand("backproject", "Ellipsoidal backprojection baseline");
  bp_scene.add_to(bp_cmd);
  bp_cmd->add_option("--cube", bp_cube, "Input transient cube")->required();
  bp_cmd->add_option("--density", bp_density, "Output density volume")->required();
  bp_cmd->add_option("--mesh", bp_mesh, "Output isosurface (OBJ)");
  bp_cmd->add_option("--iso-fraction", bp_options.iso_fraction, "Isosurface level / volume max")
      ->capture_default_str();
  bp_cmd->add_flag("!--no-sharpen", bp_options.sharpen, "Skip the Laplacian-of-Gaussian filter");
  bp_cmd->add_option("--sharpen-sigma", bp_options.sharpen_sigma, "Filter width in voxels")
      ->capture_default_str();
  bp_cmd->callback([&] {
    action = [&] {
      manifest.command = "backproject";
      SceneConfig base = bp_scene.load(manifest);
      TransientCube cube = load_input_cube(bp_cube, manifest);
      SceneConfig scene = scene_from_cube(cube, base);
      DensityVolume density = backproject(cube.image, scene, scene.volume);
      if (bp_options.sharpen) density = sharpen(density, bp_options.sharpen_sigma);
      manifest.config["iso_fraction"] = bp_options.iso_fraction;
      manifest.config["sharpen"] = bp_options.sharpen;
      manifest.config["sharpen_sigma"] = bp_options.sharpen_sigma;
      manifest.config["scene"] = scene_json(scene);
      save_density(bp_density, density);
      manifest.outputs.push_back(bp_density);
      if (!bp_mesh.empty()) {
        double peak = density.max();
        TriangleMesh mesh =
            peak > 0.0 ? density_isosurface(density, bp_options.iso_fraction * peak) : TriangleMesh{};
        save_obj(bp_mesh, mesh);
        manifest.outputs.push_back(bp_mesh);
      }
      manifest.write(manifest_path(bp_density));
    };
  });

  // reconstruct
  SceneSource rc_scene;
  std::string rc_cube, rc_config, rc_out, rc_resume;
  OptimizerConfig rc_defaults;
  std::optional<std::uint64_t> rc_seed;
  std::optional<double> rc_eta, rc_sigma0, rc_thresh;
  std::optional<int> rc_max_iter;
  bool rc_no_filter = false, rc_no_shadows = false;
  auto* rc_cmd = app.add_subcommand("reconstruct", "Fit blobs to a transient cube");
  rc_scene.add_to(rc_cmd);
  rc_cmd->add_option("--cube", rc_cube, "Reference transient cube")->required();
  rc_cmd->add_option("--config", rc_config, "Optimizer settings (key = value file)");
  rc_cmd->add_option("--out-dir", rc_out, "Directory for checkpoints, mesh and logs")->required();
  rc_cmd->add_option("--resume", rc_resume, "Continue from a state.json checkpoint");
  rc_cmd->add_option("--seed", rc_seed,
                     "Random seed (default " + std::to_string(rc_defaults.seed) + ")");
  rc_cmd->add_option("--eta", rc_eta,
                     "Regularization tolerance (default " + std::to_string(rc_defaults.eta) + ")");
  rc_cmd->add_option("--sigma0", rc_sigma0,
                     "Width of added blobs (default " + std::to_string(rc_defaults.sigma0) + ")");
  rc_cmd->add_option("--c-thresh", rc_thresh,
                     "Stop at this fraction of the initial cost (default " +
                         std::to_string(rc_defaults.c_thresh_ratio) + ")");
  rc_cmd->add_option("--max-iterations", rc_max_iter,
                     "Outer iteration cap (default " +
                         std::to_string(rc_defaults.max_outer_iterations) + ")");
  rc_cmd->add_flag("--no-filter", rc_no_filter, "Forward model without the temporal filter");
  rc_cmd->add_flag("--no-shadows", rc_no_shadows, "Forward model without shadow tests");
  rc_cmd->callback([&] {
    action = [&] {
      manifest.command = "reconstruct";
      SceneConfig base = rc_scene.load(manifest);
      TransientCube cube = load_input_cube(rc_cube, manifest);
      SceneConfig scene = scene_from_cube(cube, base);
      OptimizerConfig config;
      if (!rc_config.empty()) {
        manifest.inputs.push_back(rc_config);
        config = load_optimizer_config(rc_config);
      }
      if (rc_seed) config.seed = *rc_seed;
      if (rc_eta) config.eta = *rc_eta;
      if (rc_sigma0) config.sigma0 = *rc_sigma0;
      if (rc_thresh) config.c_thresh_ratio = *rc_thresh;
      if (rc_max_iter) config.max_outer_iterations = *rc_max_iter;
      config.validate();
      std::ostringstream resolved;
      write_optimizer_config(resolved, config);
      manifest.config["optimizer"] = resolved.str();
      manifest.config["scene"] = scene_json(scene);
      manifest.config["filter"] = !rc_no_filter;
      manifest.config["shadows"] = !rc_no_shadows;
      manifest.seed = config.seed;

      std::optional<ReconstructState> resume;
      if (!rc_resume.empty()) {
        manifest.inputs.push_back(rc_resume);
        resume = read_state(rc_resume);
        manifest.config["resumed_from_iteration"] = resume->iteration;
      }
      fs::path dir = rc_out;
      fs::create_directories(dir);
      Objective objective(cube.image, scene, {!rc_no_filter, !rc_no_shadows});
      RunRecord record = reconstruct(
          objective, config,
          [&](const ReconstructState& state, const RunRecord& partial) {
            write_state(dir, state);
            write_run_log(dir / "run.tsv", partial);
            std::cerr << "iteration " << state.iteration << ": cost " << state.cost << " ("
                      << state.cost / state.initial_cost << " of initial), " << state.blobs.size()
                      << " blobs\n";
          },
          std::move(resume));
      save_blobs(dir / "final.blobs", record.blobs);
      save_obj(dir / "final.obj", extract_mesh(record.blobs, scene.volume));
      write_run_log(dir / "run.tsv", record);
      for (const char* name : {"final.blobs", "final.obj", "run.tsv"}) {
        manifest.outputs.push_back(dir / name);
      }
      manifest.write(dir / "manifest.json");
    };
  });

  // degrade
  SceneSource dg_scene;
  std::string dg_in, dg_out;
  DegradationSpec dg_spec;
  auto* dg_cmd = app.add_subcommand("degrade", "Decimate, aggregate, blur and add Poisson noise");
  dg_scene.add_to(dg_cmd);
  dg_cmd->add_option("--cube", dg_in, "Input transient cube")->required();
  dg_cmd->add_option("--out", dg_out, "Output transient cube")->required();
  dg_cmd->add_option("--spatial", dg_spec.spatial, "Detector block size to average")
      ->capture_default_str();
  dg_cmd->add_option("--temporal", dg_spec.temporal, "Bins summed per output bin")
      ->capture_default_str();
  dg_cmd->add_option("--poisson", dg_spec.poisson_scale,
                     "Expected photon count at the image maximum (0 = no noise)")
      ->capture_default_str();
  dg_cmd->add_option("--blur", dg_spec.blur_width, "Odd temporal box width in bins")
      ->capture_default_str();
  dg_cmd->add_option("--seed", dg_spec.seed, "Noise seed")->capture_default_str();
  dg_cmd->callback([&] {
    action = [&] {
      manifest.command = "degrade";
      SceneConfig base = dg_scene.load(manifest);
      TransientCube cube = load_input_cube(dg_in, manifest);
      DegradedData out = degrade(cube.image, scene_from_cube(cube, base), dg_spec);
      manifest.config = {{"spatial", dg_spec.spatial},
                         {"temporal", dg_spec.temporal},
                         {"poisson", dg_spec.poisson_scale},
                         {"blur", dg_spec.blur_width}};
      manifest.seed = dg_spec.seed;
      save_cube(dg_out, make_cube(std::move(out.image), out.scene));
      manifest.outputs.push_back(dg_out);
      manifest.write(manifest_path(dg_out));
    };
  });

  // preprocess
  std::string pp_in, pp_out, pp_mode = "spad-background";
  PreprocessOptions pp_options;
  auto* pp_cmd = app.add_subcommand("preprocess", "Background removal and downsampling of measured data");
  pp_cmd->add_option("--cube", pp_in, "Input transient cube")->required();
  pp_cmd->add_option("--out", pp_out, "Output transient cube")->required();
  pp_cmd->add_option("--mode", pp_mode, "spad-background or none")
      ->capture_default_str()
      ->check(CLI::IsMember({"spad-background", "none"}));
  pp_cmd->add_option("--sigma", pp_options.lowpass_sigma_bins, "Lowpass width in bins")
      ->capture_default_str();
  pp_cmd->add_option("--downsample", pp_options.downsample, "Bins summed per output bin")
      ->capture_default_str();
  pp_cmd->callback([&] {
    action = [&] {
      manifest.command = "preprocess";
      pp_options.mode = pp_mode == "none" ? PreprocessMode::none : PreprocessMode::spad_background;
      TransientCube cube = load_input_cube(pp_in, manifest);
      DegradedData out = preprocess_measured(cube.image, scene_from_cube(cube, {}), pp_options);
      manifest.config = {{"mode", pp_mode},
                         {"sigma", pp_options.lowpass_sigma_bins},
                         {"downsample", pp_options.downsample}};
      TransientCube result{std::move(out.image), out.scene.axis, cube.lasers, cube.detectors,
                           cube.detector_grid, cube.detector_footprint};
      save_cube(pp_out, result);
      manifest.outputs.push_back(pp_out);
      manifest.write(manifest_path(pp_out));
    };
  });

  // metrics
  SceneSource mt_scene;
  std::string mt_candidate, mt_reference, mt_report, mt_cand_mesh, mt_gt_mesh, mt_depth_pgm;
  double mt_depth_range = 5.0;
  auto* mt_cmd = app.add_subcommand("metrics", "Compare a candidate cube with a reference");
  mt_scene.add_to(mt_cmd);
  mt_cmd->add_option("candidate", mt_candidate, "Candidate transient cube")->required();
  mt_cmd->add_option("reference", mt_reference, "Reference transient cube")->required();
  mt_cmd->add_option("--report", mt_report, "Write the report here instead of stdout");
  mt_cmd->add_option("--candidate-mesh", mt_cand_mesh, "Reconstructed mesh for depth errors");
  mt_cmd->add_option("--gt-mesh", mt_gt_mesh, "Ground-truth mesh for depth errors");
  mt_cmd->add_option("--depth-pgm", mt_depth_pgm, "Depth error image (needs both meshes)");
  mt_cmd->add_option("--depth-range", mt_depth_range, "Depth error mapped to black/white at -/+ this")
      ->capture_default_str();
  mt_cmd->callback([&] {
    action = [&] {
      manifest.command = "metrics";
      SceneConfig base = mt_scene.load(manifest);
      TransientCube cand = load_input_cube(mt_candidate, manifest);
      TransientCube ref = load_input_cube(mt_reference, manifest);
      SceneConfig scene = scene_from_cube(ref, base);
      std::optional<TriangleMesh> cm, gm;
      if (!mt_cand_mesh.empty() || !mt_gt_mesh.empty()) {
        if (mt_cand_mesh.empty() || mt_gt_mesh.empty()) {
          throw ConfigError("depth errors need both --candidate-mesh and --gt-mesh");
        }
        manifest.inputs.push_back(mt_cand_mesh);
        manifest.inputs.push_back(mt_gt_mesh);
        cm = load_obj(mt_cand_mesh);
        gm = load_obj(mt_gt_mesh);
      }
      MetricReport report = compute_metrics(cand.image, ref.image, scene, cm ? &*cm : nullptr,
                                            gm ? &*gm : nullptr);
      std::ostringstream text;
      text << std::setprecision(10) << "metric\tvalue\n";
      text << "psnr_db\t" << (std::isinf(report.psnr) ? std::string("inf") : std::to_string(report.psnr))
           << '\n';
      text << "rel_l2_percent\t" << report.rel_l2 << '\n';
      if (report.depth) {
        text << "depth_mean_abs_error\t" << report.depth->mean_abs_error << '\n';
        text << "depth_coverage\t" << report.depth->coverage << '\n';
      }
      for (const auto& note : report.notes) text << "note\t" << note << '\n';
      if (!mt_report.empty()) {
        write_atomically(mt_report, [&](std::ostream& out) { out << text.str(); });
        manifest.outputs.push_back(mt_report);
      } else {
        std::cout << text.str();
      }
      if (!mt_depth_pgm.empty()) {
        if (!report.depth) throw ConfigError("--depth-pgm needs both meshes");
        save_pgm(mt_depth_pgm, report.depth->error, scene.detector_grid[0], scene.detector_grid[1],
                 -mt_depth_range, mt_depth_range);
        manifest.outputs.push_back(mt_depth_pgm);
      }
      fs::path where = mt_report.empty() ? fs::path(mt_candidate + ".metrics") : fs::path(mt_report);
      manifest.write(manifest_path(where));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (threads <= 0) {
    if (const char* env = std::getenv("NLOS_THREADS")) threads = std::atoi(env);
  }
  if (threads > 0) omp_set_num_threads(threads);

  try {
    action();
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const DimensionMismatch& e) {
    std::cerr << "dimension mismatch: " << e.what() << '\n';
    return kDimension;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}
