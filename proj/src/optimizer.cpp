#include "nlos/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include <Eigen/Cholesky>

namespace nlos {
namespace {

// Sequential sum of squares; every cost in this file goes through it so
// equal residuals always give bit-equal costs.
double sum_squares(const double* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += v[i] * v[i];
  return s;
}

double sum_squares(const Eigen::VectorXd& v) { return sum_squares(v.data(), std::size_t(v.size())); }

}  // namespace

Objective::Objective(TransientImage reference, SceneConfig scene, RenderOptions render)
    : Objective(std::move(reference), scene, scene.volume, render) {}

Objective::Objective(TransientImage reference, SceneConfig scene, VolumeSpec grid,
                     RenderOptions render)
    : reference_(std::move(reference)),
      scene_(std::move(scene)),
      grid_(grid),
      render_(render) {
  if (!reference_.compatible_with(scene_)) {
    throw DimensionMismatch("objective: reference image does not match the scene");
  }
  reference_cost_ = sum_squares(reference_.values().data(), reference_.size());
}

TransientImage Objective::predict(const BlobSet& blobs) const {
  ++evaluations_;
  return render(scene_, extract_mesh(blobs, grid_), render_);
}

Eigen::VectorXd Objective::residual(const BlobSet& blobs) const {
  TransientImage predicted = predict(blobs);
  const auto ref = reference_.values();
  const auto pred = predicted.values();
  Eigen::VectorXd r(Eigen::Index(ref.size()));
  for (std::size_t i = 0; i < ref.size(); ++i) r[Eigen::Index(i)] = ref[i] - pred[i];
  return r;
}

double Objective::cost(const BlobSet& blobs) const { return sum_squares(residual(blobs)); }

// ---------------------------------------------------------------------------

Eigen::MatrixXd forward_difference_jacobian(const ResidualFunction& f, const Eigen::VectorXd& x,
                                            const Eigen::VectorXd& r0,
                                            const Eigen::VectorXd& steps) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd jac(r0.size(), n);
#pragma omp parallel for schedule(dynamic, 1)
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd xp = x;
    xp[j] += steps[j];
    // Divide by the step actually taken after rounding.
    double h = xp[j] - x[j];
    jac.col(j) = (f(xp) - r0) / h;
  }
  return jac;
}

LmResult levenberg_marquardt(const ResidualFunction& f, const Eigen::VectorXd& x0,
                             const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& steps,
                             const LmOptions& options,
                             const std::function<void(Eigen::VectorXd&)>& project) {
  constexpr int kMaxRejections = 8;
  LmResult result;
  result.x = x0;
  Eigen::VectorXd r = f(result.x);
  result.cost = result.initial_cost = sum_squares(r);
  double lambda = options.initial_damping;

  for (int it = 0; it < options.max_iterations; ++it) {
    if (result.cost <= options.absolute_tolerance) break;
    ++result.iterations;
    Eigen::MatrixXd jac = forward_difference_jacobian(f, result.x, r, steps(result.x));
    Eigen::MatrixXd normal = jac.transpose() * jac;
    Eigen::VectorXd gradient = jac.transpose() * r;
    Eigen::VectorXd scale = normal.diagonal();
    double scale_max = scale.maxCoeff();
    if (!(scale_max > 0.0)) break;  // residual does not depend on x
    scale = scale.cwiseMax(1e-12 * scale_max);

    bool accepted = false;
    double relative_gain = 0.0;
    for (int attempt = 0; attempt < kMaxRejections && lambda <= options.max_damping; ++attempt) {
      Eigen::MatrixXd damped = normal;
      damped.diagonal() += lambda * scale;
      Eigen::VectorXd dx = damped.ldlt().solve(-gradient);
      Eigen::VectorXd trial = result.x + dx;
      if (project) project(trial);
      if (!trial.allFinite()) {
        lambda *= options.damping_increase;
        continue;
      }
      Eigen::VectorXd trial_r = f(trial);
      double trial_cost = sum_squares(trial_r);
      if (trial_cost < result.cost) {
        relative_gain = (result.cost - trial_cost) / result.cost;
        result.x = std::move(trial);
        r = std::move(trial_r);
        result.cost = trial_cost;
        lambda /= options.damping_decrease;
        ++result.accepted_steps;
        accepted = true;
        break;
      }
      lambda *= options.damping_increase;
    }
    if (!accepted || relative_gain < options.relative_tolerance) break;
  }
  return result;
}

// ---------------------------------------------------------------------------

void OptimizerConfig::validate() const {
  if (eta < 1.0) throw ConfigError("optimizer: eta must be >= 1");
  if (k_neighbors < 1) throw ConfigError("optimizer: k_neighbors must be >= 1");
  if (!(fd_position_min > 0.0) || !(fd_log_sigma > 0.0) || fd_position_rel < 0.0) {
    throw ConfigError("optimizer: finite-difference steps must be positive");
  }
  if (!(sigma0 >= kSigmaMin) || !(sigma_max >= sigma0)) {
    throw ConfigError("optimizer: need sigma_min <= sigma0 <= sigma_max");
  }
  if (pdf_resolution < 2) throw ConfigError("optimizer: pdf_resolution must be >= 2");
  if (!(pdf_power > 0.0)) throw ConfigError("optimizer: pdf_power must be positive");
  if (pdf_floor < 0.0 || pdf_floor > 1.0) throw ConfigError("optimizer: pdf_floor must be in [0, 1]");
  if (max_outer_iterations < 0) throw ConfigError("optimizer: max_outer_iterations must be >= 0");
}

bool RunStep::same_outcome(const RunStep& o) const {
  return iteration == o.iteration && phase == o.phase && choice == o.choice &&
         cost_before == o.cost_before && cost_after == o.cost_after && blobs == o.blobs;
}

std::vector<int> find_neighbors(int pivot, const BlobSet& blobs, int k) {
  const Vec3& c = blobs.at(pivot).center;
  std::vector<int> order;
  for (int i = 0; i < int(blobs.size()); ++i) {
    if (i != pivot) order.push_back(i);
  }
  std::vector<double> dist(blobs.size());
  for (int i : order) dist[i] = (blobs[i].center - c).squaredNorm();
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dist[a] < dist[b]; });
  std::vector<int> out{pivot};
  for (int i : order) {
    if (int(out.size()) >= k) break;
    out.push_back(i);
  }
  return out;
}

int find_nearest(const BlobSet& blobs, const Vec3& x) {
  int best = -1;
  double best_dist = 0.0;
  for (int i = 0; i < int(blobs.size()); ++i) {
    double d = (blobs[i].center - x).squaredNorm();
    if (best < 0 || d < best_dist) {
      best = i;
      best_dist = d;
    }
  }
  return best;
}

namespace {

// LM over a subset of blob parameters: positions only, or positions and
// log-widths.
OptimizerResult relax(const BlobSet& blobs, const std::vector<int>& selection, bool with_sigma,
                      const Objective& objective, const OptimizerConfig& config) {
  const int per_blob = with_sigma ? 4 : 3;
  const double log_min = std::log(kSigmaMin);
  const double log_max = std::log(config.sigma_max);

  auto assemble = [&](const Eigen::VectorXd& x) {
    BlobSet out = blobs;
    for (std::size_t s = 0; s < selection.size(); ++s) {
      Blob& b = out[selection[s]];
      b.center = x.segment<3>(Eigen::Index(s) * per_blob);
      if (with_sigma) b.sigma = std::exp(x[Eigen::Index(s) * per_blob + 3]);
    }
    return out;
  };
  Eigen::VectorXd x0(Eigen::Index(selection.size()) * per_blob);
  for (std::size_t s = 0; s < selection.size(); ++s) {
    const Blob& b = blobs[selection[s]];
    x0.segment<3>(Eigen::Index(s) * per_blob) = b.center;
    if (with_sigma) x0[Eigen::Index(s) * per_blob + 3] = std::log(b.sigma);
  }
  auto residual = [&](const Eigen::VectorXd& x) { return objective.residual(assemble(x)); };
  auto steps = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd h(x.size());
    for (std::size_t s = 0; s < selection.size(); ++s) {
      double sigma = with_sigma ? std::exp(x[Eigen::Index(s) * per_blob + 3])
                                : blobs[selection[s]].sigma;
      double step = std::max(config.fd_position_min, config.fd_position_rel * sigma);
      h.segment<3>(Eigen::Index(s) * per_blob).setConstant(step);
      if (with_sigma) h[Eigen::Index(s) * per_blob + 3] = config.fd_log_sigma;
    }
    return h;
  };
  std::function<void(Eigen::VectorXd&)> project;
  if (with_sigma) {
    project = [&](Eigen::VectorXd& x) {
      for (std::size_t s = 0; s < selection.size(); ++s) {
        double& v = x[Eigen::Index(s) * per_blob + 3];
        v = std::clamp(v, log_min, log_max);
      }
    };
  }
  LmResult lm = levenberg_marquardt(residual, x0, steps, config.lm, project);
  if (lm.accepted_steps == 0) return {blobs, lm.initial_cost};
  return {assemble(lm.x), lm.cost};
}

}  // namespace

OptimizerResult iterate(int pivot, const BlobSet& blobs, const Objective& objective,
                        const OptimizerConfig& config) {
  std::vector<int> selection = find_neighbors(pivot, blobs, config.k_neighbors);
  OptimizerResult positions = relax(blobs, selection, false, objective, config);
  return relax(positions.blobs, selection, true, objective, config);
}

OptimizerResult mutate_add(const BlobSet& blobs, const Vec3& x, const Objective& objective,
                           const OptimizerConfig& config) {
  BlobSet grown = blobs;
  grown.push_back({x, config.sigma0});
  return iterate(int(grown.size()) - 1, grown, objective, config);
}

OptimizerResult mutate_duplicate(const BlobSet& blobs, const Vec3& x, const Objective& objective,
                                 const OptimizerConfig& config, Rng& rng) {
  int target = find_nearest(blobs, x);
  if (target < 0) throw std::invalid_argument("mutate_duplicate: empty blob set");
  double z = 2.0 * uniform01(rng) - 1.0;
  double phi = 2.0 * std::numbers::pi * uniform01(rng);
  double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
  Vec3 direction(rxy * std::cos(phi), rxy * std::sin(phi), z);
  const Blob original = blobs[target];
  double offset = config.split_offset > 0.0 ? config.split_offset : 0.5 * original.sigma;
  BlobSet split = blobs;
  split[target].center = original.center + offset * direction;
  split.push_back({original.center - offset * direction, original.sigma});
  return iterate(target, split, objective, config);
}

OptimizerResult mutate_delete(const BlobSet& blobs, const Vec3& x, const Objective& objective,
                              const OptimizerConfig& config) {
  int target = find_nearest(blobs, x);
  if (target < 0) throw std::invalid_argument("mutate_delete: empty blob set");
  BlobSet reduced = blobs;
  reduced.erase(reduced.begin() + target);
  if (reduced.empty()) return {reduced, objective.reference_cost()};
  return iterate(find_nearest(reduced, x), reduced, objective, config);
}

OptimizerResult check_delete(const BlobSet& blobs, double cost, const Objective& objective,
                             const OptimizerConfig& config) {
  BlobSet current = blobs;
  double c = cost;
  std::size_t i = 0;
  while (i < current.size()) {
    BlobSet candidate = current;
    candidate.erase(candidate.begin() + std::ptrdiff_t(i));
    double candidate_cost = objective.cost(candidate);
    if (candidate_cost < config.eta * c) {
      current = std::move(candidate);
      c = candidate_cost;
    } else {
      ++i;
    }
  }
  return {current, objective.cost(current)};
}

SamplingPdf residual_pdf(const BlobSet& blobs, const Objective& objective,
                         const OptimizerConfig& config) {
  TransientImage residual = objective.reference();
  if (!blobs.empty()) {
    TransientImage predicted = objective.predict(blobs);
    auto r = residual.values();
    auto p = predicted.values();
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= p[i];
  }
  for (double& v : residual.values()) v = std::abs(v);
  VolumeSpec coarse = objective.scene().volume;
  coarse.resolution = {config.pdf_resolution, config.pdf_resolution, config.pdf_resolution};
  DensityVolume density = backproject(residual, objective.scene(), coarse);
  if (config.pdf_sharpen) density = sharpen(density, 1.0);
  if (config.pdf_power != 1.0) {
    for (double& v : density.values) v = std::pow(std::abs(v), config.pdf_power);
  }
  return density_to_pdf(density, true, config.pdf_floor);
}

RunRecord reconstruct(const Objective& objective, const OptimizerConfig& config,
                      const IterationObserver& observer, std::optional<ReconstructState> resume) {
  config.validate();
  using Clock = std::chrono::steady_clock;
  RunRecord record;
  ReconstructState state;
  auto log = [&](const std::string& phase, const std::string& choice, double before,
                 Clock::time_point start) {
    RunStep step;
    step.iteration = state.iteration;
    step.phase = phase;
    step.choice = choice;
    step.cost_before = before;
    step.cost_after = state.cost;
    step.blobs = int(state.blobs.size());
    step.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    record.steps.push_back(step);
  };

  if (resume) {
    state = std::move(*resume);
  } else {
    state.rng.seed(config.seed);
    state.initial_cost = objective.reference_cost();
    state.cost = state.initial_cost;
    auto start = Clock::now();
    Vec3 x = sample_location(residual_pdf({}, objective, config), state.rng);
    auto added = mutate_add({}, x, objective, config);
    state.blobs = std::move(added.blobs);
    state.cost = added.cost;
    log("init", "add", state.initial_cost, start);
  }
  record.initial_cost = state.initial_cost;
  const double threshold = config.c_thresh_ratio * state.initial_cost;

  while (state.cost > threshold && state.iteration < config.max_outer_iterations) {
    ++state.iteration;

    auto start = Clock::now();
    double before = state.cost;
    Vec3 x = sample_location(residual_pdf(state.blobs, objective, config), state.rng);
    OptimizerResult best = mutate_add(state.blobs, x, objective, config);
    std::string choice = "add";
    if (!state.blobs.empty()) {
      OptimizerResult dup = mutate_duplicate(state.blobs, x, objective, config, state.rng);
      if (dup.cost < best.cost) {
        best = std::move(dup);
        choice = "duplicate";
      }
      OptimizerResult del = mutate_delete(state.blobs, x, objective, config);
      if (del.cost < best.cost) {
        best = std::move(del);
        choice = "delete";
      }
    }
    if (best.cost < state.cost) {
      state.blobs = std::move(best.blobs);
      state.cost = best.cost;
    } else {
      choice = "none";
    }
    log("mutation", choice, before, start);

    start = Clock::now();
    before = state.cost;
    if (!state.blobs.empty()) {
      int pick = int(uniform01(state.rng) * double(state.blobs.size()));
      pick = std::min(pick, int(state.blobs.size()) - 1);
      OptimizerResult again = iterate(pick, state.blobs, objective, config);
      if (again.cost < state.cost) {
        state.blobs = std::move(again.blobs);
        state.cost = again.cost;
      }
    }
    log("reiterate", "", before, start);

    start = Clock::now();
    before = state.cost;
    OptimizerResult kept = check_delete(state.blobs, state.cost, objective, config);
    state.blobs = std::move(kept.blobs);
    state.cost = kept.cost;
    log("check_delete", "", before, start);

    record.blobs = state.blobs;
    record.cost = state.cost;
    record.outer_iterations = state.iteration;
    if (observer) observer(state, record);
  }
  record.blobs = state.blobs;
  record.cost = state.cost;
  record.outer_iterations = state.iteration;
  return record;
}

}  // namespace nlos
