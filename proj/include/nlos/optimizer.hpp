#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "nlos/backprojection.hpp"
#include "nlos/blobfield.hpp"
#include "nlos/renderer.hpp"
#include "nlos/scene.hpp"

namespace nlos {

/// Least-squares objective |I_ref - I(G(P))|^2 over blob sets.
class Objective {
 public:
  Objective(TransientImage reference, SceneConfig scene, RenderOptions render = {});
  Objective(TransientImage reference, SceneConfig scene, VolumeSpec grid, RenderOptions render);

  const TransientImage& reference() const { return reference_; }
  const SceneConfig& scene() const { return scene_; }
  const VolumeSpec& grid() const { return grid_; }
  const RenderOptions& render_options() const { return render_; }

  TransientImage predict(const BlobSet& blobs) const;
  /// I_ref - I(G(P)), flattened in image order.
  Eigen::VectorXd residual(const BlobSet& blobs) const;
  double cost(const BlobSet& blobs) const;
  /// |I_ref|^2, the cost of the empty hypothesis.
  double reference_cost() const { return reference_cost_; }

  /// Number of forward renders issued so far.
  std::int64_t evaluations() const { return evaluations_.load(); }

 private:
  TransientImage reference_;
  SceneConfig scene_;
  VolumeSpec grid_;
  RenderOptions render_;
  double reference_cost_ = 0.0;
  mutable std::atomic<std::int64_t> evaluations_{0};
};

// ---------------------------------------------------------------------------
// Levenberg-Marquardt on a residual vector.

using ResidualFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Forward differences, one residual evaluation per column; columns are
/// evaluated in parallel.
Eigen::MatrixXd forward_difference_jacobian(const ResidualFunction& f, const Eigen::VectorXd& x,
                                            const Eigen::VectorXd& r0,
                                            const Eigen::VectorXd& steps);

struct LmOptions {
  int max_iterations = 20;
  double initial_damping = 1e-3;
  double damping_increase = 2.0;  // on a rejected step
  double damping_decrease = 3.0;  // on an accepted step
  double max_damping = 1e10;
  // Stop once an accepted step lowers the cost by less than this fraction.
  double relative_tolerance = 1e-6;
  // Stop once the cost drops below this absolute level.
  double absolute_tolerance = 0.0;
};

struct LmResult {
  Eigen::VectorXd x;
  double cost = 0.0;
  double initial_cost = 0.0;
  int iterations = 0;
  int accepted_steps = 0;
};

/// Damped normal equations (J^T J + lambda diag(J^T J)) dx = -J^T r. Steps
/// that do not lower |r|^2 are rejected, so cost never rises. `project`,
/// when set, maps trial points back into the feasible set.
LmResult levenberg_marquardt(const ResidualFunction& f, const Eigen::VectorXd& x0,
                             const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& steps,
                             const LmOptions& options,
                             const std::function<void(Eigen::VectorXd&)>& project = {});

// ---------------------------------------------------------------------------
// Global optimisation

struct OptimizerConfig {
  double sigma0 = 1.5;
  double sigma_max = 10.0;
  double eta = 1.005;
  int k_neighbors = 10;
  // Stop when cost <= c_thresh_ratio * |I_ref|^2.
  double c_thresh_ratio = 0.005;
  // Split displacement |d|; <= 0 means half the split blob's sigma.
  double split_offset = 0.0;
  // Position step is max(fd_position_min, fd_position_rel * sigma).
  double fd_position_min = 1e-2;
  double fd_position_rel = 1e-3;
  double fd_log_sigma = 1e-2;
  LmOptions lm;
  std::uint64_t seed = 1;
  int max_outer_iterations = 50;
  // Sampling density: backprojected |residual| at pdf_resolution^3,
  // optionally sharpened, raised to pdf_power, mixed with a pdf_floor share
  // of the uniform density.
  int pdf_resolution = 48;
  bool pdf_sharpen = true;
  double pdf_power = 3.0;
  double pdf_floor = 1e-6;

  void validate() const;
};

struct RunStep {
  int iteration = 0;
  // init | mutation | reiterate | check_delete
  std::string phase;
  // add | duplicate | delete | none (mutation rows), empty otherwise
  std::string choice;
  double cost_before = 0.0;
  double cost_after = 0.0;
  int blobs = 0;
  double seconds = 0.0;

  /// Equality ignoring wall-clock time.
  bool same_outcome(const RunStep& o) const;
};

struct RunRecord {
  std::vector<RunStep> steps;
  BlobSet blobs;
  double cost = 0.0;
  double initial_cost = 0.0;
  int outer_iterations = 0;
};

struct OptimizerResult {
  BlobSet blobs;
  double cost = 0.0;
};

/// Indices of the k blobs nearest to blobs[pivot] (pivot first, then by
/// distance, ties to the lower index).
std::vector<int> find_neighbors(int pivot, const BlobSet& blobs, int k);

/// Index of the blob nearest to x (lowest index on ties); -1 when empty.
int find_nearest(const BlobSet& blobs, const Vec3& x);

/// Two-stage relaxation around blobs[pivot]: positions of the neighbourhood
/// first, then positions and widths. Other blobs stay fixed. The returned
/// cost never exceeds the entry cost.
OptimizerResult iterate(int pivot, const BlobSet& blobs, const Objective& objective,
                        const OptimizerConfig& config);

OptimizerResult mutate_add(const BlobSet& blobs, const Vec3& x, const Objective& objective,
                           const OptimizerConfig& config);
/// Replaces the blob nearest x by two copies displaced by +-d, d a random
/// direction scaled by the split offset.
OptimizerResult mutate_duplicate(const BlobSet& blobs, const Vec3& x, const Objective& objective,
                                 const OptimizerConfig& config, Rng& rng);
OptimizerResult mutate_delete(const BlobSet& blobs, const Vec3& x, const Objective& objective,
                              const OptimizerConfig& config);

/// Drops every blob whose removal keeps the cost below eta * c, sweeping in
/// index order and updating c after each deletion. The only step allowed to
/// raise the cost.
OptimizerResult check_delete(const BlobSet& blobs, double cost, const Objective& objective,
                             const OptimizerConfig& config);

/// Sampling distribution from the absolute residual of the current hypothesis.
SamplingPdf residual_pdf(const BlobSet& blobs, const Objective& objective,
                         const OptimizerConfig& config);

struct ReconstructState {
  BlobSet blobs;
  double cost = 0.0;
  double initial_cost = 0.0;
  int iteration = 0;
  Rng rng;
};

/// Called after each outer iteration with the current state.
using IterationObserver = std::function<void(const ReconstructState&, const RunRecord&)>;

/// The global scheme: sample, three mutations, keep the best, reiterate
/// around a random blob, regularise; until cost <= c_thresh or the
/// iteration cap. `resume` continues from a saved state.
RunRecord reconstruct(const Objective& objective, const OptimizerConfig& config,
                      const IterationObserver& observer = {},
                      std::optional<ReconstructState> resume = std::nullopt);

}  // namespace nlos
