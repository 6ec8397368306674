#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "handik/handmodel.hpp"

namespace handik {

// Network input blocks: current joints/bones plus rest-pose joints/bones,
// all root-relative and scale-normalized. Flattens joint-major to 4*J*3.
struct IkInput {
  Points x;      // J x 3 normalized joint positions
  Points d;      // J x 3 unit bone directions (zero at the tree root)
  Points x_ref;  // J x 3 normalized rest joints
  Points d_ref;  // J x 3 rest bone directions

  int joints() const { return static_cast<int>(x.rows()); }
  Eigen::VectorXd flatten() const;
  static IkInput from_flat(const Eigen::VectorXd& flat, int joints);
};

struct IkOutput {
  Eigen::Matrix<double, Eigen::Dynamic, 4> q_hat;  // raw rows per joint
  Eigen::Matrix<double, Eigen::Dynamic, 4> q;      // row-normalized
  std::vector<std::uint8_t> degenerate;            // rows with ~zero norm

  Pose to_pose() const;  // hemisphere-canonicalized
};

enum class NetMode { train, infer };

struct MlpLayer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;
  bool batch_norm = false;
  bool sigmoid = false;
  Eigen::VectorXd gamma, beta_shift, run_mean, run_var;
};

// 7 affine layers: 6 hidden (batch norm + sigmoid) and a linear output.
struct Mlp {
  std::vector<MlpLayer> layers;

  int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().w.cols()); }
  int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().w.rows()); }
};

inline constexpr int kMlpHiddenLayers = 6;
inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kBnMomentum = 0.9;

Mlp make_mlp(int input_dim, int hidden_width, int output_dim, std::uint64_t seed);

// Batch-norm caches for one forward pass; required for the backward pass.
struct LayerCache {
  Eigen::MatrixXd z;     // pre-normalization affine output
  Eigen::MatrixXd zhat;  // standardized (hidden layers only)
  Eigen::MatrixXd a;     // layer output after activation
  Eigen::VectorXd mean, var;
};

struct ForwardWorkspace {
  NetMode mode = NetMode::infer;
  Eigen::MatrixXd input;
  std::vector<LayerCache> layers;
};

// Rows of x are samples. Train mode standardizes with batch statistics and
// requires at least 2 rows; infer mode uses running statistics. Never
// mutates the net; running statistics are folded in via
// mlp_update_running after a train-mode pass.
Eigen::MatrixXd mlp_forward(const Mlp& net, const Eigen::MatrixXd& x, NetMode mode,
                            ForwardWorkspace* ws = nullptr);
void mlp_update_running(Mlp& net, const ForwardWorkspace& ws);

struct MlpLayerGrad {
  Eigen::MatrixXd w;
  Eigen::VectorXd b, gamma, beta_shift;
};
struct MlpGradients {
  std::vector<MlpLayerGrad> layers;
};

// Exact reverse pass for d(loss)/d(output); requires a train-mode workspace
// (throws std::invalid_argument on an infer-mode one).
MlpGradients mlp_backward(const Mlp& net, const ForwardWorkspace& ws, const Eigen::MatrixXd& d_out);

// [X, D, X_ref, D_ref] from raw joints; both joint sets are normalized here.
IkInput encode_input(const JointSet& joints, const JointSet& rest, const KinematicModel& model);

// Single-sample feed-forward. Train mode needs a batch; use mlp_forward.
IkOutput forward(const Mlp& net, const IkInput& input, NetMode mode = NetMode::infer);

// ---- losses (means over joints) ----

// 1 - real(q_gt * q^-1) averaged over joints; inputs must be unit rows
// (within 1e-6) or std::invalid_argument is thrown. Range [0, 2].
double loss_cos(std::span<const Quaternion> q_gt, std::span<const Quaternion> q);
// Componentwise squared difference, averaged over joints.
double loss_l2(std::span<const Quaternion> q_gt, std::span<const Quaternion> q);
// |1 - ||q_hat||^2| per row, averaged over joints.
double loss_norm(const Eigen::Matrix<double, Eigen::Dynamic, 4>& q_hat);
// Mean squared joint position error between x_gt and the normalized FK of q.
double loss_xyz(std::span<const Quaternion> q, const JointSet& x_gt, const JointSet& rest,
                const KinematicModel& model);
double loss_xyz(std::span<const Quaternion> q, const JointSet& x_gt, const Shape& shape,
                const KinematicModel& model);

struct LossWeights {
  double cos = 1.0;
  double l2 = 1.0;
  double xyz = 1.0;
  double norm = 1.0;
};

enum class SampleKind : std::uint8_t { mocap = 0, noisy = 1 };

// One training record. Rotation targets are present for mocap-augmented
// samples; position targets are always present (normalized frame).
struct IkSample {
  IkInput input;
  std::optional<Pose> target_rotations;
  JointSet target_positions;
  SampleKind kind = SampleKind::mocap;
};

struct LossBreakdown {
  double total = 0.0;
  double cos = 0.0, l2 = 0.0, xyz = 0.0, norm = 0.0;  // means over applicable samples
};

struct BatchLossResult {
  LossBreakdown loss;
  Eigen::MatrixXd d_out;  // d(total)/d(raw outputs), empty unless requested
};

// Loss of raw network outputs `out` (one row per sample) against the batch
// targets; each term applies only where its target exists. The gradient path
// runs through row normalization, quaternion-to-matrix conversion, forward
// kinematics and joint normalization.
BatchLossResult ik_batch_loss(const KinematicModel& model, std::span<const IkSample> batch,
                              const Eigen::MatrixXd& out, const LossWeights& weights, bool want_grad);

struct BackwardResult {
  LossBreakdown loss;
  MlpGradients grads;
};

// Full train-mode forward + loss + reverse pass for one batch.
BackwardResult backward(const Mlp& net, const KinematicModel& model, std::span<const IkSample> batch,
                        const LossWeights& weights);

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 1e-3;
  double lr_decay = 1.0;  // per-epoch multiplier on the learning rate
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 20;
  std::uint64_t seed = 1;
  LossWeights weights;
};

struct EpochStats {
  double total = 0.0, cos = 0.0, l2 = 0.0, xyz = 0.0, norm = 0.0;
};
struct TrainHistory {
  std::vector<EpochStats> epochs;
};

// Adam over shuffled minibatches; deterministic for a fixed seed and dataset
// order. Throws std::invalid_argument for an empty dataset.
TrainHistory train(Mlp& net, const KinematicModel& model, std::span<const IkSample> dataset,
                   const TrainConfig& cfg);

// encode -> forward(infer) -> hemisphere-canonicalized unit quaternions.
Pose predict_pose(const Mlp& net, const JointSet& joints, const JointSet& rest,
                  const KinematicModel& model);

// Trained-network file, format `handik-mlp-v1`: one JSON header line, then a
// little-endian float32 parameter blob in layer order (w row-major, b, and
// for batch-norm layers gamma, beta, running mean, running variance).
void save_mlp(const Mlp& net, const std::string& path);
Mlp load_mlp(const std::string& path);

}  // namespace handik
