#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "handik/rotmath.hpp"

namespace handik {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;

enum class JointFrame {
  absolute_mm,  // camera/world coordinates, millimetres
  normalized,   // root-relative, reference bone scaled to length 1
};

struct JointSet {
  Points positions;  // J x 3
  JointFrame frame = JointFrame::absolute_mm;

  int count() const { return static_cast<int>(positions.rows()); }
};

// PCA shape coefficients. An empty vector means the mean shape.
struct Shape {
  Eigen::VectorXd beta;

  static Shape zeros(int dim) {
    Shape s;
    s.beta = Eigen::VectorXd::Zero(dim);
    return s;
  }
};

// Local joint rotations relative to the rest pose, one per joint.
// Leaf joints carry rotations with no positional effect.
struct Pose {
  std::vector<Quaternion> rotations;

  static Pose rest(int joints) { return Pose{std::vector<Quaternion>(static_cast<std::size_t>(joints))}; }
  int count() const { return static_cast<int>(rotations.size()); }
};

struct MeshBlock {
  Points template_verts;            // V x 3, rest mesh at beta = 0
  Eigen::MatrixXd shape_basis;      // 3V x B, flattened row-major per vertex
  Eigen::MatrixXd pose_basis;       // 3V x 9*(n_rotating), may have 0 columns
  Eigen::MatrixXd skinning_weights; // V x J, rows sum to 1
  Eigen::MatrixXd joint_regressor;  // J x V

  int vertex_count() const { return static_cast<int>(template_verts.rows()); }
};

// Kinematic skeleton (tree rooted at the wrist) plus an optional mesh block.
// The "root" joint used for normalization is the middle MCP, distinct from
// the tree root.
struct KinematicModel {
  int joint_count = 0;
  std::vector<int> parents;        // -1 for the tree root
  Points rest_joints0;             // J x 3 rest joints at beta = 0, mm
  Eigen::MatrixXd joint_shape_basis;  // 3J x B, flattened row-major per joint
  int root_index = 0;              // normalization root (middle MCP)
  int wrist_index = 0;             // kinematic tree root
  std::vector<int> fingertips;     // leaf joints, one per finger
  std::optional<MeshBlock> mesh;

  int shape_dim() const { return static_cast<int>(joint_shape_basis.cols()); }
  // Parent-first traversal order.
  std::vector<int> topo_order() const;
  // (parent, child) for every non-root joint, ascending child index.
  std::vector<std::pair<int, int>> bones() const;
  // Joint chains fingertip-by-fingertip, base to tip, wrist excluded.
  std::vector<std::vector<int>> finger_chains() const;
  // Non-root joints with children: the joints whose rotations move positions.
  std::vector<int> rotating_joints() const;
  // Throws std::invalid_argument if the structural invariants are violated.
  void validate() const;
};

// Rest joints for a shape: rest_joints0 + joint_shape_basis * beta.
JointSet rest_joints(const KinematicModel& model, const Shape& shape);

// Template deformed by shape and pose blendshapes (pose term driven by
// vec(R_j) - vec(I) over the rotating joints). Requires a mesh block.
Points deform_template(const KinematicModel& model, const Shape& shape, const Pose& pose);

// Forward kinematics results with the intermediates needed elsewhere.
struct FkResult {
  Points positions;                       // J x 3
  std::vector<Eigen::Matrix3d> local;     // per-joint local rotation
  std::vector<Eigen::Matrix3d> global;    // accumulated rotation per joint
};

FkResult fk_run(const KinematicModel& model, const Points& rest, const Pose& pose);

// Posed joint positions; the tree root stays at its rest location.
JointSet fk_joints(const KinematicModel& model, const Shape& shape, const Pose& pose);
JointSet fk_joints_from_rest(const KinematicModel& model, const JointSet& rest, const Pose& pose);

// Linear blend skinning of the deformed template. Requires a mesh block.
Points lbs_mesh(const KinematicModel& model, const Shape& shape, const Pose& pose);

// Unit parent->child direction per joint; zero row for the tree root and for
// degenerate bones (flagged through zero_flags when provided).
Points bone_vectors(const JointSet& joints, const KinematicModel& model,
                    std::vector<std::uint8_t>* zero_flags = nullptr);

// Root-relative, reference-bone-normalized coordinates. Idempotent.
// Throws std::domain_error when the reference bone has zero length.
JointSet normalize_joints(const JointSet& joints, const KinematicModel& model);

// Procedural 21-joint hand (wrist + 5 fingers x 4 joints) with a joint shape
// basis and, optionally, a coarse mesh block. Deterministic per seed.
KinematicModel synth_model(std::uint64_t seed, bool with_mesh = true);

// Model file, format `handik-model-v1` (JSON, units mm, row-major arrays).
void save_model(const KinematicModel& model, const std::string& path);
KinematicModel load_model(const std::string& path);

}  // namespace handik
