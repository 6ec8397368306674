#include "handik/handmodel.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "handik/util.hpp"

namespace handik {

std::vector<int> KinematicModel::topo_order() const {
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(joint_count));
  std::vector<std::vector<int>> children(static_cast<std::size_t>(joint_count));
  int root = -1;
  for (int j = 0; j < joint_count; ++j) {
    const int p = parents[static_cast<std::size_t>(j)];
    if (p < 0)
      root = j;
    else
      children[static_cast<std::size_t>(p)].push_back(j);
  }
  if (root < 0) throw std::invalid_argument("model has no tree root");
  std::vector<int> stack{root};
  while (!stack.empty()) {
    const int j = stack.back();
    stack.pop_back();
    order.push_back(j);
    for (int c : children[static_cast<std::size_t>(j)]) stack.push_back(c);
  }
  if (static_cast<int>(order.size()) != joint_count)
    throw std::invalid_argument("parents array is not a single tree");
  return order;
}

std::vector<std::pair<int, int>> KinematicModel::bones() const {
  std::vector<std::pair<int, int>> out;
  for (int j = 0; j < joint_count; ++j)
    if (parents[static_cast<std::size_t>(j)] >= 0) out.emplace_back(parents[static_cast<std::size_t>(j)], j);
  return out;
}

std::vector<std::vector<int>> KinematicModel::finger_chains() const {
  std::vector<std::vector<int>> chains;
  for (int tip : fingertips) {
    std::vector<int> chain;
    for (int j = tip; j >= 0 && j != wrist_index; j = parents[static_cast<std::size_t>(j)]) chain.push_back(j);
    std::reverse(chain.begin(), chain.end());
    chains.push_back(std::move(chain));
  }
  return chains;
}

std::vector<int> KinematicModel::rotating_joints() const {
  std::vector<bool> has_child(static_cast<std::size_t>(joint_count), false);
  for (int j = 0; j < joint_count; ++j)
    if (parents[static_cast<std::size_t>(j)] >= 0) has_child[static_cast<std::size_t>(parents[static_cast<std::size_t>(j)])] = true;
  std::vector<int> out;
  for (int j = 0; j < joint_count; ++j)
    if (has_child[static_cast<std::size_t>(j)] && parents[static_cast<std::size_t>(j)] >= 0) out.push_back(j);
  return out;
}

void KinematicModel::validate() const {
  if (joint_count <= 0) throw std::invalid_argument("model: joint_count must be positive");
  if (static_cast<int>(parents.size()) != joint_count || rest_joints0.rows() != joint_count)
    throw std::invalid_argument("model: parents/rest_joints0 size mismatch");
  if (joint_shape_basis.rows() != 3 * joint_count)
    throw std::invalid_argument("model: joint_shape_basis must have 3*J rows");
  if (root_index < 0 || root_index >= joint_count || wrist_index < 0 || wrist_index >= joint_count)
    throw std::invalid_argument("model: root/wrist index out of range");
  if (parents[static_cast<std::size_t>(wrist_index)] != -1)
    throw std::invalid_argument("model: wrist must be the tree root");
  topo_order();  // throws unless parents form a single tree
  std::vector<bool> has_child(static_cast<std::size_t>(joint_count), false);
  for (int j = 0; j < joint_count; ++j)
    if (parents[static_cast<std::size_t>(j)] >= 0) has_child[static_cast<std::size_t>(parents[static_cast<std::size_t>(j)])] = true;
  for (int tip : fingertips) {
    if (tip < 0 || tip >= joint_count) throw std::invalid_argument("model: fingertip index out of range");
    if (has_child[static_cast<std::size_t>(tip)]) throw std::invalid_argument("model: fingertip has children");
  }
  if (mesh) {
    const int v = mesh->vertex_count();
    if (mesh->shape_basis.rows() != 3 * v || mesh->shape_basis.cols() != joint_shape_basis.cols())
      throw std::invalid_argument("model: mesh shape basis shape mismatch");
    if (mesh->skinning_weights.rows() != v || mesh->skinning_weights.cols() != joint_count)
      throw std::invalid_argument("model: skinning weights shape mismatch");
    if (mesh->joint_regressor.rows() != joint_count || mesh->joint_regressor.cols() != v)
      throw std::invalid_argument("model: joint regressor shape mismatch");
    for (int i = 0; i < v; ++i) {
      double sum = 0;
      for (int j = 0; j < joint_count; ++j) {
        const double w = mesh->skinning_weights(i, j);
        if (w < -1e-9) throw std::invalid_argument("model: negative skinning weight");
        sum += w;
      }
      if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("model: skinning row does not sum to 1");
    }
  }
}

JointSet rest_joints(const KinematicModel& model, const Shape& shape) {
  Eigen::VectorXd flat = Eigen::VectorXd::Zero(3 * model.joint_count);
  for (int j = 0; j < model.joint_count; ++j) flat.segment<3>(3 * j) = model.rest_joints0.row(j).transpose();
  if (shape.beta.size() > 0) {
    if (shape.beta.size() != model.shape_dim())
      throw std::invalid_argument("rest_joints: beta dimension mismatch");
    flat += model.joint_shape_basis * shape.beta;
  }
  JointSet out;
  out.positions.resize(model.joint_count, 3);
  for (int j = 0; j < model.joint_count; ++j) out.positions.row(j) = flat.segment<3>(3 * j).transpose();
  out.frame = JointFrame::absolute_mm;
  return out;
}

// Pose feature: vec(R_j) - vec(I), row-major, over rotating joints in
// ascending index order.
static Eigen::VectorXd pose_feature(const KinematicModel& model, const Pose& pose) {
  const std::vector<int> rot = model.rotating_joints();
  Eigen::VectorXd f(9 * static_cast<int>(rot.size()));
  int at = 0;
  for (int j : rot) {
    const Eigen::Matrix3d r = quat_to_matrix(quat_normalize(pose.rotations[static_cast<std::size_t>(j)]));
    const Eigen::Matrix3d d = r - Eigen::Matrix3d::Identity();
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) f(at++) = d(a, b);
  }
  return f;
}

Points deform_template(const KinematicModel& model, const Shape& shape, const Pose& pose) {
  if (!model.mesh) throw std::logic_error("deform_template: model has no mesh block");
  const MeshBlock& mesh = *model.mesh;
  const int v = mesh.vertex_count();
  Eigen::VectorXd flat(3 * v);
  for (int i = 0; i < v; ++i) flat.segment<3>(3 * i) = mesh.template_verts.row(i).transpose();
  if (shape.beta.size() > 0) {
    if (shape.beta.size() != model.shape_dim())
      throw std::invalid_argument("deform_template: beta dimension mismatch");
    flat += mesh.shape_basis * shape.beta;
  }
  if (mesh.pose_basis.cols() > 0) {
    const Eigen::VectorXd f = pose_feature(model, pose);
    if (mesh.pose_basis.cols() != f.size())
      throw std::invalid_argument("deform_template: pose basis column mismatch");
    flat += mesh.pose_basis * f;
  }
  Points out(v, 3);
  for (int i = 0; i < v; ++i) out.row(i) = flat.segment<3>(3 * i).transpose();
  return out;
}

FkResult fk_run(const KinematicModel& model, const Points& rest, const Pose& pose) {
  if (pose.count() != model.joint_count) throw std::invalid_argument("fk: pose joint count mismatch");
  if (rest.rows() != model.joint_count) throw std::invalid_argument("fk: rest joint count mismatch");
  FkResult r;
  r.positions.resize(model.joint_count, 3);
  r.local.resize(static_cast<std::size_t>(model.joint_count));
  r.global.resize(static_cast<std::size_t>(model.joint_count));
  for (int j = 0; j < model.joint_count; ++j)
    r.local[static_cast<std::size_t>(j)] = quat_to_matrix(quat_normalize(pose.rotations[static_cast<std::size_t>(j)]));
  for (int j : model.topo_order()) {
    const int p = model.parents[static_cast<std::size_t>(j)];
    if (p < 0) {
      r.global[static_cast<std::size_t>(j)] = r.local[static_cast<std::size_t>(j)];
      r.positions.row(j) = rest.row(j);
    } else {
      r.global[static_cast<std::size_t>(j)] = r.global[static_cast<std::size_t>(p)] * r.local[static_cast<std::size_t>(j)];
      const Eigen::Vector3d offset = (rest.row(j) - rest.row(p)).transpose();
      r.positions.row(j) = r.positions.row(p) + (r.global[static_cast<std::size_t>(p)] * offset).transpose();
    }
  }
  return r;
}

JointSet fk_joints_from_rest(const KinematicModel& model, const JointSet& rest, const Pose& pose) {
  JointSet out;
  out.positions = fk_run(model, rest.positions, pose).positions;
  out.frame = rest.frame;
  return out;
}

JointSet fk_joints(const KinematicModel& model, const Shape& shape, const Pose& pose) {
  return fk_joints_from_rest(model, rest_joints(model, shape), pose);
}

Points lbs_mesh(const KinematicModel& model, const Shape& shape, const Pose& pose) {
  if (!model.mesh) throw std::logic_error("lbs_mesh: model has no mesh block");
  const MeshBlock& mesh = *model.mesh;
  const JointSet rest = rest_joints(model, shape);
  const FkResult fk = fk_run(model, rest.positions, pose);
  const Points verts = deform_template(model, shape, pose);
  const int v = mesh.vertex_count();
  Points out = Points::Zero(v, 3);
  for (int i = 0; i < v; ++i) {
    const Eigen::Vector3d t = verts.row(i).transpose();
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (int j = 0; j < model.joint_count; ++j) {
      const double w = mesh.skinning_weights(i, j);
      if (w == 0.0) continue;
      const Eigen::Vector3d rj = rest.positions.row(j).transpose();
      const Eigen::Vector3d pj = fk.positions.row(j).transpose();
      acc += w * (fk.global[static_cast<std::size_t>(j)] * (t - rj) + pj);
    }
    out.row(i) = acc.transpose();
  }
  return out;
}

Points bone_vectors(const JointSet& joints, const KinematicModel& model,
                    std::vector<std::uint8_t>* zero_flags) {
  if (joints.count() != model.joint_count) throw std::invalid_argument("bone_vectors: joint count mismatch");
  Points out = Points::Zero(model.joint_count, 3);
  if (zero_flags) zero_flags->assign(static_cast<std::size_t>(model.joint_count), 0);
  for (int j = 0; j < model.joint_count; ++j) {
    const int p = model.parents[static_cast<std::size_t>(j)];
    if (p < 0) continue;  // zero row for the tree root, by convention
    Eigen::RowVector3d d = joints.positions.row(j) - joints.positions.row(p);
    const double len = d.norm();
    if (len <= 1e-12) {
      if (zero_flags) (*zero_flags)[static_cast<std::size_t>(j)] = 1;
      continue;
    }
    out.row(j) = d / len;
  }
  return out;
}

JointSet normalize_joints(const JointSet& joints, const KinematicModel& model) {
  if (joints.count() != model.joint_count) throw std::invalid_argument("normalize_joints: joint count mismatch");
  const Eigen::RowVector3d root = joints.positions.row(model.root_index);
  const double ref = (root - joints.positions.row(model.wrist_index)).norm();
  if (ref <= 1e-12) throw std::domain_error("normalize_joints: reference bone has zero length");
  JointSet out;
  out.positions = (joints.positions.rowwise() - root) / ref;
  out.frame = JointFrame::normalized;
  return out;
}

KinematicModel synth_model(std::uint64_t seed, bool with_mesh) {
  std::mt19937_64 rng = rng_for(seed, 0x6d6f64ull);
  std::uniform_real_distribution<double> uscale(0.9, 1.1);
  std::normal_distribution<double> jitter(0.0, 0.8);

  constexpr int kJoints = 21;
  // Metacarpophalangeal anchors and per-segment lengths, mm; thumb first.
  const double mcp[5][3] = {{32, 30, 0}, {28, 88, 0}, {9, 92, 0}, {-9, 88, 0}, {-26, 80, 0}};
  const double seg[5][3] = {{34, 28, 23}, {40, 24, 20}, {44, 27, 22}, {40, 25, 21}, {31, 19, 17}};

  KinematicModel m;
  m.joint_count = kJoints;
  m.parents.assign(kJoints, -1);
  m.rest_joints0 = Points::Zero(kJoints, 3);
  m.root_index = 9;   // middle MCP
  m.wrist_index = 0;  // tree root
  m.fingertips = {4, 8, 12, 16, 20};

  const double scale = uscale(rng);
  for (int f = 0; f < 5; ++f) {
    Eigen::Vector3d base(mcp[f][0], mcp[f][1], mcp[f][2]);
    const Eigen::Vector3d dir = base.normalized();
    base *= scale;
    Eigen::Vector3d p = base;
    for (int k = 0; k < 4; ++k) {
      const int j = 1 + 4 * f + k;
      m.parents[static_cast<std::size_t>(j)] = k == 0 ? 0 : j - 1;
      if (k > 0) p += dir * (seg[f][k - 1] * scale);
      Eigen::Vector3d q = p;
      for (int c = 0; c < 3; ++c) q(c) += jitter(rng);
      m.rest_joints0.row(j) = q.transpose();
    }
  }

  // Shape basis: per-bone multiplicative length modes. Each column scales
  // bone segments by s * q_bk and shifts every descendant joint accordingly,
  // so bone lengths are exactly (1 + <beta, s*q_b>) * rest length. The
  // orthonormal q columns keep all modes equally identifiable from length
  // ratios, and the reference bone row stays zero so l_ref is shape-invariant.
  const int kShapeDim = 10;
  const double kModeScale = 0.05;
  const auto bone_list = m.bones();
  const int n_bones = static_cast<int>(bone_list.size());
  int ref_bone = -1;
  for (int b = 0; b < n_bones; ++b)
    if (bone_list[static_cast<std::size_t>(b)].second == m.root_index) ref_bone = b;

  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd raw(n_bones - 1, kShapeDim);
  for (int r = 0; r < n_bones - 1; ++r)
    for (int c = 0; c < kShapeDim; ++c) raw(r, c) = gauss(rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
  const Eigen::MatrixXd q =
      qr.householderQ() * Eigen::MatrixXd::Identity(n_bones - 1, kShapeDim);
  Eigen::MatrixXd bone_modes = Eigen::MatrixXd::Zero(n_bones, kShapeDim);
  for (int b = 0, r = 0; b < n_bones; ++b) {
    if (b == ref_bone) continue;
    bone_modes.row(b) = kModeScale * q.row(r++);
  }

  std::vector<std::vector<int>> children(kJoints);
  for (int j = 0; j < kJoints; ++j)
    if (m.parents[static_cast<std::size_t>(j)] >= 0) children[static_cast<std::size_t>(m.parents[static_cast<std::size_t>(j)])].push_back(j);
  m.joint_shape_basis = Eigen::MatrixXd::Zero(3 * kJoints, kShapeDim);
  for (int b = 0; b < n_bones; ++b) {
    const auto [p, c] = bone_list[static_cast<std::size_t>(b)];
    const Eigen::Vector3d seg = (m.rest_joints0.row(c) - m.rest_joints0.row(p)).transpose();
    std::vector<int> stack{c};
    while (!stack.empty()) {
      const int j = stack.back();
      stack.pop_back();
      for (int k = 0; k < kShapeDim; ++k)
        m.joint_shape_basis.block<3, 1>(3 * j, k) += bone_modes(b, k) * seg;
      for (int ch : children[static_cast<std::size_t>(j)]) stack.push_back(ch);
    }
  }

  if (with_mesh) {
    // Coarse mesh: one vertex pinned to each joint (so the regressor is a
    // selector and agrees with the joint shape basis exactly) plus one offset
    // vertex per joint, skinned half to the joint and half to its parent.
    const int v = 2 * kJoints;
    MeshBlock mesh;
    mesh.template_verts = Points::Zero(v, 3);
    mesh.shape_basis = Eigen::MatrixXd::Zero(3 * v, kShapeDim);
    mesh.pose_basis = Eigen::MatrixXd::Zero(3 * v, 0);
    mesh.skinning_weights = Eigen::MatrixXd::Zero(v, kJoints);
    mesh.joint_regressor = Eigen::MatrixXd::Zero(kJoints, v);
    for (int j = 0; j < kJoints; ++j) {
      mesh.template_verts.row(j) = m.rest_joints0.row(j);
      mesh.shape_basis.middleRows(3 * j, 3) = m.joint_shape_basis.middleRows(3 * j, 3);
      mesh.skinning_weights(j, j) = 1.0;
      mesh.joint_regressor(j, j) = 1.0;

      const int i = kJoints + j;
      const int p = m.parents[static_cast<std::size_t>(j)];
      Eigen::Vector3d axis = p >= 0 ? (m.rest_joints0.row(j) - m.rest_joints0.row(p)).transpose() : Eigen::Vector3d(0, 1, 0);
      Eigen::Vector3d perp = axis.cross(Eigen::Vector3d(0, 0, 1));
      if (perp.norm() < 1e-9) perp = axis.cross(Eigen::Vector3d(1, 0, 0));
      perp.normalize();
      mesh.template_verts.row(i) = m.rest_joints0.row(j) + 6.0 * perp.transpose();
      mesh.shape_basis.middleRows(3 * i, 3) = m.joint_shape_basis.middleRows(3 * j, 3);
      if (p >= 0) {
        mesh.skinning_weights(i, j) = 0.5;
        mesh.skinning_weights(i, p) = 0.5;
      } else {
        mesh.skinning_weights(i, j) = 1.0;
      }
    }
    m.mesh = std::move(mesh);
  }

  m.validate();
  return m;
}

// ---- model file ----

namespace {

using nlohmann::json;

json points_to_json(const Points& p) {
  json a = json::array();
  for (Eigen::Index i = 0; i < p.rows(); ++i) a.push_back({p(i, 0), p(i, 1), p(i, 2)});
  return a;
}

Points points_from_json(const json& a) {
  Points p(static_cast<Eigen::Index>(a.size()), 3);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (int c = 0; c < 3; ++c) p(static_cast<Eigen::Index>(i), c) = a[i][static_cast<std::size_t>(c)].get<double>();
  return p;
}

// basis stored as nested [points][3][cols]
json basis_to_json(const Eigen::MatrixXd& b) {
  json out = json::array();
  for (Eigen::Index r = 0; r < b.rows(); r += 3) {
    json pt = json::array();
    for (int a = 0; a < 3; ++a) {
      json row = json::array();
      for (Eigen::Index c = 0; c < b.cols(); ++c) row.push_back(b(r + a, c));
      pt.push_back(row);
    }
    out.push_back(pt);
  }
  return out;
}

Eigen::MatrixXd basis_from_json(const json& a, Eigen::Index cols_hint = -1) {
  const Eigen::Index n = static_cast<Eigen::Index>(a.size());
  Eigen::Index cols = cols_hint;
  if (n > 0) cols = static_cast<Eigen::Index>(a[0][0].size());
  if (cols < 0) cols = 0;
  Eigen::MatrixXd b(3 * n, cols);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int r = 0; r < 3; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        b(3 * i + r, c) = a[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  return b;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

Eigen::MatrixXd matrix_from_json(const json& a) {
  const Eigen::Index rows = static_cast<Eigen::Index>(a.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(a[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = a[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  return m;
}

}  // namespace

void save_model(const KinematicModel& model, const std::string& path) {
  json doc;
  doc["format"] = "handik-model-v1";
  doc["joints"] = model.joint_count;
  doc["parents"] = model.parents;
  doc["rest_joints0"] = points_to_json(model.rest_joints0);
  doc["joint_shape_basis"] = basis_to_json(model.joint_shape_basis);
  doc["root_index"] = model.root_index;
  doc["wrist_index"] = model.wrist_index;
  doc["fingertips"] = model.fingertips;
  if (model.mesh) {
    json mesh;
    mesh["template"] = points_to_json(model.mesh->template_verts);
    mesh["shape_basis"] = basis_to_json(model.mesh->shape_basis);
    mesh["pose_basis"] = basis_to_json(model.mesh->pose_basis);
    mesh["skinning"] = matrix_to_json(model.mesh->skinning_weights);
    mesh["regressor"] = matrix_to_json(model.mesh->joint_regressor);
    doc["mesh"] = std::move(mesh);
  }
  write_file(path, doc.dump(1));
}

KinematicModel load_model(const std::string& path) {
  json doc = json::parse(read_file(path));
  if (doc.value("format", "") != std::string("handik-model-v1"))
    throw std::runtime_error("load_model: unsupported format in " + path);
  KinematicModel m;
  m.joint_count = doc.at("joints").get<int>();
  m.parents = doc.at("parents").get<std::vector<int>>();
  m.rest_joints0 = points_from_json(doc.at("rest_joints0"));
  m.joint_shape_basis = basis_from_json(doc.at("joint_shape_basis"));
  m.root_index = doc.at("root_index").get<int>();
  m.wrist_index = doc.at("wrist_index").get<int>();
  m.fingertips = doc.at("fingertips").get<std::vector<int>>();
  if (doc.contains("mesh")) {
    const json& mj = doc["mesh"];
    MeshBlock mesh;
    mesh.template_verts = points_from_json(mj.at("template"));
    mesh.shape_basis = basis_from_json(mj.at("shape_basis"));
    mesh.pose_basis = basis_from_json(mj.at("pose_basis"), 0);
    mesh.skinning_weights = matrix_from_json(mj.at("skinning"));
    mesh.joint_regressor = matrix_from_json(mj.at("regressor"));
    if (mesh.pose_basis.rows() == 0) mesh.pose_basis = Eigen::MatrixXd::Zero(3 * mesh.vertex_count(), 0);
    m.mesh = std::move(mesh);
  }
  m.validate();
  return m;
}

}  // namespace handik
