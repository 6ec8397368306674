#include <doctest.h>

#include <cstdio>
#include <numbers>
#include <random>

#include "handik/handmodel.hpp"
#include "handik/util.hpp"
#include "testutil.hpp"

using namespace handik;
using testutil::random_unit_quat;
using testutil::random_unit_vector;
using testutil::rotate_axis_angle;

namespace {

const double kPi = std::numbers::pi;

// Minimal 3-joint chain: wrist -> elbow-like joint -> tip, along +y.
KinematicModel make_chain(double l1 = 2.0, double l2 = 3.0) {
  KinematicModel m;
  m.joint_count = 3;
  m.parents = {-1, 0, 1};
  m.rest_joints0 = Points::Zero(3, 3);
  m.rest_joints0.row(1) = Eigen::RowVector3d(0, l1, 0);
  m.rest_joints0.row(2) = Eigen::RowVector3d(0, l1 + l2, 0);
  m.joint_shape_basis = Eigen::MatrixXd::Zero(9, 0);
  m.root_index = 1;
  m.wrist_index = 0;
  m.fingertips = {2};
  m.validate();
  return m;
}

Pose random_pose(const KinematicModel& m, std::mt19937_64& rng) {
  Pose p = Pose::rest(m.joint_count);
  for (auto& q : p.rotations) q = random_unit_quat(rng);
  return p;
}

}  // namespace

TEST_CASE("rest_joints is affine in beta") {
  const KinematicModel m = synth_model(1);
  const int B = m.shape_dim();

  const JointSet base = rest_joints(m, Shape{});
  CHECK((base.positions - m.rest_joints0).cwiseAbs().maxCoeff() == 0.0);

  Shape e1 = Shape::zeros(B);
  e1.beta(0) = 1.0;
  const JointSet r1 = rest_joints(m, e1);
  for (int j = 0; j < m.joint_count; ++j)
    for (int c = 0; c < 3; ++c)
      CHECK(r1.positions(j, c) == doctest::Approx(m.rest_joints0(j, c) + m.joint_shape_basis(3 * j + c, 0)).epsilon(1e-12));

  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 1);
  Shape b1 = Shape::zeros(B), b2 = Shape::zeros(B), sum = Shape::zeros(B);
  for (int i = 0; i < B; ++i) {
    b1.beta(i) = n(rng);
    b2.beta(i) = n(rng);
    sum.beta(i) = b1.beta(i) + b2.beta(i);
  }
  const Points lhs = rest_joints(m, sum).positions;
  const Points rhs = rest_joints(m, b1).positions + rest_joints(m, b2).positions - m.rest_joints0;
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("deform_template blendshape terms") {
  const KinematicModel m = synth_model(2);
  REQUIRE(m.mesh.has_value());
  const Pose rest = Pose::rest(m.joint_count);

  SUBCASE("both terms vanish at beta=0, rest pose") {
    const Points t = deform_template(m, Shape{}, rest);
    CHECK((t - m.mesh->template_verts).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("shape term is the basis column") {
    Shape e1 = Shape::zeros(m.shape_dim());
    e1.beta(1) = 1.0;
    const Points t = deform_template(m, e1, rest);
    for (int v = 0; v < m.mesh->vertex_count(); ++v)
      for (int c = 0; c < 3; ++c)
        CHECK(t(v, c) == doctest::Approx(m.mesh->template_verts(v, c) + m.mesh->shape_basis(3 * v + c, 1)).epsilon(1e-12));
  }
  SUBCASE("zero pose basis ignores the pose") {
    std::mt19937_64 rng(8);
    const Pose pose = random_pose(m, rng);
    Shape b = Shape::zeros(m.shape_dim());
    b.beta(3) = 0.7;
    const Points posed = deform_template(m, b, pose);
    const Points still = deform_template(m, b, rest);
    CHECK((posed - still).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("pose term follows vec(R)-vec(I)") {
    // chain with one rotating joint (joint 1) and a hand-made pose basis
    KinematicModel chain = make_chain();
    MeshBlock mesh;
    mesh.template_verts = Points::Zero(1, 3);
    mesh.shape_basis = Eigen::MatrixXd::Zero(3, 0);
    mesh.pose_basis = Eigen::MatrixXd::Zero(3, 9);
    mesh.pose_basis(0, 1) = 2.0;  // x offset driven by R(0,1)
    mesh.skinning_weights = Eigen::MatrixXd::Zero(1, 3);
    mesh.skinning_weights(0, 0) = 1.0;
    mesh.joint_regressor = Eigen::MatrixXd::Zero(3, 1);
    chain.joint_shape_basis = Eigen::MatrixXd::Zero(9, 0);
    chain.mesh = mesh;

    Pose pose = Pose::rest(3);
    pose.rotations[1] = axis_angle_to_quat(AxisAngle{0, 0, kPi / 2});  // R(0,1) = -1
    const Points t = deform_template(chain, Shape{}, pose);
    CHECK(t(0, 0) == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(std::abs(t(0, 1)) < 1e-12);
  }
  SUBCASE("missing mesh block") {
    KinematicModel bare = synth_model(2, false);
    CHECK_THROWS_AS(deform_template(bare, Shape{}, rest), std::logic_error);
    CHECK_THROWS_AS(lbs_mesh(bare, Shape{}, rest), std::logic_error);
  }
}

TEST_CASE("fk_joints") {
  const KinematicModel m = synth_model(3);

  SUBCASE("rest pose returns rest joints") {
    const JointSet fk = fk_joints(m, Shape{}, Pose::rest(m.joint_count));
    CHECK((fk.positions - m.rest_joints0).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("global wrist rotation rotates everything about the wrist") {
    std::mt19937_64 rng(12);
    const Eigen::Vector3d aa = random_unit_vector(rng) * 1.1;
    Pose pose = Pose::rest(m.joint_count);
    pose.rotations[static_cast<std::size_t>(m.wrist_index)] = axis_angle_to_quat(AxisAngle{aa.x(), aa.y(), aa.z()});
    const JointSet fk = fk_joints(m, Shape{}, pose);
    const Eigen::RowVector3d wrist = m.rest_joints0.row(m.wrist_index);
    for (int j = 0; j < m.joint_count; ++j) {
      const Eigen::Vector3d expect = rotate_axis_angle(aa, (m.rest_joints0.row(j) - wrist).transpose()) + wrist.transpose();
      CHECK((fk.positions.row(j).transpose() - expect).norm() < 1e-9);
    }
  }
  SUBCASE("two-bone chain, 90 degree bend at the middle joint") {
    const KinematicModel chain = make_chain(2.0, 3.0);
    Pose pose = Pose::rest(3);
    pose.rotations[1] = axis_angle_to_quat(AxisAngle{kPi / 2, 0, 0});  // +90 about x maps y to z
    const JointSet fk = fk_joints(chain, Shape{}, pose);
    CHECK((fk.positions.row(1) - Eigen::RowVector3d(0, 2, 0)).norm() < 1e-12);
    CHECK((fk.positions.row(2) - Eigen::RowVector3d(0, 2, 3)).norm() < 1e-12);
  }
}

TEST_CASE("fk properties: equivariance and bone-length preservation") {
  const KinematicModel m = synth_model(5);
  std::mt19937_64 rng(77);
  const JointSet rest = rest_joints(m, Shape{});
  const auto bones = m.bones();

  for (int it = 0; it < 200; ++it) {
    Pose pose = random_pose(m, rng);
    const JointSet fk = fk_joints(m, Shape{}, pose);

    // bone lengths survive any pose
    for (auto [p, c] : bones) {
      const double rest_len = (rest.positions.row(c) - rest.positions.row(p)).norm();
      const double posed_len = (fk.positions.row(c) - fk.positions.row(p)).norm();
      CHECK(std::abs(rest_len - posed_len) < 1e-9);
    }

    // pre-rotating the wrist rotation rotates the output rigidly
    const Eigen::Vector3d aa = random_unit_vector(rng) * 0.9;
    const Quaternion extra = axis_angle_to_quat(AxisAngle{aa.x(), aa.y(), aa.z()});
    Pose pre = pose;
    pre.rotations[static_cast<std::size_t>(m.wrist_index)] =
        quat_mul(extra, pose.rotations[static_cast<std::size_t>(m.wrist_index)]);
    const JointSet fk2 = fk_joints(m, Shape{}, pre);
    const Eigen::RowVector3d wrist = rest.positions.row(m.wrist_index);
    for (int j = 0; j < m.joint_count; ++j) {
      const Eigen::Vector3d expect = rotate_axis_angle(aa, (fk.positions.row(j) - wrist).transpose()) + wrist.transpose();
      CHECK((fk2.positions.row(j).transpose() - expect).norm() < 1e-9);
    }
  }
}

TEST_CASE("lbs_mesh") {
  const KinematicModel m = synth_model(6);
  REQUIRE(m.mesh.has_value());

  SUBCASE("rest pose leaves the deformed template unchanged") {
    Shape b = Shape::zeros(m.shape_dim());
    b.beta(2) = 0.5;
    const Points skinned = lbs_mesh(m, b, Pose::rest(m.joint_count));
    const Points tmpl = deform_template(m, b, Pose::rest(m.joint_count));
    CHECK((skinned - tmpl).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("weight-1 vertex follows its joint rigidly") {
    std::mt19937_64 rng(9);
    const Pose pose = random_pose(m, rng);
    const JointSet rest = rest_joints(m, Shape{});
    const FkResult fk = fk_run(m, rest.positions, pose);
    const Points skinned = lbs_mesh(m, Shape{}, pose);
    for (int j = 0; j < m.joint_count; ++j) {  // vertex j is pinned to joint j with weight 1
      const Eigen::Vector3d t = m.mesh->template_verts.row(j).transpose();
      const Eigen::Vector3d expect = fk.global[static_cast<std::size_t>(j)] * (t - rest.positions.row(j).transpose()) +
                                     fk.positions.row(j).transpose();
      CHECK((skinned.row(j).transpose() - expect).norm() < 1e-12);
    }
  }
  SUBCASE("global wrist rotation moves all vertices rigidly") {
    std::mt19937_64 rng(10);
    const Eigen::Vector3d aa = random_unit_vector(rng) * 0.8;
    Pose pose = Pose::rest(m.joint_count);
    pose.rotations[static_cast<std::size_t>(m.wrist_index)] = axis_angle_to_quat(AxisAngle{aa.x(), aa.y(), aa.z()});
    const Points skinned = lbs_mesh(m, Shape{}, pose);
    const Eigen::RowVector3d wrist = m.rest_joints0.row(m.wrist_index);
    for (int v = 0; v < m.mesh->vertex_count(); ++v) {
      const Eigen::Vector3d expect =
          rotate_axis_angle(aa, (m.mesh->template_verts.row(v) - wrist).transpose()) + wrist.transpose();
      CHECK((skinned.row(v).transpose() - expect).norm() < 1e-9);
    }
  }
}

TEST_CASE("lbs with all weight on the wrist is a rigid transform") {
  KinematicModel m = synth_model(61);
  REQUIRE(m.mesh.has_value());
  m.mesh->skinning_weights.setZero();
  m.mesh->skinning_weights.col(m.wrist_index).setOnes();
  std::mt19937_64 rng(14);
  const Pose pose = random_pose(m, rng);
  const JointSet rest = rest_joints(m, Shape{});
  const FkResult fk = fk_run(m, rest.positions, pose);
  const Points tmpl = deform_template(m, Shape{}, pose);
  const Points skinned = lbs_mesh(m, Shape{}, pose);
  const Eigen::Matrix3d g = fk.global[static_cast<std::size_t>(m.wrist_index)];
  const Eigen::Vector3d wrist = rest.positions.row(m.wrist_index).transpose();
  for (int v = 0; v < m.mesh->vertex_count(); ++v) {
    const Eigen::Vector3d expect = g * (tmpl.row(v).transpose() - wrist) + wrist;
    CHECK((skinned.row(v).transpose() - expect).norm() < 1e-9);
  }
}

TEST_CASE("bone_vectors") {
  KinematicModel m = make_chain(5.0, 5.0);
  JointSet js;
  js.positions = Points::Zero(3, 3);
  js.positions.row(1) = Eigen::RowVector3d(0, 0, 5);
  js.positions.row(2) = Eigen::RowVector3d(0, 0, 10);

  std::vector<std::uint8_t> flags;
  const Points d = bone_vectors(js, m, &flags);
  CHECK((d.row(0) - Eigen::RowVector3d(0, 0, 0)).norm() == 0.0);  // root row
  CHECK((d.row(1) - Eigen::RowVector3d(0, 0, 1)).norm() < 1e-12);
  CHECK(flags[1] == 0);

  // coincident joints flag a degenerate bone
  js.positions.row(2) = js.positions.row(1);
  const Points d2 = bone_vectors(js, m, &flags);
  CHECK(d2.row(2).norm() == 0.0);
  CHECK(flags[2] == 1);

  // rigid rotation rotates every bone direction identically
  const KinematicModel hand = synth_model(4);
  std::mt19937_64 rng(21);
  const Eigen::Vector3d aa = random_unit_vector(rng) * 1.3;
  JointSet base = rest_joints(hand, Shape{});
  JointSet rot = base;
  for (int j = 0; j < hand.joint_count; ++j)
    rot.positions.row(j) = rotate_axis_angle(aa, base.positions.row(j).transpose()).transpose();
  const Points db = bone_vectors(base, hand);
  const Points dr = bone_vectors(rot, hand);
  for (int j = 0; j < hand.joint_count; ++j) {
    const Eigen::Vector3d expect = rotate_axis_angle(aa, db.row(j).transpose());
    CHECK((dr.row(j).transpose() - expect).norm() < 1e-9);
  }
}

TEST_CASE("normalize_joints") {
  const KinematicModel m = synth_model(7);
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0, 60);
  JointSet js;
  js.positions = Points::Zero(m.joint_count, 3);
  for (int j = 0; j < m.joint_count; ++j)
    js.positions.row(j) = Eigen::RowVector3d(n(rng), n(rng), n(rng)) + m.rest_joints0.row(j);

  const JointSet norm = normalize_joints(js, m);
  CHECK(norm.frame == JointFrame::normalized);
  CHECK(norm.positions.row(m.root_index).norm() < 1e-12);
  CHECK(std::abs((norm.positions.row(m.root_index) - norm.positions.row(m.wrist_index)).norm() - 1.0) < 1e-9);

  // idempotent
  const JointSet twice = normalize_joints(norm, m);
  CHECK((twice.positions - norm.positions).cwiseAbs().maxCoeff() < 1e-12);

  // scale invariant
  JointSet doubled = js;
  doubled.positions *= 2.0;
  const JointSet norm2 = normalize_joints(doubled, m);
  CHECK((norm2.positions - norm.positions).cwiseAbs().maxCoeff() < 1e-12);

  // degenerate reference bone
  JointSet bad = js;
  bad.positions.row(m.root_index) = bad.positions.row(m.wrist_index);
  CHECK_THROWS_AS(normalize_joints(bad, m), std::domain_error);
}

TEST_CASE("synth_model construction") {
  const KinematicModel a = synth_model(123);
  const KinematicModel b = synth_model(123);
  CHECK((a.rest_joints0 - b.rest_joints0).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.joint_shape_basis - b.joint_shape_basis).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.parents == b.parents);

  const KinematicModel c = synth_model(124);
  CHECK((a.rest_joints0 - c.rest_joints0).cwiseAbs().maxCoeff() > 0.0);

  // five leaf fingertips, valid tree
  a.validate();
  CHECK(a.fingertips.size() == 5);
  std::vector<int> child_count(static_cast<std::size_t>(a.joint_count), 0);
  for (int j = 0; j < a.joint_count; ++j)
    if (a.parents[static_cast<std::size_t>(j)] >= 0) child_count[static_cast<std::size_t>(a.parents[static_cast<std::size_t>(j)])]++;
  for (int tip : a.fingertips) CHECK(child_count[static_cast<std::size_t>(tip)] == 0);

  REQUIRE(a.mesh.has_value());
  for (int v = 0; v < a.mesh->vertex_count(); ++v)
    CHECK(a.mesh->skinning_weights.row(v).sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("joint shape basis agrees with the mesh regressor route") {
  const KinematicModel m = synth_model(15);
  REQUIRE(m.mesh.has_value());
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 2);
  Shape b = Shape::zeros(m.shape_dim());
  for (int i = 0; i < m.shape_dim(); ++i) b.beta(i) = n(rng);

  const Points direct = rest_joints(m, b).positions;
  const Points shaped = deform_template(m, b, Pose::rest(m.joint_count));
  const Points via_regressor = m.mesh->joint_regressor * shaped;
  CHECK((direct - via_regressor).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("model file round trip") {
  const KinematicModel m = synth_model(99);
  const std::string path = "synth_model_roundtrip.json";
  save_model(m, path);
  const KinematicModel r = load_model(path);
  CHECK(r.joint_count == m.joint_count);
  CHECK(r.parents == m.parents);
  CHECK(r.root_index == m.root_index);
  CHECK(r.wrist_index == m.wrist_index);
  CHECK(r.fingertips == m.fingertips);
  CHECK((r.rest_joints0 - m.rest_joints0).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r.joint_shape_basis - m.joint_shape_basis).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(r.mesh.has_value());
  CHECK((r.mesh->template_verts - m.mesh->template_verts).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r.mesh->skinning_weights - m.mesh->skinning_weights).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());

  handik::write_file("bad_model.json", "{\"format\":\"handik-model-v2\"}");
  CHECK_THROWS_AS(load_model("bad_model.json"), std::runtime_error);
  std::remove("bad_model.json");
}
