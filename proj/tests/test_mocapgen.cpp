#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "handik/mocapgen.hpp"
#include "handik/util.hpp"
#include "testutil.hpp"

using namespace handik;
using testutil::quat_diff;

namespace {
const double kPi = std::numbers::pi;

PoseLibrary lib_for(const KinematicModel& m, int n, std::uint64_t seed) {
  std::mt19937_64 rng = rng_for(seed, 0);
  return synth_pose_library(n, m, rng);
}
}  // namespace

TEST_CASE("recombine_fingers") {
  const KinematicModel m = synth_model(31);
  const PoseLibrary lib = lib_for(m, 8, 1);

  SUBCASE("all selections from one pose reproduce it") {
    FingerSelection sel;
    for (int f = 0; f < 5; ++f) sel.finger_pose[f] = 3;
    sel.wrist_pose = 3;
    const Pose out = recombine_fingers(lib, sel);
    for (int j = 0; j < m.joint_count; ++j)
      CHECK(quat_diff(out.rotations[static_cast<std::size_t>(j)], lib.poses[3].rotations[static_cast<std::size_t>(j)]) == 0.0);
  }
  SUBCASE("one finger from a, the rest from b") {
    FingerSelection sel;
    for (int f = 0; f < 5; ++f) sel.finger_pose[f] = 1;
    sel.finger_pose[1] = 0;  // index finger from pose 0
    sel.wrist_pose = 1;
    const Pose out = recombine_fingers(lib, sel);
    for (int j : lib.finger_sets[1])
      CHECK(quat_diff(out.rotations[static_cast<std::size_t>(j)], lib.poses[0].rotations[static_cast<std::size_t>(j)]) == 0.0);
    for (int f : {0, 2, 3, 4})
      for (int j : lib.finger_sets[static_cast<std::size_t>(f)])
        CHECK(quat_diff(out.rotations[static_cast<std::size_t>(j)], lib.poses[1].rotations[static_cast<std::size_t>(j)]) == 0.0);
    CHECK(quat_diff(out.rotations[static_cast<std::size_t>(m.wrist_index)],
                    lib.poses[1].rotations[static_cast<std::size_t>(m.wrist_index)]) == 0.0);
  }
  SUBCASE("closure: every joint rotation comes verbatim from its source") {
    FingerSelection sel{{4, 2, 7, 0, 5}, 6};
    const Pose out = recombine_fingers(lib, sel);
    for (int f = 0; f < 5; ++f)
      for (int j : lib.finger_sets[static_cast<std::size_t>(f)]) {
        const Quaternion& got = out.rotations[static_cast<std::size_t>(j)];
        const Quaternion& src = lib.poses[static_cast<std::size_t>(sel.finger_pose[f])].rotations[static_cast<std::size_t>(j)];
        CHECK(got.w == src.w);
        CHECK(got.x == src.x);
        CHECK(got.y == src.y);
        CHECK(got.z == src.z);
      }
  }
  SUBCASE("bad id") {
    FingerSelection sel;
    sel.finger_pose[2] = 99;
    CHECK_THROWS_AS(recombine_fingers(lib, sel), std::invalid_argument);
  }
}

TEST_CASE("interpolate_pose") {
  const KinematicModel m = synth_model(32);
  const PoseLibrary lib = lib_for(m, 3, 2);
  const Pose& target = lib.poses[0];

  const Pose at0 = interpolate_pose(target, 0.0);
  for (const Quaternion& q : at0.rotations) CHECK(quat_diff(q, Quaternion::identity()) < 1e-15);

  const Pose at1 = interpolate_pose(target, 1.0);
  for (std::size_t j = 0; j < at1.rotations.size(); ++j)
    CHECK(quat_diff(at1.rotations[j], target.rotations[j]) < 1e-12);

  // halving a single 90-degree joint
  Pose single = Pose::rest(m.joint_count);
  single.rotations[5] = axis_angle_to_quat(AxisAngle{0, 0, kPi / 2});
  const Pose mid = interpolate_pose(single, 0.5);
  const Quaternion want = axis_angle_to_quat(AxisAngle{0, 0, kPi / 4});
  CHECK(quat_diff(mid.rotations[5], want) < 1e-12);
}

TEST_CASE("sample_shape") {
  AugmentConfig cfg;
  SUBCASE("zero std gives the mean shape") {
    cfg.shape_std = 0.0;
    std::mt19937_64 rng(1);
    CHECK(sample_shape(cfg, 10, rng).beta.norm() == 0.0);
  }
  SUBCASE("fixed seed reproduces the draw") {
    std::mt19937_64 a = rng_for(5, 0), b = rng_for(5, 0);
    CHECK((sample_shape(cfg, 10, a).beta - sample_shape(cfg, 10, b).beta).norm() == 0.0);
  }
  SUBCASE("N(0,3): statistics over 100k draws") {
    std::mt19937_64 rng(123);
    const int n = 100000;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(10), sumsq = Eigen::VectorXd::Zero(10);
    for (int i = 0; i < n; ++i) {
      const Shape s = sample_shape(cfg, 10, rng);
      sum += s.beta;
      sumsq += s.beta.cwiseProduct(s.beta);
    }
    for (int k = 0; k < 10; ++k) {
      const double mean = sum(k) / n;
      const double stddev = std::sqrt(sumsq(k) / n - mean * mean);
      CHECK(std::abs(mean) < 0.05);
      CHECK(std::abs(stddev - 3.0) < 0.05);
    }
  }
}

TEST_CASE("gen_paired_sample") {
  const KinematicModel m = synth_model(33);
  const PoseLibrary lib = lib_for(m, 20, 3);
  AugmentConfig cfg;
  cfg.seed = 17;

  SUBCASE("rotation target is FK-consistent with the position target") {
    for (int i = 0; i < 20; ++i) {
      std::mt19937_64 rng = rng_for(17, static_cast<std::uint64_t>(i));
      const IkSample s = gen_paired_sample(lib, m, cfg, rng);
      REQUIRE(s.target_rotations.has_value());
      CHECK(s.kind == SampleKind::mocap);
      const JointSet rest{s.input.x_ref, JointFrame::normalized};
      const JointSet fk = normalize_joints(fk_joints_from_rest(m, rest, *s.target_rotations), m);
      CHECK((fk.positions - s.target_positions.positions).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
  SUBCASE("deterministic per (seed, index)") {
    std::mt19937_64 a = rng_for(17, 4), b = rng_for(17, 4);
    const IkSample sa = gen_paired_sample(lib, m, cfg, a);
    const IkSample sb = gen_paired_sample(lib, m, cfg, b);
    CHECK((sa.input.flatten() - sb.input.flatten()).norm() == 0.0);
    CHECK((sa.target_positions.positions - sb.target_positions.positions).norm() == 0.0);
  }
  SUBCASE("position target is root-relative and scale-normalized") {
    std::mt19937_64 rng = rng_for(17, 9);
    const IkSample s = gen_paired_sample(lib, m, cfg, rng);
    CHECK(s.target_positions.frame == JointFrame::normalized);
    CHECK(s.target_positions.positions.row(m.root_index).norm() < 1e-12);
    const double ref = (s.target_positions.positions.row(m.root_index) -
                        s.target_positions.positions.row(m.wrist_index)).norm();
    CHECK(std::abs(ref - 1.0) < 1e-9);
  }
}

TEST_CASE("gen_noisy_sample") {
  const KinematicModel m = synth_model(34);
  const PoseLibrary lib = lib_for(m, 20, 4);
  AugmentConfig cfg;
  cfg.seed = 23;

  SUBCASE("zero noise leaves the input clean") {
    NoiseModel noise;
    noise.std = 0.0;
    std::mt19937_64 rng = rng_for(23, 0);
    const IkSample s = gen_noisy_sample(lib, m, cfg, noise, rng);
    CHECK_FALSE(s.target_rotations.has_value());
    CHECK(s.kind == SampleKind::noisy);
    CHECK((s.input.x - s.target_positions.positions).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("mean input error matches a direct Monte-Carlo oracle") {
    NoiseModel noise;
    noise.std = 0.05;
    const int n = 10000;
    double gen_err = 0.0;
    for (int i = 0; i < n; ++i) {
      std::mt19937_64 rng = rng_for(23, static_cast<std::uint64_t>(i));
      const IkSample s = gen_noisy_sample(lib, m, cfg, noise, rng);
      gen_err += (s.input.x - s.target_positions.positions).rowwise().norm().mean();
    }
    gen_err /= n;

    // oracle: perturb the same clean skeletons with an independent stream,
    // renormalize, and measure the same statistic
    std::mt19937_64 noise_rng(987654321);
    std::normal_distribution<double> g(0, 1);
    double oracle_err = 0.0;
    for (int i = 0; i < n; ++i) {
      std::mt19937_64 rng = rng_for(23, static_cast<std::uint64_t>(i));
      const IkSample clean = gen_paired_sample(lib, m, cfg, rng);
      JointSet noisy = clean.target_positions;
      for (int j = 0; j < m.joint_count; ++j)
        for (int c = 0; c < 3; ++c) noisy.positions(j, c) += noise.std * g(noise_rng);
      noisy = normalize_joints(noisy, m);
      oracle_err += (noisy.positions - clean.target_positions.positions).rowwise().norm().mean();
    }
    oracle_err /= n;

    CHECK(std::abs(gen_err - oracle_err) / oracle_err < 0.03);
  }
  SUBCASE("expected input error grows with the noise std") {
    double prev = 0.0;
    for (double std_frac : {0.02, 0.05, 0.1}) {
      NoiseModel noise;
      noise.std = std_frac;
      double err = 0.0;
      const int n = 2000;
      for (int i = 0; i < n; ++i) {
        std::mt19937_64 rng = rng_for(29, static_cast<std::uint64_t>(i));
        const IkSample s = gen_noisy_sample(lib, m, cfg, noise, rng);
        err += (s.input.x - s.target_positions.positions).rowwise().norm().mean();
      }
      err /= n;
      CHECK(err > prev);
      prev = err;
    }
  }
}

TEST_CASE("synth_pose_library") {
  const KinematicModel m = synth_model(35);

  SUBCASE("deterministic per seed") {
    std::mt19937_64 a = rng_for(3, 0), b = rng_for(3, 0);
    const PoseLibrary la = synth_pose_library(4, m, a);
    const PoseLibrary lb = synth_pose_library(4, m, b);
    for (int p = 0; p < 4; ++p)
      for (int j = 0; j < m.joint_count; ++j)
        CHECK(quat_diff(la.poses[static_cast<std::size_t>(p)].rotations[static_cast<std::size_t>(j)],
                        lb.poses[static_cast<std::size_t>(p)].rotations[static_cast<std::size_t>(j)]) == 0.0);
  }
  SUBCASE("rotations are unit and within the documented bounds") {
    std::mt19937_64 rng = rng_for(9, 0);
    const PoseLibrary lib = synth_pose_library(50, m, rng);
    const double kDeg = kPi / 180.0;
    for (const Pose& pose : lib.poses) {
      for (const Quaternion& q : pose.rotations) CHECK(q.is_unit(1e-9));
      CHECK(quat_to_axis_angle(pose.rotations[static_cast<std::size_t>(m.wrist_index)]).angle() <= 60 * kDeg + 1e-9);
      for (const auto& chain : lib.finger_sets) {
        CHECK(quat_to_axis_angle(pose.rotations[static_cast<std::size_t>(chain[0])]).angle() <= 110 * kDeg + 1e-9);
        CHECK(quat_to_axis_angle(pose.rotations[static_cast<std::size_t>(chain[1])]).angle() <= 100 * kDeg + 1e-9);
        CHECK(quat_to_axis_angle(pose.rotations[static_cast<std::size_t>(chain[2])]).angle() <= 80 * kDeg + 1e-9);
        CHECK(quat_diff(pose.rotations[static_cast<std::size_t>(chain[3])], Quaternion::identity()) == 0.0);
      }
    }
  }
  SUBCASE("count contract") {
    std::mt19937_64 rng = rng_for(1, 0);
    CHECK_THROWS_AS(synth_pose_library(0, m, rng), std::invalid_argument);
  }
}

TEST_CASE("generate_dataset") {
  const KinematicModel m = synth_model(36);
  const PoseLibrary lib = lib_for(m, 10, 7);
  AugmentConfig cfg;
  NoiseModel noise;

  const std::vector<IkSample> all = generate_dataset(lib, m, cfg, noise, 40, 0.25, 5);
  int noisy = 0;
  for (const IkSample& s : all) noisy += s.kind == SampleKind::noisy ? 1 : 0;
  CHECK(noisy == 10);

  // sharding: regenerating any index in isolation reproduces the record
  const std::vector<IkSample> again = generate_dataset(lib, m, cfg, noise, 40, 0.25, 5);
  for (int i : {0, 7, 39}) {
    CHECK((all[static_cast<std::size_t>(i)].input.flatten() - again[static_cast<std::size_t>(i)].input.flatten()).norm() == 0.0);
    CHECK(all[static_cast<std::size_t>(i)].kind == again[static_cast<std::size_t>(i)].kind);
  }
  CHECK_THROWS_AS(generate_dataset(lib, m, cfg, noise, 0, 0.5, 5), std::invalid_argument);
}

TEST_CASE("pose library file round trip") {
  const KinematicModel m = synth_model(37);
  PoseLibrary lib = lib_for(m, 6, 11);
  lib.subjects = {0, 0, 1, 1, 2, 2};
  const std::string path = "poses_roundtrip.json";
  save_pose_library(lib, path);
  const PoseLibrary back = load_pose_library(path, m);
  REQUIRE(back.size() == lib.size());
  CHECK(back.subjects == lib.subjects);
  for (int p = 0; p < lib.size(); ++p)
    for (int j = 0; j < m.joint_count; ++j)
      CHECK(quat_diff(back.poses[static_cast<std::size_t>(p)].rotations[static_cast<std::size_t>(j)],
                      lib.poses[static_cast<std::size_t>(p)].rotations[static_cast<std::size_t>(j)]) == 0.0);
  std::remove(path.c_str());

  write_file("bad_poses.json", "{\"format\":\"nope\",\"poses\":[]}");
  CHECK_THROWS_AS(load_pose_library("bad_poses.json", m), std::runtime_error);
  std::remove("bad_poses.json");
}
