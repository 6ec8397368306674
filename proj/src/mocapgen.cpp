#include "handik/mocapgen.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "handik/util.hpp"

namespace handik {

PoseLibrary make_library(const KinematicModel& model, std::vector<Pose> poses) {
  PoseLibrary lib;
  lib.poses = std::move(poses);
  for (const Pose& p : lib.poses)
    if (p.count() != model.joint_count) throw std::invalid_argument("make_library: pose joint count mismatch");
  lib.finger_sets = model.finger_chains();
  if (lib.finger_sets.size() != 5) throw std::invalid_argument("make_library: model does not have 5 fingers");
  lib.wrist_set = {model.wrist_index};
  // the partition must cover every joint exactly once
  std::vector<int> seen(static_cast<std::size_t>(model.joint_count), 0);
  for (const auto& set : lib.finger_sets)
    for (int j : set) seen[static_cast<std::size_t>(j)]++;
  for (int j : lib.wrist_set) seen[static_cast<std::size_t>(j)]++;
  for (int c : seen)
    if (c != 1) throw std::invalid_argument("make_library: finger partition does not cover all joints once");
  return lib;
}

Pose recombine_fingers(const PoseLibrary& lib, const FingerSelection& sel) {
  const auto check = [&](int id) {
    if (id < 0 || id >= lib.size()) throw std::invalid_argument("recombine_fingers: pose id out of range");
  };
  check(sel.wrist_pose);
  for (int f = 0; f < 5; ++f) check(sel.finger_pose[f]);

  Pose out = lib.poses[static_cast<std::size_t>(sel.wrist_pose)];
  for (int j : lib.wrist_set)
    out.rotations[static_cast<std::size_t>(j)] =
        lib.poses[static_cast<std::size_t>(sel.wrist_pose)].rotations[static_cast<std::size_t>(j)];
  for (int f = 0; f < 5; ++f)
    for (int j : lib.finger_sets[static_cast<std::size_t>(f)])
      out.rotations[static_cast<std::size_t>(j)] =
          lib.poses[static_cast<std::size_t>(sel.finger_pose[f])].rotations[static_cast<std::size_t>(j)];
  return out;
}

Pose interpolate_pose(const Pose& target, double t) {
  Pose out;
  out.rotations.reserve(target.rotations.size());
  for (const Quaternion& q : target.rotations) out.rotations.push_back(slerp(Quaternion::identity(), q, t));
  return out;
}

Shape sample_shape(const AugmentConfig& cfg, int shape_dim, std::mt19937_64& rng) {
  Shape s = Shape::zeros(shape_dim);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < shape_dim; ++i) s.beta(i) = cfg.shape_std * n(rng);
  return s;
}

namespace {

// shared core: draw an augmented pose + shape; returns clean FK joints too
struct AugmentedDraw {
  Pose pose;
  Shape shape;
  JointSet rest;
  JointSet joints;  // absolute FK output
};

AugmentedDraw draw_augmented(const PoseLibrary& lib, const KinematicModel& model,
                             const AugmentConfig& cfg, std::mt19937_64& rng) {
  if (lib.size() < 1) throw std::invalid_argument("draw_augmented: empty pose library");
  std::uniform_int_distribution<int> pick(0, lib.size() - 1);
  FingerSelection sel;
  for (int f = 0; f < 5; ++f) sel.finger_pose[f] = pick(rng);
  sel.wrist_pose = pick(rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double t = unit(rng);

  AugmentedDraw d;
  Pose raw = interpolate_pose(recombine_fingers(lib, sel), t);
  d.pose.rotations.reserve(raw.rotations.size());
  for (const Quaternion& q : raw.rotations) d.pose.rotations.push_back(quat_canonical(q));
  d.shape = sample_shape(cfg, model.shape_dim(), rng);
  d.rest = rest_joints(model, d.shape);
  d.joints = fk_joints_from_rest(model, d.rest, d.pose);
  return d;
}

}  // namespace

IkSample gen_paired_sample(const PoseLibrary& lib, const KinematicModel& model,
                           const AugmentConfig& cfg, std::mt19937_64& rng) {
  const AugmentedDraw d = draw_augmented(lib, model, cfg, rng);
  IkSample s;
  s.input = encode_input(d.joints, d.rest, model);
  s.target_rotations = d.pose;
  s.target_positions = normalize_joints(d.joints, model);
  s.kind = SampleKind::mocap;
  return s;
}

IkSample gen_noisy_sample(const PoseLibrary& lib, const KinematicModel& model,
                          const AugmentConfig& cfg, const NoiseModel& noise, std::mt19937_64& rng) {
  const AugmentedDraw d = draw_augmented(lib, model, cfg, rng);
  JointSet clean = normalize_joints(d.joints, model);
  JointSet noisy = clean;
  std::normal_distribution<double> n(0.0, 1.0);
  for (int j = 0; j < model.joint_count; ++j)
    for (int c = 0; c < 3; ++c) noisy.positions(j, c) += noise.std * n(rng);
  noisy = normalize_joints(noisy, model);

  IkSample s;
  s.input = encode_input(noisy, d.rest, model);
  s.target_positions = std::move(clean);
  s.kind = SampleKind::noisy;
  return s;
}

PoseLibrary synth_pose_library(int n, const KinematicModel& model, std::mt19937_64& rng) {
  if (n < 1) throw std::invalid_argument("synth_pose_library: need at least one pose");
  constexpr double kDeg = std::numbers::pi / 180.0;
  std::uniform_real_distribution<double> mcp_flex(-15 * kDeg, 90 * kDeg);
  std::uniform_real_distribution<double> mcp_abd(-20 * kDeg, 20 * kDeg);
  std::uniform_real_distribution<double> pip_flex(0.0, 100 * kDeg);
  std::uniform_real_distribution<double> dip_flex(0.0, 80 * kDeg);
  std::uniform_real_distribution<double> wrist_angle(0.0, 60 * kDeg);

  const auto chains = model.finger_chains();
  std::vector<Pose> poses;
  poses.reserve(static_cast<std::size_t>(n));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    Pose pose = Pose::rest(model.joint_count);
    Eigen::Vector3d axis(gauss(rng), gauss(rng), gauss(rng));
    while (axis.norm() < 1e-9) axis = Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
    axis.normalize();
    const double wa = wrist_angle(rng);
    pose.rotations[static_cast<std::size_t>(model.wrist_index)] =
        axis_angle_to_quat(AxisAngle{axis.x() * wa, axis.y() * wa, axis.z() * wa});

    for (const auto& chain : chains) {
      for (std::size_t depth = 0; depth < chain.size(); ++depth) {
        const int j = chain[depth];
        Quaternion q = Quaternion::identity();
        if (depth == 0) {
          const Quaternion flex = axis_angle_to_quat(AxisAngle{mcp_flex(rng), 0, 0});
          const Quaternion abd = axis_angle_to_quat(AxisAngle{0, 0, mcp_abd(rng)});
          q = quat_mul(abd, flex);
        } else if (depth == 1) {
          q = axis_angle_to_quat(AxisAngle{pip_flex(rng), 0, 0});
        } else if (depth == 2) {
          q = axis_angle_to_quat(AxisAngle{dip_flex(rng), 0, 0});
        }
        pose.rotations[static_cast<std::size_t>(j)] = quat_canonical(q);
      }
    }
    poses.push_back(std::move(pose));
  }
  return make_library(model, std::move(poses));
}

std::vector<IkSample> generate_dataset(const PoseLibrary& lib, const KinematicModel& model,
                                       const AugmentConfig& cfg, const NoiseModel& noise,
                                       int count, double noisy_fraction, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("generate_dataset: count must be positive");
  if (noisy_fraction < 0.0 || noisy_fraction > 1.0)
    throw std::invalid_argument("generate_dataset: noisy fraction must be in [0, 1]");
  std::vector<IkSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng = rng_for(seed, static_cast<std::uint64_t>(i));
    const bool is_noisy =
        std::floor((i + 1) * noisy_fraction) > std::floor(i * noisy_fraction);
    out.push_back(is_noisy ? gen_noisy_sample(lib, model, cfg, noise, rng)
                           : gen_paired_sample(lib, model, cfg, rng));
  }
  return out;
}

void save_pose_library(const PoseLibrary& lib, const std::string& path) {
  nlohmann::json doc;
  doc["format"] = "handik-poses-v1";
  doc["joints"] = lib.poses.empty() ? 0 : lib.poses.front().count();
  nlohmann::json poses = nlohmann::json::array();
  for (const Pose& p : lib.poses) {
    nlohmann::json pj = nlohmann::json::array();
    for (const Quaternion& q : p.rotations) pj.push_back({q.w, q.x, q.y, q.z});
    poses.push_back(std::move(pj));
  }
  doc["poses"] = std::move(poses);
  if (!lib.subjects.empty()) doc["subjects"] = lib.subjects;
  write_file(path, doc.dump());
}

PoseLibrary load_pose_library(const std::string& path, const KinematicModel& model) {
  nlohmann::json doc = nlohmann::json::parse(read_file(path));
  if (doc.value("format", "") != std::string("handik-poses-v1"))
    throw std::runtime_error("load_pose_library: unsupported format in " + path);
  std::vector<Pose> poses;
  for (const nlohmann::json& pj : doc.at("poses")) {
    Pose p;
    for (const nlohmann::json& qj : pj)
      p.rotations.push_back(Quaternion{qj[0].get<double>(), qj[1].get<double>(),
                                       qj[2].get<double>(), qj[3].get<double>()});
    poses.push_back(std::move(p));
  }
  PoseLibrary lib = make_library(model, std::move(poses));
  if (doc.contains("subjects")) lib.subjects = doc["subjects"].get<std::vector<int>>();
  return lib;
}

}  // namespace handik
