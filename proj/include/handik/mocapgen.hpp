#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "handik/handmodel.hpp"
#include "handik/ikengine.hpp"

namespace handik {

// Library of full-hand poses plus the finger/wrist joint partition used for
// recombination.
struct PoseLibrary {
  std::vector<Pose> poses;
  std::vector<int> subjects;                  // optional, parallel to poses
  std::vector<std::vector<int>> finger_sets;  // 5 disjoint joint-index sets
  std::vector<int> wrist_set;

  int size() const { return static_cast<int>(poses.size()); }
};

PoseLibrary make_library(const KinematicModel& model, std::vector<Pose> poses);

struct AugmentConfig {
  double shape_std = 3.0;  // stddev of the shape coefficient draws
  std::uint64_t seed = 1;
};

// Isotropic Gaussian stand-in for detector prediction noise; stddev is a
// fraction of the reference bone length.
struct NoiseModel {
  double std = 0.05;
  std::uint64_t seed = 1;
};

// Which source pose each finger (library order) and the wrist come from.
struct FingerSelection {
  int finger_pose[5] = {0, 0, 0, 0, 0};
  int wrist_pose = 0;
};

// Copies each finger's joint rotations from its designated source pose.
Pose recombine_fingers(const PoseLibrary& lib, const FingerSelection& sel);

// Per-joint slerp from the rest pose toward `target` with a shared t.
Pose interpolate_pose(const Pose& target, double t);

// 10 iid draws from N(0, shape_std^2).
Shape sample_shape(const AugmentConfig& cfg, int shape_dim, std::mt19937_64& rng);

// recombine -> interpolate -> sample shape -> FK -> encode; carries both the
// rotation and the (normalized) position target. kind = mocap.
IkSample gen_paired_sample(const PoseLibrary& lib, const KinematicModel& model,
                           const AugmentConfig& cfg, std::mt19937_64& rng);

// Same pipeline, but the network input positions are perturbed per the noise
// model and re-normalized; targets stay clean and the rotation target is
// dropped. kind = noisy.
IkSample gen_noisy_sample(const PoseLibrary& lib, const KinematicModel& model,
                          const AugmentConfig& cfg, const NoiseModel& noise, std::mt19937_64& rng);

// Random anatomically bounded poses. Per joint in a finger chain
// (base to tip): flexion about +x within [-15deg, 90deg] plus abduction about
// +z within +-20deg at the base, flexion in [0, 100deg] and [0, 80deg] at the
// middle joints, identity at the tip. Wrist: random axis, angle in [0, 60deg].
PoseLibrary synth_pose_library(int n, const KinematicModel& model, std::mt19937_64& rng);

// Deterministic per (seed, index); sample i is noisy when floor((i+1)*f) >
// floor(i*f) with f = noisy_fraction.
std::vector<IkSample> generate_dataset(const PoseLibrary& lib, const KinematicModel& model,
                                       const AugmentConfig& cfg, const NoiseModel& noise,
                                       int count, double noisy_fraction, std::uint64_t seed);

// Pose library file, format `handik-poses-v1` (JSON, quaternions w,x,y,z).
void save_pose_library(const PoseLibrary& lib, const std::string& path);
PoseLibrary load_pose_library(const std::string& path, const KinematicModel& model);

}  // namespace handik
