#pragma once

#include <span>
#include <string>
#include <vector>

#include "handik/ikengine.hpp"

namespace handik {

// Sample archive, format `handik-samples-v1`: one JSON header line
// (format, count, joints), then per record a kind tag byte, a has-rotations
// byte, the flattened input (12*J float32), the rotation target (J*4 float32,
// w x y z) when present, and the position target (J*3 float32).
void write_samples(std::span<const IkSample> samples, int joints, const std::string& path);

struct SampleArchive {
  int joints = 0;
  std::vector<IkSample> samples;
};

SampleArchive read_samples(const std::string& path);

}  // namespace handik
