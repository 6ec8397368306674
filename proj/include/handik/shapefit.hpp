#pragma once

#include <vector>

#include "handik/handmodel.hpp"

namespace handik {

struct ShapeFitConfig {
  double lambda_beta = 1e-3;   // L2 regularizer weight
  int max_iters = 50;
  double step_tol = 1e-10;     // stop when the accepted step is this small
  double residual_tol = 1e-8;  // converged iff ||grad E|| falls below this
};

struct ShapeFitResult {
  Shape beta;
  double residual = 0.0;  // achieved E(beta)
  int iterations = 0;
  bool converged = false;
};

// Euclidean parent->child length per bone, in the model's bone order
// (ascending child index; 20 bones for the 21-joint hand).
std::vector<double> bone_lengths(const JointSet& joints, const KinematicModel& model);

// Minimizes sum_b (l_b(beta)/l_ref(beta) - target_b)^2 + lambda*|beta|^2 with
// damped Gauss-Newton from beta = 0, using the analytic Jacobian of the
// linear joint shape basis. Coefficients are kept within the |beta_i| <= 10
// sanity box.
ShapeFitResult fit_shape(const std::vector<double>& target_ratios, const KinematicModel& model,
                         const ShapeFitConfig& cfg = {});

}  // namespace handik
