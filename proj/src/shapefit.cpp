#include "handik/shapefit.hpp"

#include <cmath>
#include <stdexcept>

namespace handik {

std::vector<double> bone_lengths(const JointSet& joints, const KinematicModel& model) {
  if (joints.count() != model.joint_count) throw std::invalid_argument("bone_lengths: joint count mismatch");
  std::vector<double> out;
  for (auto [p, c] : model.bones())
    out.push_back((joints.positions.row(c) - joints.positions.row(p)).norm());
  return out;
}

namespace {

struct Residuals {
  Eigen::VectorXd r;      // ratio residuals then sqrt(lambda)*beta rows
  Eigen::MatrixXd jac;    // same row order, B columns
  double energy = 0.0;
};

// Ratio residuals l_b/l_ref - target with the analytic Jacobian through the
// linear rest-joint basis. l_ref is the root->wrist distance of the same
// shaped skeleton.
Residuals eval(const std::vector<double>& targets, const KinematicModel& model,
               const Eigen::VectorXd& beta, double lambda, bool want_jac) {
  const int b_dim = model.shape_dim();
  const auto bones = model.bones();
  const int n = static_cast<int>(bones.size());

  Shape shape;
  shape.beta = beta;
  const Points joints = rest_joints(model, shape).positions;

  const auto seg_basis = [&](int child, int parent) {
    return model.joint_shape_basis.middleRows(3 * child, 3) - model.joint_shape_basis.middleRows(3 * parent, 3);
  };

  const Eigen::Vector3d ref_seg = (joints.row(model.root_index) - joints.row(model.wrist_index)).transpose();
  const double l_ref = ref_seg.norm();
  if (l_ref <= 1e-12) throw std::domain_error("fit_shape: degenerate reference bone");
  Eigen::RowVectorXd dref(b_dim);
  if (want_jac) dref = (ref_seg.transpose() / l_ref) * seg_basis(model.root_index, model.wrist_index);

  Residuals out;
  out.r.resize(n + b_dim);
  if (want_jac) out.jac = Eigen::MatrixXd::Zero(n + b_dim, b_dim);

  for (int i = 0; i < n; ++i) {
    const auto [p, c] = bones[static_cast<std::size_t>(i)];
    const Eigen::Vector3d seg = (joints.row(c) - joints.row(p)).transpose();
    const double len = seg.norm();
    out.r(i) = len / l_ref - targets[static_cast<std::size_t>(i)];
    if (want_jac) {
      const Eigen::RowVectorXd dlen = len > 1e-12
          ? Eigen::RowVectorXd((seg.transpose() / len) * seg_basis(c, p))
          : Eigen::RowVectorXd::Zero(b_dim);
      out.jac.row(i) = dlen / l_ref - (len / (l_ref * l_ref)) * dref;
    }
  }
  const double sl = std::sqrt(lambda);
  for (int i = 0; i < b_dim; ++i) {
    out.r(n + i) = sl * beta(i);
    if (want_jac) out.jac(n + i, i) = sl;
  }
  out.energy = out.r.squaredNorm();
  return out;
}

}  // namespace

ShapeFitResult fit_shape(const std::vector<double>& target_ratios, const KinematicModel& model,
                         const ShapeFitConfig& cfg) {
  if (static_cast<int>(target_ratios.size()) != static_cast<int>(model.bones().size()))
    throw std::invalid_argument("fit_shape: wrong number of target ratios");
  for (double t : target_ratios)
    if (!std::isfinite(t)) throw std::invalid_argument("fit_shape: non-finite target ratio");

  const int b_dim = model.shape_dim();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(b_dim);
  Residuals cur = eval(target_ratios, model, beta, cfg.lambda_beta, true);

  double mu = 1e-6;
  int iters = 0;
  for (; iters < cfg.max_iters; ++iters) {
    const Eigen::VectorXd grad = 2.0 * cur.jac.transpose() * cur.r;
    if (grad.norm() <= cfg.residual_tol) break;

    const Eigen::MatrixXd jtj = cur.jac.transpose() * cur.jac;
    bool accepted = false;
    double step_norm = 0.0;
    for (int tries = 0; tries < 12; ++tries) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal().array() += mu;
      const Eigen::VectorXd delta = damped.ldlt().solve(-0.5 * grad);
      Eigen::VectorXd cand = (beta + delta).cwiseMin(10.0).cwiseMax(-10.0);
      const Residuals next = eval(target_ratios, model, cand, cfg.lambda_beta, true);
      if (next.energy < cur.energy) {
        step_norm = (cand - beta).norm();
        beta = std::move(cand);
        cur = next;
        mu = std::max(mu / 3.0, 1e-12);
        accepted = true;
        break;
      }
      mu *= 10.0;
    }
    if (!accepted || step_norm < cfg.step_tol) break;
  }

  ShapeFitResult res;
  res.beta.beta = beta;
  res.residual = cur.energy;
  res.iterations = iters;
  res.converged = (2.0 * cur.jac.transpose() * cur.r).norm() <= cfg.residual_tol;
  return res;
}

}  // namespace handik
