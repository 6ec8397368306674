#include "handik/ikengine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "handik/util.hpp"

namespace handik {

// ---- input encoding ----

Eigen::VectorXd IkInput::flatten() const {
  const int j = joints();
  Eigen::VectorXd out(12 * j);
  int at = 0;
  for (const Points* block : {&x, &d, &x_ref, &d_ref})
    for (int r = 0; r < j; ++r)
      for (int c = 0; c < 3; ++c) out(at++) = (*block)(r, c);
  return out;
}

IkInput IkInput::from_flat(const Eigen::VectorXd& flat, int joints) {
  if (flat.size() != 12 * joints) throw std::invalid_argument("IkInput::from_flat: size mismatch");
  IkInput in;
  int at = 0;
  for (Points* block : {&in.x, &in.d, &in.x_ref, &in.d_ref}) {
    block->resize(joints, 3);
    for (int r = 0; r < joints; ++r)
      for (int c = 0; c < 3; ++c) (*block)(r, c) = flat(at++);
  }
  return in;
}

IkInput encode_input(const JointSet& joints, const JointSet& rest, const KinematicModel& model) {
  const JointSet xn = normalize_joints(joints, model);
  const JointSet rn = normalize_joints(rest, model);
  IkInput in;
  in.x = xn.positions;
  in.d = bone_vectors(xn, model);
  in.x_ref = rn.positions;
  in.d_ref = bone_vectors(rn, model);
  return in;
}

Pose IkOutput::to_pose() const {
  Pose pose;
  pose.rotations.reserve(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index j = 0; j < q.rows(); ++j)
    pose.rotations.push_back(quat_canonical(Quaternion{q(j, 0), q(j, 1), q(j, 2), q(j, 3)}));
  return pose;
}

// ---- network ----

Mlp make_mlp(int input_dim, int hidden_width, int output_dim, std::uint64_t seed) {
  std::mt19937_64 rng = rng_for(seed, 0x6d6c70ull);
  Mlp net;
  std::vector<int> widths{input_dim};
  for (int i = 0; i < kMlpHiddenLayers; ++i) widths.push_back(hidden_width);
  widths.push_back(output_dim);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    MlpLayer layer;
    const int in = widths[l], out = widths[l + 1];
    const double s = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> u(-s, s);
    layer.w.resize(out, in);
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.w(r, c) = u(rng);
    layer.b = Eigen::VectorXd::Zero(out);
    const bool hidden = l + 2 < widths.size();
    layer.batch_norm = hidden;
    layer.sigmoid = hidden;
    if (hidden) {
      layer.gamma = Eigen::VectorXd::Ones(out);
      layer.beta_shift = Eigen::VectorXd::Zero(out);
      layer.run_mean = Eigen::VectorXd::Zero(out);
      layer.run_var = Eigen::VectorXd::Ones(out);
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

Eigen::MatrixXd mlp_forward(const Mlp& net, const Eigen::MatrixXd& x, NetMode mode, ForwardWorkspace* ws) {
  if (net.layers.empty()) throw std::invalid_argument("mlp_forward: empty network");
  if (x.cols() != net.input_dim()) throw std::invalid_argument("mlp_forward: input width mismatch");
  const Eigen::Index n = x.rows();
  if (mode == NetMode::train && n < 2)
    throw std::invalid_argument("mlp_forward: train mode needs a batch of at least 2");

  if (ws) {
    ws->mode = mode;
    ws->input = x;
    ws->layers.assign(net.layers.size(), {});
  }

  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const MlpLayer& layer = net.layers[l];
    Eigen::MatrixXd z = a * layer.w.transpose();
    z.rowwise() += layer.b.transpose();

    Eigen::MatrixXd zhat, y;
    Eigen::VectorXd mean, var;
    if (layer.batch_norm) {
      if (mode == NetMode::train) {
        mean = z.colwise().mean().transpose();
        var = (z.rowwise() - mean.transpose()).array().square().colwise().mean().matrix().transpose();
      } else {
        mean = layer.run_mean;
        var = layer.run_var;
      }
      const Eigen::ArrayXd inv_std = (var.array() + kBnEpsilon).sqrt().inverse();
      const Eigen::MatrixXd centered = z.rowwise() - mean.transpose();
      zhat = (centered.array().rowwise() * inv_std.transpose()).matrix();
      y = (zhat.array().rowwise() * layer.gamma.transpose().array()).matrix();
      y.rowwise() += layer.beta_shift.transpose();
    } else {
      y = z;
    }
    Eigen::MatrixXd out;
    if (layer.sigmoid)
      out = ((1.0 + (-y.array()).exp()).inverse()).matrix();
    else
      out = std::move(y);

    if (ws) {
      LayerCache& cache = ws->layers[l];
      cache.z = std::move(z);
      if (layer.batch_norm) {
        cache.zhat = std::move(zhat);
        cache.mean = std::move(mean);
        cache.var = std::move(var);
      }
      cache.a = out;
    }
    a = std::move(out);
  }
  return a;
}

void mlp_update_running(Mlp& net, const ForwardWorkspace& ws) {
  if (ws.mode != NetMode::train) throw std::invalid_argument("mlp_update_running: needs a train-mode pass");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    MlpLayer& layer = net.layers[l];
    if (!layer.batch_norm) continue;
    layer.run_mean = kBnMomentum * layer.run_mean + (1.0 - kBnMomentum) * ws.layers[l].mean;
    layer.run_var = kBnMomentum * layer.run_var + (1.0 - kBnMomentum) * ws.layers[l].var;
  }
}

MlpGradients mlp_backward(const Mlp& net, const ForwardWorkspace& ws, const Eigen::MatrixXd& d_out) {
  if (ws.mode != NetMode::train)
    throw std::invalid_argument("mlp_backward: workspace must come from a train-mode forward pass");
  if (ws.layers.size() != net.layers.size()) throw std::invalid_argument("mlp_backward: stale workspace");
  const Eigen::Index n = ws.input.rows();

  MlpGradients grads;
  grads.layers.resize(net.layers.size());
  Eigen::MatrixXd da = d_out;
  for (int l = static_cast<int>(net.layers.size()) - 1; l >= 0; --l) {
    const MlpLayer& layer = net.layers[static_cast<std::size_t>(l)];
    const LayerCache& cache = ws.layers[static_cast<std::size_t>(l)];
    const Eigen::MatrixXd& a_prev = l == 0 ? ws.input : ws.layers[static_cast<std::size_t>(l - 1)].a;

    Eigen::MatrixXd dy;
    if (layer.sigmoid)
      dy = (da.array() * cache.a.array() * (1.0 - cache.a.array())).matrix();
    else
      dy = std::move(da);

    Eigen::MatrixXd dz;
    MlpLayerGrad& g = grads.layers[static_cast<std::size_t>(l)];
    if (layer.batch_norm) {
      g.gamma = (dy.array() * cache.zhat.array()).colwise().sum().matrix().transpose();
      g.beta_shift = dy.colwise().sum().transpose();
      const Eigen::MatrixXd dzhat = (dy.array().rowwise() * layer.gamma.transpose().array()).matrix();
      const Eigen::ArrayXd inv_std = (cache.var.array() + kBnEpsilon).sqrt().inverse();
      const Eigen::RowVectorXd sum_dzhat = dzhat.colwise().sum();
      const Eigen::RowVectorXd sum_dzhat_zhat = (dzhat.array() * cache.zhat.array()).colwise().sum().matrix();
      dz = static_cast<double>(n) * dzhat;
      dz.rowwise() -= sum_dzhat;
      dz -= (cache.zhat.array().rowwise() * sum_dzhat_zhat.array()).matrix();
      dz = (dz.array().rowwise() * (inv_std.transpose() / static_cast<double>(n))).matrix();
    } else {
      dz = std::move(dy);
    }
    g.w = dz.transpose() * a_prev;
    g.b = dz.colwise().sum().transpose();
    if (l > 0) da = dz * layer.w;
  }
  return grads;
}

IkOutput forward(const Mlp& net, const IkInput& input, NetMode mode) {
  if (mode == NetMode::train)
    throw std::invalid_argument("forward: train mode requires a batch; use mlp_forward");
  const Eigen::MatrixXd out = mlp_forward(net, input.flatten().transpose(), mode);
  const int j = input.joints();
  if (out.cols() != 4 * j) throw std::invalid_argument("forward: network output width mismatch");

  IkOutput res;
  res.q_hat.resize(j, 4);
  res.q.resize(j, 4);
  res.degenerate.assign(static_cast<std::size_t>(j), 0);
  for (int i = 0; i < j; ++i) {
    const Eigen::RowVector4d row = out.block<1, 4>(0, 4 * i);
    res.q_hat.row(i) = row;
    const double norm = row.norm();
    if (norm <= 1e-12) {
      res.degenerate[static_cast<std::size_t>(i)] = 1;
      res.q.row(i) = Eigen::RowVector4d(1, 0, 0, 0);
    } else {
      res.q.row(i) = row / norm;
    }
  }
  return res;
}

// ---- losses ----

static void require_unit(std::span<const Quaternion> qs, const char* who) {
  for (const Quaternion& q : qs)
    if (!q.is_unit(1e-6)) throw std::invalid_argument(std::string(who) + ": non-unit quaternion input");
}

double loss_cos(std::span<const Quaternion> q_gt, std::span<const Quaternion> q) {
  if (q_gt.size() != q.size() || q.empty()) throw std::invalid_argument("loss_cos: size mismatch");
  require_unit(q_gt, "loss_cos");
  require_unit(q, "loss_cos");
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    acc += 1.0 - quat_mul(q_gt[i], quat_inverse(q[i])).w;
  return acc / static_cast<double>(q.size());
}

double loss_l2(std::span<const Quaternion> q_gt, std::span<const Quaternion> q) {
  if (q_gt.size() != q.size() || q.empty()) throw std::invalid_argument("loss_l2: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const Quaternion& a = q_gt[i];
    const Quaternion& b = q[i];
    acc += (a.w - b.w) * (a.w - b.w) + (a.x - b.x) * (a.x - b.x) +
           (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z);
  }
  return acc / static_cast<double>(q.size());
}

double loss_norm(const Eigen::Matrix<double, Eigen::Dynamic, 4>& q_hat) {
  if (q_hat.rows() == 0) throw std::invalid_argument("loss_norm: empty input");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < q_hat.rows(); ++i)
    acc += std::abs(1.0 - q_hat.row(i).squaredNorm());
  return acc / static_cast<double>(q_hat.rows());
}

double loss_xyz(std::span<const Quaternion> q, const JointSet& x_gt, const JointSet& rest,
                const KinematicModel& model) {
  if (x_gt.frame != JointFrame::normalized)
    throw std::invalid_argument("loss_xyz: ground truth must be in the normalized frame");
  Pose pose;
  pose.rotations.assign(q.begin(), q.end());
  const JointSet fk = fk_joints_from_rest(model, rest, pose);
  const JointSet y = normalize_joints(fk, model);
  return (y.positions - x_gt.positions).rowwise().squaredNorm().mean();
}

double loss_xyz(std::span<const Quaternion> q, const JointSet& x_gt, const Shape& shape,
                const KinematicModel& model) {
  return loss_xyz(q, x_gt, rest_joints(model, shape), model);
}

// ---- batch loss with gradients ----

namespace {

// R(q) for unit q; same polynomial as quat_to_matrix, without validation.
inline Eigen::Matrix3d rot_of_unit(const Eigen::Vector4d& q) {
  const double w = q(0), x = q(1), y = q(2), z = q(3);
  Eigen::Matrix3d r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

// Contraction of dL/dR with the analytic partials of the polynomial above.
inline Eigen::Vector4d rot_grad_to_quat(const Eigen::Matrix3d& g, const Eigen::Vector4d& q) {
  const double w = q(0), x = q(1), y = q(2), z = q(3);
  Eigen::Vector4d d;
  d(0) = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
  d(1) = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) +
              z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2));
  d(2) = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
              w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2));
  d(3) = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) +
              y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
  return d;
}

struct SampleScratch {
  std::vector<Eigen::Vector4d> q;           // normalized rows
  std::vector<double> norms;
  std::vector<std::uint8_t> degenerate;
  std::vector<Eigen::Matrix3d> local, global;
  Points positions;
  std::vector<Eigen::Vector3d> d_pos;
  std::vector<Eigen::Matrix3d> d_global, d_local;
};

}  // namespace

BatchLossResult ik_batch_loss(const KinematicModel& model, std::span<const IkSample> batch,
                              const Eigen::MatrixXd& out, const LossWeights& weights, bool want_grad) {
  const int j_count = model.joint_count;
  if (out.cols() != 4 * j_count) throw std::invalid_argument("ik_batch_loss: output width mismatch");
  if (out.rows() != static_cast<Eigen::Index>(batch.size()))
    throw std::invalid_argument("ik_batch_loss: batch size mismatch");
  if (batch.empty()) throw std::invalid_argument("ik_batch_loss: empty batch");

  const std::vector<int> topo = model.topo_order();
  std::vector<int> rev(topo.rbegin(), topo.rend());
  const double n_inv = 1.0 / static_cast<double>(batch.size());

  BatchLossResult res;
  if (want_grad) res.d_out = Eigen::MatrixXd::Zero(out.rows(), out.cols());
  int rot_count = 0, pos_count = 0;

  SampleScratch s;
  s.q.resize(static_cast<std::size_t>(j_count));
  s.norms.resize(static_cast<std::size_t>(j_count));
  s.degenerate.resize(static_cast<std::size_t>(j_count));
  s.local.resize(static_cast<std::size_t>(j_count));
  s.global.resize(static_cast<std::size_t>(j_count));
  s.positions.resize(j_count, 3);
  s.d_pos.resize(static_cast<std::size_t>(j_count));
  s.d_global.resize(static_cast<std::size_t>(j_count));
  s.d_local.resize(static_cast<std::size_t>(j_count));

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const IkSample& sample = batch[i];
    std::vector<Eigen::Vector4d> d_q(static_cast<std::size_t>(j_count), Eigen::Vector4d::Zero());
    double sample_norm = 0.0;

    for (int j = 0; j < j_count; ++j) {
      const Eigen::Vector4d raw = out.block<1, 4>(static_cast<Eigen::Index>(i), 4 * j).transpose();
      const double nrm = raw.norm();
      s.norms[static_cast<std::size_t>(j)] = nrm;
      s.degenerate[static_cast<std::size_t>(j)] = nrm <= 1e-12 ? 1 : 0;
      s.q[static_cast<std::size_t>(j)] = nrm <= 1e-12 ? Eigen::Vector4d(1, 0, 0, 0) : Eigen::Vector4d(raw / nrm);

      const double gap = 1.0 - raw.squaredNorm();
      sample_norm += std::abs(gap);
      if (want_grad && gap != 0.0) {
        const double sgn = gap > 0.0 ? -1.0 : 1.0;
        res.d_out.block<1, 4>(static_cast<Eigen::Index>(i), 4 * j) +=
            (weights.norm * sgn * 2.0 / j_count * n_inv) * raw.transpose();
      }
    }
    sample_norm /= j_count;
    res.loss.norm += sample_norm;
    double sample_total = weights.norm * sample_norm;

    if (sample.target_rotations) {
      ++rot_count;
      const Pose& gt = *sample.target_rotations;
      double c_acc = 0.0, l_acc = 0.0;
      for (int j = 0; j < j_count; ++j) {
        const Quaternion& g = gt.rotations[static_cast<std::size_t>(j)];
        const Eigen::Vector4d gv(g.w, g.x, g.y, g.z);
        const Eigen::Vector4d& q = s.q[static_cast<std::size_t>(j)];
        c_acc += 1.0 - gv.dot(q);
        l_acc += (gv - q).squaredNorm();
        if (want_grad && !s.degenerate[static_cast<std::size_t>(j)])
          d_q[static_cast<std::size_t>(j)] +=
              (weights.cos * (-1.0 / j_count)) * gv + (weights.l2 * (2.0 / j_count)) * (q - gv);
      }
      res.loss.cos += c_acc / j_count;
      res.loss.l2 += l_acc / j_count;
      sample_total += weights.cos * c_acc / j_count + weights.l2 * l_acc / j_count;
    }

    {
      ++pos_count;
      const Points& rest = sample.input.x_ref;
      for (int j = 0; j < j_count; ++j) s.local[static_cast<std::size_t>(j)] = rot_of_unit(s.q[static_cast<std::size_t>(j)]);
      for (int j : topo) {
        const int p = model.parents[static_cast<std::size_t>(j)];
        if (p < 0) {
          s.global[static_cast<std::size_t>(j)] = s.local[static_cast<std::size_t>(j)];
          s.positions.row(j) = rest.row(j);
        } else {
          s.global[static_cast<std::size_t>(j)] = s.global[static_cast<std::size_t>(p)] * s.local[static_cast<std::size_t>(j)];
          s.positions.row(j) = s.positions.row(p) +
              (s.global[static_cast<std::size_t>(p)] * (rest.row(j) - rest.row(p)).transpose()).transpose();
        }
      }
      const Eigen::Vector3d ref_seg =
          (s.positions.row(model.root_index) - s.positions.row(model.wrist_index)).transpose();
      const double l = ref_seg.norm();
      if (l <= 1e-12) throw std::domain_error("ik_batch_loss: degenerate reference bone in FK output");

      double x_acc = 0.0;
      for (int j = 0; j < j_count; ++j) s.d_pos[static_cast<std::size_t>(j)].setZero();
      double dl = 0.0;
      for (int j = 0; j < j_count; ++j) {
        const Eigen::Vector3d y = (s.positions.row(j) - s.positions.row(model.root_index)).transpose() / l;
        const Eigen::Vector3d diff = y - sample.target_positions.positions.row(j).transpose();
        x_acc += diff.squaredNorm();
        if (want_grad) {
          const Eigen::Vector3d dy = (weights.xyz * 2.0 / j_count) * diff;
          s.d_pos[static_cast<std::size_t>(j)] += dy / l;
          s.d_pos[static_cast<std::size_t>(model.root_index)] -= dy / l;
          dl -= dy.dot(y) / l;
        }
      }
      x_acc /= j_count;
      res.loss.xyz += x_acc;
      sample_total += weights.xyz * x_acc;

      if (want_grad) {
        const Eigen::Vector3d u = ref_seg / l;
        s.d_pos[static_cast<std::size_t>(model.root_index)] += dl * u;
        s.d_pos[static_cast<std::size_t>(model.wrist_index)] -= dl * u;

        for (int j = 0; j < j_count; ++j) s.d_global[static_cast<std::size_t>(j)].setZero();
        for (int j : rev) {
          const int p = model.parents[static_cast<std::size_t>(j)];
          if (p < 0) {
            s.d_local[static_cast<std::size_t>(j)] = s.d_global[static_cast<std::size_t>(j)];
          } else {
            s.d_pos[static_cast<std::size_t>(p)] += s.d_pos[static_cast<std::size_t>(j)];
            s.d_global[static_cast<std::size_t>(p)] +=
                s.d_pos[static_cast<std::size_t>(j)] * (rest.row(j) - rest.row(p));
            s.d_global[static_cast<std::size_t>(p)] +=
                s.d_global[static_cast<std::size_t>(j)] * s.local[static_cast<std::size_t>(j)].transpose();
            s.d_local[static_cast<std::size_t>(j)] =
                s.global[static_cast<std::size_t>(p)].transpose() * s.d_global[static_cast<std::size_t>(j)];
          }
        }
        for (int j = 0; j < j_count; ++j)
          if (!s.degenerate[static_cast<std::size_t>(j)])
            d_q[static_cast<std::size_t>(j)] +=
                rot_grad_to_quat(s.d_local[static_cast<std::size_t>(j)], s.q[static_cast<std::size_t>(j)]);
      }
    }

    if (want_grad) {
      for (int j = 0; j < j_count; ++j) {
        if (s.degenerate[static_cast<std::size_t>(j)]) continue;
        const Eigen::Vector4d& q = s.q[static_cast<std::size_t>(j)];
        const Eigen::Vector4d& dq = d_q[static_cast<std::size_t>(j)];
        res.d_out.block<1, 4>(static_cast<Eigen::Index>(i), 4 * j) +=
            (n_inv / s.norms[static_cast<std::size_t>(j)]) * (dq - q * q.dot(dq)).transpose();
      }
    }
    res.loss.total += sample_total;
  }

  res.loss.total *= n_inv;
  res.loss.norm *= n_inv;
  res.loss.xyz = pos_count > 0 ? res.loss.xyz / pos_count : 0.0;
  res.loss.cos = rot_count > 0 ? res.loss.cos / rot_count : 0.0;
  res.loss.l2 = rot_count > 0 ? res.loss.l2 / rot_count : 0.0;
  return res;
}

BackwardResult backward(const Mlp& net, const KinematicModel& model, std::span<const IkSample> batch,
                        const LossWeights& weights) {
  if (batch.empty()) throw std::invalid_argument("backward: empty batch");
  Eigen::MatrixXd x(batch.size(), net.input_dim());
  for (std::size_t i = 0; i < batch.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = batch[i].input.flatten().transpose();
  ForwardWorkspace ws;
  const Eigen::MatrixXd out = mlp_forward(net, x, NetMode::train, &ws);
  BatchLossResult loss = ik_batch_loss(model, batch, out, weights, true);
  BackwardResult res;
  res.loss = loss.loss;
  res.grads = mlp_backward(net, ws, loss.d_out);
  return res;
}

// ---- training ----

namespace {

struct AdamState {
  std::vector<MlpLayerGrad> m, v;
  int t = 0;
};

AdamState make_adam(const Mlp& net) {
  AdamState st;
  st.m.resize(net.layers.size());
  st.v.resize(net.layers.size());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const MlpLayer& layer = net.layers[l];
    for (auto* g : {&st.m[l], &st.v[l]}) {
      g->w = Eigen::MatrixXd::Zero(layer.w.rows(), layer.w.cols());
      g->b = Eigen::VectorXd::Zero(layer.b.size());
      if (layer.batch_norm) {
        g->gamma = Eigen::VectorXd::Zero(layer.gamma.size());
        g->beta_shift = Eigen::VectorXd::Zero(layer.beta_shift.size());
      }
    }
  }
  return st;
}

template <typename P>
void adam_update(P& param, P& m, P& v, const P& grad, const TrainConfig& cfg, double lr, double bc1,
                 double bc2) {
  m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
  v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * grad.cwiseProduct(grad);
  param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.adam_eps);
}

void adam_step(Mlp& net, const MlpGradients& grads, AdamState& st, const TrainConfig& cfg, double lr) {
  ++st.t;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, st.t);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, st.t);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    MlpLayer& layer = net.layers[l];
    const MlpLayerGrad& g = grads.layers[l];
    adam_update(layer.w, st.m[l].w, st.v[l].w, g.w, cfg, lr, bc1, bc2);
    adam_update(layer.b, st.m[l].b, st.v[l].b, g.b, cfg, lr, bc1, bc2);
    if (layer.batch_norm) {
      adam_update(layer.gamma, st.m[l].gamma, st.v[l].gamma, g.gamma, cfg, lr, bc1, bc2);
      adam_update(layer.beta_shift, st.m[l].beta_shift, st.v[l].beta_shift, g.beta_shift, cfg, lr, bc1, bc2);
    }
  }
}

}  // namespace

TrainHistory train(Mlp& net, const KinematicModel& model, std::span<const IkSample> dataset,
                   const TrainConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.batch_size < 2) throw std::invalid_argument("train: batch size must be at least 2");
  if (net.input_dim() != 12 * model.joint_count || net.output_dim() != 4 * model.joint_count)
    throw std::invalid_argument("train: network width does not match the model joint count");

  AdamState adam = make_adam(net);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainHistory history;
  std::vector<IkSample> batch;
  double lr = cfg.learning_rate;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch, lr *= cfg.lr_decay) {
    std::mt19937_64 rng = rng_for(cfg.seed, static_cast<std::uint64_t>(epoch) + 0x45504f43ull);
    std::shuffle(order.begin(), order.end(), rng);

    EpochStats stats;
    std::size_t n_total = 0, n_rot = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      if (end - start < 2) break;  // a trailing singleton has no batch statistics
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(dataset[order[k]]);

      Eigen::MatrixXd x(batch.size(), net.input_dim());
      for (std::size_t i = 0; i < batch.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = batch[i].input.flatten().transpose();
      ForwardWorkspace ws;
      const Eigen::MatrixXd out = mlp_forward(net, x, NetMode::train, &ws);
      mlp_update_running(net, ws);
      BatchLossResult loss = ik_batch_loss(model, batch, out, cfg.weights, true);
      const MlpGradients grads = mlp_backward(net, ws, loss.d_out);
      adam_step(net, grads, adam, cfg, lr);

      const std::size_t bs = batch.size();
      std::size_t rot = 0;
      for (const IkSample& s : batch)
        if (s.target_rotations) ++rot;
      stats.total += loss.loss.total * static_cast<double>(bs);
      stats.xyz += loss.loss.xyz * static_cast<double>(bs);
      stats.norm += loss.loss.norm * static_cast<double>(bs);
      stats.cos += loss.loss.cos * static_cast<double>(rot);
      stats.l2 += loss.loss.l2 * static_cast<double>(rot);
      n_total += bs;
      n_rot += rot;
    }
    if (n_total == 0) throw std::invalid_argument("train: dataset smaller than the minimum batch");
    stats.total /= static_cast<double>(n_total);
    stats.xyz /= static_cast<double>(n_total);
    stats.norm /= static_cast<double>(n_total);
    if (n_rot > 0) {
      stats.cos /= static_cast<double>(n_rot);
      stats.l2 /= static_cast<double>(n_rot);
    }
    history.epochs.push_back(stats);
  }
  return history;
}

Pose predict_pose(const Mlp& net, const JointSet& joints, const JointSet& rest,
                  const KinematicModel& model) {
  const IkInput input = encode_input(joints, rest, model);
  return forward(net, input, NetMode::infer).to_pose();
}

// ---- network file ----

void save_mlp(const Mlp& net, const std::string& path) {
  nlohmann::json header;
  header["format"] = "handik-mlp-v1";
  nlohmann::json layers = nlohmann::json::array();
  std::size_t count = 0;
  for (const MlpLayer& layer : net.layers) {
    layers.push_back({{"in", layer.w.cols()},
                      {"out", layer.w.rows()},
                      {"batch_norm", layer.batch_norm},
                      {"activation", layer.sigmoid ? "sigmoid" : "linear"}});
    count += static_cast<std::size_t>(layer.w.size() + layer.b.size());
    if (layer.batch_norm) count += 4 * static_cast<std::size_t>(layer.gamma.size());
  }
  header["layers"] = std::move(layers);
  header["param_count"] = count;

  std::string blob = header.dump();
  blob.push_back('\n');
  blob.reserve(blob.size() + 4 * count);
  for (const MlpLayer& layer : net.layers) {
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c) put_f32(blob, static_cast<float>(layer.w(r, c)));
    for (Eigen::Index i = 0; i < layer.b.size(); ++i) put_f32(blob, static_cast<float>(layer.b(i)));
    if (layer.batch_norm) {
      for (const Eigen::VectorXd* v : {&layer.gamma, &layer.beta_shift, &layer.run_mean, &layer.run_var})
        for (Eigen::Index i = 0; i < v->size(); ++i) put_f32(blob, static_cast<float>((*v)(i)));
    }
  }
  write_file(path, blob);
}

Mlp load_mlp(const std::string& path) {
  const std::string data = read_file(path);
  const std::size_t nl = data.find('\n');
  if (nl == std::string::npos) throw std::runtime_error("load_mlp: missing header line");
  nlohmann::json header = nlohmann::json::parse(data.substr(0, nl));
  if (header.value("format", "") != std::string("handik-mlp-v1"))
    throw std::runtime_error("load_mlp: unsupported format in " + path);

  Mlp net;
  ByteReader r(data, nl + 1);
  for (const nlohmann::json& lj : header.at("layers")) {
    MlpLayer layer;
    const Eigen::Index in = lj.at("in").get<Eigen::Index>();
    const Eigen::Index out = lj.at("out").get<Eigen::Index>();
    layer.batch_norm = lj.at("batch_norm").get<bool>();
    layer.sigmoid = lj.at("activation").get<std::string>() == "sigmoid";
    layer.w.resize(out, in);
    for (Eigen::Index row = 0; row < out; ++row)
      for (Eigen::Index c = 0; c < in; ++c) layer.w(row, c) = r.f32();
    layer.b.resize(out);
    for (Eigen::Index i = 0; i < out; ++i) layer.b(i) = r.f32();
    if (layer.batch_norm) {
      for (Eigen::VectorXd* v : {&layer.gamma, &layer.beta_shift, &layer.run_mean, &layer.run_var}) {
        v->resize(out);
        for (Eigen::Index i = 0; i < out; ++i) (*v)(i) = r.f32();
      }
      for (Eigen::Index i = 0; i < out; ++i)
        if (layer.run_var(i) <= 0.0) throw std::runtime_error("load_mlp: non-positive running variance");
    }
    net.layers.push_back(std::move(layer));
  }
  if (r.remaining() != 0) throw std::runtime_error("load_mlp: trailing bytes");
  return net;
}

}  // namespace handik
