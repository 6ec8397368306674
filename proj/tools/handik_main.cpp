// handik: command-line front end for the hand IK toolkit.

#include <cinttypes>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "handik/detcodec.hpp"
#include "handik/evalmetrics.hpp"
#include "handik/handmodel.hpp"
#include "handik/ikengine.hpp"
#include "handik/mocapgen.hpp"
#include "handik/samplefile.hpp"
#include "handik/shapefit.hpp"
#include "handik/util.hpp"

using namespace handik;

namespace {

struct ModelOpt {
  std::string path;
  std::int64_t synth_seed = -1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--model", path, "kinematic model file (handik-model-v1)");
    cmd->add_option("--synth-model", synth_seed, "generate the synthetic model with this seed");
  }
  KinematicModel resolve() const {
    if (!path.empty() && synth_seed >= 0) throw CLI::ValidationError("use either --model or --synth-model");
    if (!path.empty()) return load_model(path);
    if (synth_seed >= 0) return synth_model(static_cast<std::uint64_t>(synth_seed));
    throw CLI::ValidationError("one of --model or --synth-model is required");
  }
};

AlignMode parse_align(const std::string& name) {
  if (name == "root") return AlignMode::root;
  if (name == "fingertip") return AlignMode::fingertip_centroid;
  if (name == "none") return AlignMode::none;
  throw CLI::ValidationError("--align must be root, fingertip or none");
}

struct EvalData {
  std::vector<JointSet> pred;  // mm
  std::vector<JointSet> gt;    // mm
};

EvalData run_predictions(const Mlp& net, const KinematicModel& model,
                         const std::vector<IkSample>& samples, AlignMode mode, double ref_mm) {
  EvalData data;
  data.pred.reserve(samples.size());
  data.gt.reserve(samples.size());
  for (const IkSample& s : samples) {
    JointSet joints{s.input.x, JointFrame::normalized};
    JointSet rest{s.input.x_ref, JointFrame::normalized};
    const Pose pose = predict_pose(net, joints, rest, model);
    JointSet pred = normalize_joints(fk_joints_from_rest(model, rest, pose), model);
    pred.positions *= ref_mm;
    pred.frame = JointFrame::absolute_mm;
    JointSet gt = s.target_positions;
    gt.positions *= ref_mm;
    gt.frame = JointFrame::absolute_mm;
    data.pred.push_back(align(pred, gt, mode, model));
    data.gt.push_back(std::move(gt));
  }
  return data;
}

int cmd_gen_data(const ModelOpt& model_opt, const std::string& library_path, int synth_library,
                 int count, double noise_std, double noisy_fraction, std::uint64_t seed,
                 const std::string& out) {
  const KinematicModel model = model_opt.resolve();
  PoseLibrary lib;
  if (!library_path.empty() && synth_library > 0)
    throw CLI::ValidationError("use either --library or --synth-library");
  if (!library_path.empty()) {
    lib = load_pose_library(library_path, model);
  } else if (synth_library > 0) {
    std::mt19937_64 rng = rng_for(seed, 0x4c494232ull);
    lib = synth_pose_library(synth_library, model, rng);
  } else {
    throw CLI::ValidationError("one of --library or --synth-library is required");
  }
  if (count < 1) throw CLI::ValidationError("--count must be positive");

  AugmentConfig cfg;
  cfg.seed = seed;
  NoiseModel noise;
  noise.std = noise_std;
  if (noise_std <= 0.0) noisy_fraction = 0.0;  // noiseless archives keep rotation targets everywhere
  const std::vector<IkSample> samples = generate_dataset(lib, model, cfg, noise, count, noisy_fraction, seed);
  write_samples(samples, model.joint_count, out);

  std::size_t mocap = 0, noisy = 0;
  for (const IkSample& s : samples) (s.kind == SampleKind::mocap ? mocap : noisy)++;
  std::printf("wrote %zu samples (%zu mocap, %zu noisy) to %s\n", samples.size(), mocap, noisy, out.c_str());
  return 0;
}

int cmd_train_ik(const ModelOpt& model_opt, const std::string& samples_path, const std::string& out,
                 const TrainConfig& cfg, int hidden, const std::string& log_path) {
  const KinematicModel model = model_opt.resolve();
  const SampleArchive archive = read_samples(samples_path);
  if (archive.joints != model.joint_count)
    throw std::runtime_error("train-ik: archive joint count does not match the model");

  Mlp net = make_mlp(12 * model.joint_count, hidden, 4 * model.joint_count, cfg.seed);
  const TrainHistory history = train(net, model, archive.samples, cfg);
  save_mlp(net, out);

  std::string table = "# epoch total cos l2 xyz norm\n";
  char line[160];
  for (std::size_t e = 0; e < history.epochs.size(); ++e) {
    const EpochStats& s = history.epochs[e];
    std::snprintf(line, sizeof(line), "%zu %.9g %.9g %.9g %.9g %.9g\n", e, s.total, s.cos, s.l2, s.xyz, s.norm);
    table += line;
  }
  std::fputs(table.c_str(), stdout);
  if (!log_path.empty()) write_file(log_path, table);
  std::fprintf(stderr, "saved network to %s\n", out.c_str());
  return 0;
}

int cmd_eval(const ModelOpt& model_opt, const std::string& net_path, const std::string& samples_path,
             const std::string& align_name, double ref_mm, const std::string& curve_out) {
  const KinematicModel model = model_opt.resolve();
  const Mlp net = load_mlp(net_path);
  const SampleArchive archive = read_samples(samples_path);
  const EvalData data = run_predictions(net, model, archive.samples, parse_align(align_name), ref_mm);

  const PckCurve curve = pck(data.pred, data.gt, default_thresholds());
  const double area = auc(curve);
  const double mean_mm = mean_joint_error(data.pred, data.gt);

  std::printf("samples: %zu\n", archive.samples.size());
  std::printf("mean joint error: %.4f mm\n", mean_mm);
  std::printf("threshold_mm pck\n");
  for (std::size_t i = 0; i < curve.thresholds.size(); i += 11)
    std::printf("%.2f %.4f\n", curve.thresholds[i], curve.values[i]);
  std::printf("auc[20,50]: %.4f\n", area);
  if (!curve_out.empty()) write_curve_table(curve, curve_out);
  return 0;
}

int cmd_fit_shape(const ModelOpt& model_opt, const std::string& targets_path, double lambda,
                  int max_iters, const std::string& out) {
  const KinematicModel model = model_opt.resolve();
  const nlohmann::json doc = nlohmann::json::parse(read_file(targets_path));
  const std::vector<double> targets = doc.get<std::vector<double>>();

  ShapeFitConfig cfg;
  cfg.lambda_beta = lambda;
  cfg.max_iters = max_iters;
  const ShapeFitResult res = fit_shape(targets, model, cfg);

  std::printf("beta:");
  for (Eigen::Index i = 0; i < res.beta.beta.size(); ++i) std::printf(" %.9g", res.beta.beta(i));
  std::printf("\nbeta_norm: %.9g\nresidual: %.9g\niterations: %d\nconverged: %s\n",
              res.beta.beta.norm(), res.residual, res.iterations, res.converged ? "true" : "false");
  if (!out.empty()) {
    nlohmann::json rj;
    rj["beta"] = std::vector<double>(res.beta.beta.data(), res.beta.beta.data() + res.beta.beta.size());
    rj["residual"] = res.residual;
    rj["iterations"] = res.iterations;
    rj["converged"] = res.converged;
    write_file(out, rj.dump(1));
  }
  return 0;
}

int cmd_solve_translation(double fx, double fy, double cx, double cy, double skew,
                          double ru, double rv, double wu, double wv, double dw, double ref_mm) {
  Intrinsics k;
  k.k << fx, skew, cx, 0, fy, cy, 0, 0, 1;
  const double z = solve_root_depth(k, {ru, rv}, {wu, wv}, dw, ref_mm);
  const Eigen::Vector3d t = recover_translation(k, {ru, rv}, z);
  std::printf("z_r: %.9g\ntranslation: %.9g %.9g %.9g\n", z, t.x(), t.y(), t.z());
  return 0;
}

int cmd_plot_pck(const ModelOpt& model_opt, const std::string& net_path, const std::string& samples_path,
                 const std::string& align_name, double ref_mm, const std::string& table_out,
                 const std::string& svg_out) {
  const KinematicModel model = model_opt.resolve();
  const Mlp net = load_mlp(net_path);
  const SampleArchive archive = read_samples(samples_path);
  const EvalData data = run_predictions(net, model, archive.samples, parse_align(align_name), ref_mm);
  const PckCurve curve = pck(data.pred, data.gt, default_thresholds());
  write_curve_table(curve, table_out);
  write_curve_svg(curve, svg_out);
  std::printf("auc[20,50]: %.4f\n", auc(curve));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hand inverse-kinematics toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from an INI file; flags override it");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate an IK training sample archive");
  ModelOpt gen_model;
  gen_model.attach(gen);
  std::string gen_library;
  int gen_synth_library = 0, gen_count = 0;
  double gen_noise = 0.05, gen_noisy_fraction = 0.5;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  gen->add_option("--library", gen_library, "pose library file (handik-poses-v1)");
  gen->add_option("--synth-library", gen_synth_library, "generate a synthetic library with this many poses");
  gen->add_option("--count", gen_count, "number of samples")->required();
  gen->add_option("--noise-std", gen_noise, "noise stddev as a fraction of the reference bone");
  gen->add_option("--noisy-fraction", gen_noisy_fraction, "fraction of noisy (position-only) samples");
  gen->add_option("--seed", gen_seed, "random seed");
  gen->add_option("--out", gen_out, "output archive path")->required();

  // train-ik
  auto* tr = app.add_subcommand("train-ik", "train the IK network on a sample archive");
  ModelOpt tr_model;
  tr_model.attach(tr);
  std::string tr_samples, tr_out, tr_log;
  TrainConfig tr_cfg;
  int tr_hidden = 256;
  tr->add_option("--samples", tr_samples, "sample archive")->required();
  tr->add_option("--out", tr_out, "output network path")->required();
  tr->add_option("--epochs", tr_cfg.epochs, "training epochs");
  tr->add_option("--batch", tr_cfg.batch_size, "batch size");
  tr->add_option("--lr", tr_cfg.learning_rate, "learning rate");
  tr->add_option("--hidden", tr_hidden, "hidden layer width");
  tr->add_option("--seed", tr_cfg.seed, "random seed");
  tr->add_option("--w-cos", tr_cfg.weights.cos, "rotation cosine loss weight");
  tr->add_option("--w-l2", tr_cfg.weights.l2, "rotation l2 loss weight");
  tr->add_option("--w-xyz", tr_cfg.weights.xyz, "position loss weight");
  tr->add_option("--w-norm", tr_cfg.weights.norm, "unit-norm loss weight");
  tr->add_option("--log", tr_log, "write the per-epoch loss table here");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a trained network on an archive");
  ModelOpt ev_model;
  ev_model.attach(ev);
  std::string ev_net, ev_samples, ev_align = "root", ev_curve;
  double ev_ref_mm = 80.0;
  ev->add_option("--net", ev_net, "trained network file")->required();
  ev->add_option("--samples", ev_samples, "sample archive")->required();
  ev->add_option("--align", ev_align, "alignment: root, fingertip or none");
  ev->add_option("--ref-mm", ev_ref_mm, "reference bone length in mm for unit conversion");
  ev->add_option("--curve-out", ev_curve, "write the full PCK table here");

  // fit-shape
  auto* fs = app.add_subcommand("fit-shape", "fit shape coefficients to bone-length ratios");
  ModelOpt fs_model;
  fs_model.attach(fs);
  std::string fs_targets, fs_out;
  double fs_lambda = 1e-3;
  int fs_iters = 50;
  fs->add_option("--targets", fs_targets, "JSON array of per-bone length ratios")->required();
  fs->add_option("--lambda", fs_lambda, "regularizer weight");
  fs->add_option("--max-iters", fs_iters, "iteration cap");
  fs->add_option("--out", fs_out, "write the fit result JSON here");

  // solve-translation
  auto* st = app.add_subcommand("solve-translation", "closed-form root depth and translation");
  double st_fx = 0, st_fy = 0, st_cx = 0, st_cy = 0, st_skew = 0;
  double st_ru = 0, st_rv = 0, st_wu = 0, st_wv = 0, st_dw = 0, st_ref = 0;
  st->add_option("--fx", st_fx)->required();
  st->add_option("--fy", st_fy)->required();
  st->add_option("--cx", st_cx)->required();
  st->add_option("--cy", st_cy)->required();
  st->add_option("--skew", st_skew);
  st->add_option("--root-u", st_ru)->required();
  st->add_option("--root-v", st_rv)->required();
  st->add_option("--wrist-u", st_wu)->required();
  st->add_option("--wrist-v", st_wv)->required();
  st->add_option("--dw", st_dw, "normalized root-relative wrist depth")->required();
  st->add_option("--ref-mm", st_ref, "reference bone length in mm")->required();

  // plot-pck
  auto* pp = app.add_subcommand("plot-pck", "evaluate and emit a PCK table plus an SVG plot");
  ModelOpt pp_model;
  pp_model.attach(pp);
  std::string pp_net, pp_samples, pp_align = "root", pp_table, pp_svg;
  double pp_ref_mm = 80.0;
  pp->add_option("--net", pp_net)->required();
  pp->add_option("--samples", pp_samples)->required();
  pp->add_option("--align", pp_align);
  pp->add_option("--ref-mm", pp_ref_mm);
  pp->add_option("--table-out", pp_table)->required();
  pp->add_option("--svg-out", pp_svg)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_data(gen_model, gen_library, gen_synth_library, gen_count, gen_noise,
                          gen_noisy_fraction, gen_seed, gen_out);
    if (tr->parsed()) return cmd_train_ik(tr_model, tr_samples, tr_out, tr_cfg, tr_hidden, tr_log);
    if (ev->parsed()) return cmd_eval(ev_model, ev_net, ev_samples, ev_align, ev_ref_mm, ev_curve);
    if (fs->parsed()) return cmd_fit_shape(fs_model, fs_targets, fs_lambda, fs_iters, fs_out);
    if (st->parsed())
      return cmd_solve_translation(st_fx, st_fy, st_cx, st_cy, st_skew, st_ru, st_rv, st_wu, st_wv,
                                   st_dw, st_ref);
    if (pp->parsed())
      return cmd_plot_pck(pp_model, pp_net, pp_samples, pp_align, pp_ref_mm, pp_table, pp_svg);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
