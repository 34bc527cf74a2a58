/*
 * dynpet : dynamic cardiac PET frame conversion and motion correction
 *
 * Copyright 2026 dynpet contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dynpet/common.hpp"
#include "dynpet/config.hpp"
#include "dynpet/io.hpp"
#include "dynpet/kinetics.hpp"
#include "dynpet/motion.hpp"
#include "dynpet/phantom.hpp"
#include "dynpet/pipeline.hpp"
#include "dynpet/training.hpp"

namespace fs = std::filesystem;
using namespace dynpet;

namespace {

Config load_config(const std::string& path) {
  if (path.empty()) return Config();
  return Config::parse_file(path);
}

PhantomConfig phantom_from(Config& c) {
  PhantomConfig p;
  p.nx = c.get_int("phantom.nx", p.nx);
  p.ny = c.get_int("phantom.ny", p.ny);
  p.nz = c.get_int("phantom.nz", p.nz);
  p.voxel_mm[0] = c.get_double("phantom.voxel_x_mm", p.voxel_mm[0]);
  p.voxel_mm[1] = c.get_double("phantom.voxel_y_mm", p.voxel_mm[1]);
  p.voxel_mm[2] = c.get_double("phantom.voxel_z_mm", p.voxel_mm[2]);
  p.geom = default_geometry(p.nx, p.ny, p.nz);
  p.input_amp = c.get_double("phantom.input_amp", p.input_amp);
  p.input_alpha = c.get_double("phantom.input_alpha", p.input_alpha);
  p.input_tau_s = c.get_double("phantom.input_tau_s", p.input_tau_s);
  p.rv_to_lv_delay_s =
      c.get_double("phantom.rv_to_lv_delay_s", p.rv_to_lv_delay_s);
  p.dispersion_s = c.get_double("phantom.dispersion_s", p.dispersion_s);
  p.k1 = c.get_double("phantom.k1", p.k1);
  p.k2 = c.get_double("phantom.k2", p.k2);
  p.background_frac =
      c.get_double("phantom.background_frac", p.background_frac);
  p.psf_sigma_vox = c.get_double("phantom.psf_sigma_vox", p.psf_sigma_vox);
  p.noise_level = c.get_double("phantom.noise_level", p.noise_level);
  return p;
}

TrainConfig train_from(Config& c) {
  TrainConfig t;
  t.lr_g = c.get_double("train.lr_g", t.lr_g);
  t.lr_d = c.get_double("train.lr_d", t.lr_d);
  t.epochs = c.get_int("train.epochs", t.epochs);
  t.patch[0] = c.get_int("train.patch_x", t.patch[0]);
  t.patch[1] = c.get_int("train.patch_y", t.patch[1]);
  t.patch[2] = c.get_int("train.patch_z", t.patch[2]);
  t.rot_xy_deg = c.get_double("train.rot_xy_deg", t.rot_xy_deg);
  t.trans_vox = c.get_int("train.trans_vox", t.trans_vox);
  t.mask_jitter_vox = c.get_int("train.mask_jitter_vox", t.mask_jitter_vox);
  t.use_adv = c.get_bool("train.use_adv", t.use_adv);
  t.use_mse = c.get_bool("train.use_mse", t.use_mse);
  t.use_mask = c.get_bool("train.use_mask", t.use_mask);
  t.use_film = c.get_bool("train.use_film", t.use_film);
  t.checkpoint_every = c.get_int("train.checkpoint_every", t.checkpoint_every);
  t.model.levels = c.get_int("train.levels", t.model.levels);
  t.model.base_channels =
      c.get_int("train.base_channels", t.model.base_channels);
  t.model.lstm_hidden = c.get_int("train.lstm_hidden", t.model.lstm_hidden);
  return t;
}

RegisterOptions register_from(Config& c) {
  RegisterOptions r;
  r.spacing = c.get_double("motion.spacing", r.spacing);
  r.levels = c.get_int("motion.levels", r.levels);
  r.iters = c.get_int("motion.iters", r.iters);
  r.lr = c.get_double("motion.lr", r.lr);
  return r;
}

FitOptions fit_from(Config& c) {
  FitOptions f;
  f.k1_max = c.get_double("kinetics.k1_max", f.k1_max);
  f.k2_max = c.get_double("kinetics.k2_max", f.k2_max);
  f.grid_n = c.get_int("kinetics.grid_n", f.grid_n);
  f.max_iters = c.get_int("kinetics.max_iters", f.max_iters);
  return f;
}

std::string study_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "study_%03d", index);
  return buf;
}

std::string field_name(const char* prefix, int frame) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%02d.tgf", prefix, frame);
  return buf;
}

int run_simulate(const std::string& config, const std::string& out, int n,
                 std::uint64_t seed) {
  Config c = load_config(config);
  const PhantomConfig base = phantom_from(c);
  const double k1_min = c.get_double("sim.k1_min", 0.3);
  const double k1_max = c.get_double("sim.k1_max", 0.9);
  const double k2_min = c.get_double("sim.k2_min", 0.06);
  const double k2_max = c.get_double("sim.k2_max", 0.18);
  const double center_jit = c.get_double("sim.center_jitter_vox", 2.0);
  const double radius_shrink = c.get_double("sim.radius_shrink", 0.9);
  const double tau_jitter = c.get_double("sim.tau_jitter", 0.1);
  const bool vary = c.get_bool("sim.vary", true);
  c.check_consumed();

  for (int j = 0; j < n; ++j) {
    PhantomConfig cfg = base;
    if (vary) {
      std::mt19937_64 rng(mix_seed(seed, 1000 + static_cast<std::uint64_t>(j)));
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      cfg.k1 = k1_min + (k1_max - k1_min) * u01(rng);
      cfg.k2 = k2_min + (k2_max - k2_min) * u01(rng);
      cfg.input_tau_s *= 1.0 + tau_jitter * (2.0 * u01(rng) - 1.0);
      // Centers jitter only across the RV-LV axis so regions stay disjoint;
      // radii only shrink.
      auto jit = [&] { return center_jit * (2.0 * u01(rng) - 1.0); };
      cfg.geom.rv_center[1] += jit();
      cfg.geom.rv_center[2] += jit();
      cfg.geom.lv_center[1] += jit();
      cfg.geom.lv_center[2] += jit();
      const double shrink = radius_shrink + (1.0 - radius_shrink) * u01(rng);
      cfg.geom.rv_radius *= shrink;
      cfg.geom.lv_radius *= shrink;
    }
    StudySample sample =
        simulate_study(cfg, mix_seed(seed, static_cast<std::uint64_t>(j)));
    StudyData s;
    s.id = study_name(j);
    s.series = std::move(sample.series);
    s.labels = std::move(sample.labels);
    s.rvbp_tac = std::move(sample.rv_tac);
    s.lvbp_tac = std::move(sample.lv_tac);
    s.myo_tac = std::move(sample.myo_tac);
    s.true_k1 = sample.true_k1;
    s.true_k2 = sample.true_k2;
    s.true_mbf = sample.true_mbf;
    save_study(out + "/" + s.id, s);
  }
  std::cout << "wrote " << n << " studies to " << out << "\n";
  return 0;
}

int run_train(const std::string& config, const std::string& data,
              const std::string& out, std::uint64_t seed) {
  Config c = load_config(config);
  TrainConfig cfg = train_from(c);
  c.check_consumed();
  cfg.seed = seed;
  cfg.out_dir = out;
  fs::create_directories(out);

  std::vector<TrainingSample> samples;
  for (const std::string& name : list_studies(data)) {
    const StudyData s = load_study(data + "/" + name);
    auto more = build_training_samples(s);
    samples.insert(samples.end(), more.begin(), more.end());
  }
  std::cout << "training on " << samples.size() << " samples\n";
  TrainResult result = train(samples, cfg);
  write_loss_history(out + "/loss.csv", result.history);
  std::cout << "wrote " << out << "/generator.tgw and loss.csv\n";
  return 0;
}

int run_convert(const std::string& ckpt, const std::string& study,
                const std::string& out) {
  const Generator g = Generator::from_checkpoint(load_checkpoint(ckpt));
  const StudyData s = load_study(study);
  const DynamicSeries converted = convert_study(s, g);
  fs::create_directories(out);
  write_series(out + "/converted.dpv", converted);
  std::cout << "wrote " << out << "/converted.dpv\n";
  return 0;
}

int run_corrupt(const std::string& study, double magnitude, double scale,
                double spacing, const std::string& out, std::uint64_t seed) {
  const StudyData s = load_study(study);
  CorruptResult r = corrupt_study(s, magnitude, scale, spacing, seed);
  StudyData moved = s;
  moved.series = std::move(r.series);
  save_study(out, moved);
  for (std::size_t i = 0; i < r.moved.size(); ++i)
    write_field(out + "/" + field_name("true_field", r.moved[i]), r.fields[i]);
  std::cout << "corrupted " << r.moved.size() << " frames into " << out
            << "\n";
  return 0;
}

int run_register(const std::string& moving, int fixed,
                 const std::string& converted_dir, const std::string& config,
                 const std::string& out) {
  Config c = load_config(config);
  const RegisterOptions opt = register_from(c);
  c.check_consumed();
  const StudyData s = load_study(moving);

  DynamicSeries converted;
  const DynamicSeries* guidance = nullptr;
  if (!converted_dir.empty()) {
    converted = read_series(converted_dir + "/converted.dpv");
    guidance = &converted;
  }
  RegisterStudyResult r = register_study(s, guidance, fixed, opt);
  StudyData corrected = s;
  corrected.series = std::move(r.corrected);
  save_study(out, corrected);
  for (std::size_t i = 0; i < r.moved.size(); ++i)
    write_field(out + "/" + field_name("est_field", r.moved[i]), r.fields[i]);
  std::cout << "registered " << r.moved.size() << " frames into " << out
            << "\n";
  return 0;
}

int run_quantify(const std::string& study, const std::string& config,
                 const std::string& out) {
  Config c = load_config(config);
  const FitOptions opt = fit_from(c);
  c.check_consumed();
  const StudyData s = load_study(study);
  const StudyQuantification q = quantify_study(s.series, s.labels, opt);
  write_csv(
      out,
      {"study", "k1", "k2", "mbf", "wss", "converged", "erode_radius",
       "pct_dk1", "pct_dmbf"},
      {{s.id, format_double(q.params.k1), format_double(q.params.k2),
        format_double(q.params.mbf), format_double(q.params.wss),
        q.params.converged ? "1" : "0", std::to_string(q.erode_radius),
        format_double(percent_difference(q.params.k1, s.true_k1)),
        format_double(percent_difference(q.params.mbf, s.true_mbf))}});
  std::cout << "wrote " << out << "\n";
  return 0;
}

int run_evaluate(const std::string& pred, const std::string& truth,
                 const std::string& out) {
  std::vector<FrameScore> image_scores;
  std::vector<MotionScore> motion_scores;
  for (const std::string& name : list_studies(truth)) {
    const StudyData t = load_study(truth + "/" + name);
    const std::string pdir = pred + "/" + name;
    if (fs::exists(pdir + "/converted.dpv")) {
      const DynamicSeries converted = read_series(pdir + "/converted.dpv");
      auto more = score_study(t, converted);
      image_scores.insert(image_scores.end(), more.begin(), more.end());
    }
    const int eq = find_eq_frame(t.rvbp_tac, t.lvbp_tac);
    for (int i : select_eligible_frames(t.lvbp_tac)) {
      const std::string est = pdir + "/" + field_name("est_field", i);
      const std::string tru = truth + "/" + name + "/" +
                              field_name("true_field", i);
      if (!fs::exists(est) || !fs::exists(tru)) continue;
      const DisplacementField ef = read_field(est);
      const DisplacementField tf = read_field(tru);
      const DisplacementField none(tf.gx, tf.gy, tf.gz, tf.spacing);
      MotionScore ms;
      ms.study_id = name;
      ms.frame_index = i;
      ms.eq = eq;
      ms.corrected_mm = correction_error_mm(ef, tf, t.series.voxel_mm);
      ms.uncorrected_mm = correction_error_mm(none, tf, t.series.voxel_mm);
      motion_scores.push_back(ms);
    }
  }
  std::vector<EvaluationRow> rows = stratify_scores(image_scores);
  const auto motion_rows = stratify_motion(motion_scores);
  rows.insert(rows.end(), motion_rows.begin(), motion_rows.end());
  if (rows.empty())
    throw std::runtime_error("evaluate: no comparable artifacts found");
  write_evaluation_csv(out, rows);
  std::cout << "wrote " << out << " (" << rows.size() << " rows)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "dynamic cardiac PET toolbox: simulation, early-to-late frame "
      "conversion, motion correction, and kinetic quantification"};
  app.require_subcommand(1);

  std::string config, out, data, ckpt, study, moving, converted, pred, truth;
  std::uint64_t seed = 0;
  int n = 1, fixed = -1;
  double magnitude = 2.0, scale = 2.0, spacing = 8.0;

  auto* sim = app.add_subcommand("simulate", "write simulated studies");
  sim->add_option("--config", config, "key=value config file");
  sim->add_option("--out", out, "output directory")->required();
  sim->add_option("--n", n, "number of studies");
  sim->add_option("--seed", seed, "random seed");

  auto* trn = app.add_subcommand("train", "train the conversion network");
  trn->add_option("--config", config, "key=value config file");
  trn->add_option("--data", data, "directory of studies")->required();
  trn->add_option("--out", out, "output directory")->required();
  trn->add_option("--seed", seed, "random seed");

  auto* cnv = app.add_subcommand("convert", "predict late frames");
  cnv->add_option("--ckpt", ckpt, "generator checkpoint")->required();
  cnv->add_option("--study", study, "study directory")->required();
  cnv->add_option("--out", out, "output directory")->required();

  auto* cor = app.add_subcommand("corrupt", "apply simulated motion");
  cor->add_option("--study", study, "study directory")->required();
  cor->add_option("--magnitude", magnitude, "control displacement bound, voxels");
  cor->add_option("--scale", scale, "field scaling factor");
  cor->add_option("--spacing", spacing, "control spacing, voxels");
  cor->add_option("--out", out, "output directory")->required();
  cor->add_option("--seed", seed, "random seed");

  auto* reg = app.add_subcommand("register", "motion-correct a study");
  reg->add_option("--moving", moving, "corrupted study directory")->required();
  reg->add_option("--fixed", fixed, "reference frame index (-1 = last)");
  reg->add_option("--converted", converted,
                  "directory with converted.dpv to guide registration");
  reg->add_option("--config", config, "key=value config file");
  reg->add_option("--out", out, "output directory")->required();

  auto* qnt = app.add_subcommand("quantify", "fit kinetics and report");
  qnt->add_option("--study", study, "study directory")->required();
  qnt->add_option("--config", config, "key=value config file");
  qnt->add_option("--out", out, "report CSV path")->required();

  auto* evl = app.add_subcommand("evaluate", "stratified comparison report");
  evl->add_option("--pred", pred, "directory of per-study predictions")
      ->required();
  evl->add_option("--truth", truth, "directory of reference studies")
      ->required();
  evl->add_option("--out", out, "report CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return run_simulate(config, out, n, seed);
    if (trn->parsed()) return run_train(config, data, out, seed);
    if (cnv->parsed()) return run_convert(ckpt, study, out);
    if (cor->parsed())
      return run_corrupt(study, magnitude, scale, spacing, out, seed);
    if (reg->parsed())
      return run_register(moving, fixed, converted, config, out);
    if (qnt->parsed()) return run_quantify(study, config, out);
    if (evl->parsed()) return run_evaluate(pred, truth, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
