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

#include "dynpet/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dynpet/adam.hpp"
#include "dynpet/common.hpp"
#include "dynpet/io.hpp"
#include "dynpet/ops.hpp"

namespace dynpet {

namespace {

constexpr int kCropJitterVox = 4;
constexpr double kProbEps = 1e-7;

double clamp01(double v, double lo, double hi) {
  return std::min(hi, std::max(lo, v));
}

/// Trilinear read with border clamp at continuous voxel coordinates.
double sample_trilinear(const Volume& vol, double sx, double sy, double sz) {
  const double fx = std::floor(sx), fy = std::floor(sy), fz = std::floor(sz);
  const double wx = sx - fx, wy = sy - fy, wz = sz - fz;
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy),
            z0 = static_cast<int>(fz);
  auto cl = [](int i, int n) { return std::min(n - 1, std::max(0, i)); };
  double out = 0.0;
  for (int dx = 0; dx < 2; ++dx)
    for (int dy = 0; dy < 2; ++dy)
      for (int dz = 0; dz < 2; ++dz) {
        const double w = (dx ? wx : 1.0 - wx) * (dy ? wy : 1.0 - wy) *
                         (dz ? wz : 1.0 - wz);
        if (w == 0.0) continue;
        out += w * vol.at(cl(x0 + dx, vol.nx), cl(y0 + dy, vol.ny),
                          cl(z0 + dz, vol.nz));
      }
  return out;
}

std::uint8_t sample_nearest(const LabelMap& m, double sx, double sy,
                            double sz) {
  auto cl = [](double s, int n) {
    return std::min(n - 1, std::max(0, static_cast<int>(std::lround(s))));
  };
  return m.at(cl(sx, m.nx), cl(sy, m.ny), cl(sz, m.nz));
}

Tensor probability(const Discriminator& d, const Tensor& x) {
  return clamp(sigmoid(d.forward(x)), kProbEps, 1.0 - kProbEps);
}

void zero_all(const std::vector<Tensor>& params) {
  for (const Tensor& p : params) {
    Tensor t = p;
    t.zero_grad();
  }
}

}  // namespace

NormalizeResult normalize_frame(const Volume& v) {
  if (v.v.empty()) throw std::invalid_argument("normalize_frame: empty volume");
  double lo = v.v[0], hi = v.v[0];
  for (double x : v.v) {
    if (std::isnan(x))
      throw std::invalid_argument("normalize_frame: NaN in input");
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  NormalizeResult r;
  r.vmin = lo;
  r.vmax = hi;
  r.volume = Volume(v.nx, v.ny, v.nz);
  if (hi == lo) {
    r.constant = true;
    return r;  // all zeros
  }
  const double s = 2.0 / (hi - lo);
  for (std::size_t i = 0; i < v.v.size(); ++i)
    r.volume.v[i] = s * (v.v[i] - lo) - 1.0;
  return r;
}

std::vector<int> select_eligible_frames(const std::vector<double>& lvbp_tac) {
  std::vector<int> out;
  if (lvbp_tac.size() < 2) return out;
  double peak = 0.0;
  for (double v : lvbp_tac) peak = std::max(peak, v);
  if (peak <= 0.0) return out;
  for (std::size_t i = 0; i + 1 < lvbp_tac.size(); ++i)
    if (lvbp_tac[i] > 0.10 * peak) out.push_back(static_cast<int>(i));
  return out;
}

int find_eq_frame(const std::vector<double>& rvbp_tac,
                  const std::vector<double>& lvbp_tac) {
  if (rvbp_tac.size() != lvbp_tac.size())
    throw std::invalid_argument("find_eq_frame: TAC length mismatch");
  for (std::size_t i = 0; i < rvbp_tac.size(); ++i)
    if (lvbp_tac[i] >= rvbp_tac[i]) return static_cast<int>(i);
  throw std::runtime_error("no EQ frame");
}

Volume encode_anatomy(const LabelMap& labels) {
  Volume out(labels.nx, labels.ny, labels.nz);
  for (std::size_t i = 0; i < labels.v.size(); ++i)
    out.v[i] = -1.0 + labels.v[i] * (2.0 / 3.0);
  return out;
}

AugmentParams draw_augment_params(const TrainingSample& s,
                                  const TrainConfig& cfg,
                                  std::mt19937_64& rng) {
  AugmentParams p;
  p.patch = cfg.patch;

  // Crop base: centroid of the inferior (-y) half of the myocardium mask.
  const LabelMap& m = s.labels;
  double sum_y = 0.0;
  std::int64_t n_myo = 0;
  for (int x = 0; x < m.nx; ++x)
    for (int y = 0; y < m.ny; ++y)
      for (int z = 0; z < m.nz; ++z)
        if (m.at(x, y, z) == kMyocardium) {
          sum_y += y;
          ++n_myo;
        }
  double cx = 0.5 * (m.nx - 1), cy = 0.5 * (m.ny - 1), cz = 0.5 * (m.nz - 1);
  if (n_myo > 0) {
    const double mean_y = sum_y / static_cast<double>(n_myo);
    double sx = 0.0, sy = 0.0, sz = 0.0;
    std::int64_t n = 0;
    for (int x = 0; x < m.nx; ++x)
      for (int y = 0; y < m.ny; ++y)
        for (int z = 0; z < m.nz; ++z)
          if (m.at(x, y, z) == kMyocardium && y <= mean_y) {
            sx += x;
            sy += y;
            sz += z;
            ++n;
          }
    cx = sx / static_cast<double>(n);
    cy = sy / static_cast<double>(n);
    cz = sz / static_cast<double>(n);
  }

  std::uniform_int_distribution<int> jit(-kCropJitterVox, kCropJitterVox);
  p.crop_center = {static_cast<int>(std::lround(cx)) + jit(rng),
                   static_cast<int>(std::lround(cy)) + jit(rng),
                   static_cast<int>(std::lround(cz)) + jit(rng)};

  std::uniform_real_distribution<double> rot(-cfg.rot_xy_deg, cfg.rot_xy_deg);
  p.theta_rad = rot(rng) * (std::acos(-1.0) / 180.0);

  std::uniform_int_distribution<int> tr(-cfg.trans_vox, cfg.trans_vox);
  p.translation = {tr(rng), tr(rng), tr(rng)};

  std::uniform_int_distribution<int> mj(-cfg.mask_jitter_vox,
                                        cfg.mask_jitter_vox);
  p.mask_shift = {mj(rng), mj(rng), mj(rng)};
  return p;
}

TrainingSample apply_augment(const TrainingSample& s, const AugmentParams& p) {
  const int nx = s.early_frame.nx, ny = s.early_frame.ny,
            nz = s.early_frame.nz;
  const int px = p.patch[0], py = p.patch[1], pz = p.patch[2];
  if (px < 1 || py < 1 || pz < 1 || px > nx || py > ny || pz > nz)
    throw std::invalid_argument("apply_augment: patch does not fit volume");
  if (!s.early_frame.same_grid(s.last_frame) || s.labels.nx != nx ||
      s.labels.ny != ny || s.labels.nz != nz)
    throw std::invalid_argument("apply_augment: sample grids differ");

  const int dims[3] = {nx, ny, nz};
  const int patch[3] = {px, py, pz};
  int origin[3];
  for (int ax = 0; ax < 3; ++ax) {
    const int want = p.crop_center[ax] - patch[ax] / 2 + p.translation[ax];
    origin[ax] = std::min(dims[ax] - patch[ax], std::max(0, want));
  }

  const double ccx = 0.5 * (px - 1), ccy = 0.5 * (py - 1);
  const double ct = std::cos(p.theta_rad), st = std::sin(p.theta_rad);

  TrainingSample out;
  out.early_frame = Volume(px, py, pz);
  out.last_frame = Volume(px, py, pz);
  out.labels = LabelMap(px, py, pz);
  out.temporal = s.temporal;
  out.study_id = s.study_id;
  out.frame_index = s.frame_index;

  for (int qx = 0; qx < px; ++qx)
    for (int qy = 0; qy < py; ++qy) {
      const double dx = qx - ccx, dy = qy - ccy;
      const double rx = ct * dx - st * dy, ry = st * dx + ct * dy;
      const double sx = origin[0] + ccx + rx;
      const double sy = origin[1] + ccy + ry;
      for (int qz = 0; qz < pz; ++qz) {
        const double sz = origin[2] + qz;
        out.early_frame.at(qx, qy, qz) =
            sample_trilinear(s.early_frame, sx, sy, sz);
        out.last_frame.at(qx, qy, qz) =
            sample_trilinear(s.last_frame, sx, sy, sz);
        out.labels.at(qx, qy, qz) =
            sample_nearest(s.labels, sx + p.mask_shift[0],
                           sy + p.mask_shift[1], sz + p.mask_shift[2]);
      }
    }
  return out;
}

double adv_loss(double d_real, double d_fake) {
  if (!(d_real >= 0.0 && d_real <= 1.0 && d_fake >= 0.0 && d_fake <= 1.0))
    throw std::invalid_argument("adv_loss: probabilities must lie in [0,1]");
  const double pr = clamp01(d_real, kProbEps, 1.0 - kProbEps);
  const double pf = clamp01(d_fake, kProbEps, 1.0 - kProbEps);
  return -std::log(pr) - std::log(1.0 - pf);
}

double mse_loss(const Volume& pred, const Volume& target) {
  if (!pred.same_grid(target))
    throw std::invalid_argument("mse_loss: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    const double d = pred.v[i] - target.v[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.v.size());
}

TrainResult train(const std::vector<TrainingSample>& dataset,
                  const TrainConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.lr_g <= 0.0 || cfg.lr_d <= 0.0)
    throw std::invalid_argument("train: learning rates must be positive");
  if (!cfg.use_adv && !cfg.use_mse)
    throw std::invalid_argument("train: objective needs use_adv or use_mse");
  const int div = 1 << cfg.model.levels;
  for (int ax = 0; ax < 3; ++ax)
    if (cfg.patch[ax] % div != 0 || cfg.patch[ax] % 8 != 0)
      throw std::invalid_argument(
          "train: patch extents must be divisible by 2^levels and by 8");

  ModelConfig mc = cfg.model;
  mc.use_film = cfg.use_film;
  mc.use_mask = cfg.use_mask;

  std::mt19937_64 init_rng(mix_seed(cfg.seed, 1));
  std::mt19937_64 aug_rng(mix_seed(cfg.seed, 2));
  std::mt19937_64 order_rng(mix_seed(cfg.seed, 3));

  Generator g(mc, init_rng);
  Discriminator d(cfg.patch[0], cfg.patch[1], cfg.patch[2], mc.base_channels,
                  init_rng);
  std::vector<Tensor> g_params = g.parameters();
  std::vector<Tensor> d_params = d.parameters();

  AdamState g_state, d_state;
  g_state.lr = cfg.lr_g;
  d_state.lr = cfg.lr_d;

  const std::int64_t pvox = static_cast<std::int64_t>(cfg.patch[0]) *
                            cfg.patch[1] * cfg.patch[2];

  TrainResult result;
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double sum_d = 0.0, sum_adv = 0.0, sum_mse = 0.0;

    for (std::size_t idx : order) {
      const TrainingSample& raw = dataset[idx];
      const AugmentParams ap = draw_augment_params(raw, cfg, aug_rng);
      const TrainingSample a = apply_augment(raw, ap);
      const Volume anat = encode_anatomy(a.labels);

      std::vector<double> xin;
      xin.reserve(2 * pvox);
      xin.insert(xin.end(), a.early_frame.v.begin(), a.early_frame.v.end());
      xin.insert(xin.end(), anat.v.begin(), anat.v.end());
      const Tensor x = Tensor::from(
          {2, cfg.patch[0], cfg.patch[1], cfg.patch[2]}, std::move(xin));
      const Tensor real = Tensor::from(
          {1, cfg.patch[0], cfg.patch[1], cfg.patch[2]}, a.last_frame.v);

      Tape tape;
      Tape::Scope scope(tape);

      const Tensor fake = g.forward(x, a.temporal);

      double step_d = 0.0, step_adv = 0.0, step_mse = 0.0;
      Tensor g_objective;

      if (cfg.use_adv) {
        // Discriminator update on a detached fake.
        const Tensor p_real = probability(d, real);
        const Tensor p_fake = probability(d, detach(fake));
        const Tensor d_loss =
            scale(add(log(p_real),
                      log(add_scalar(scale(p_fake, -1.0), 1.0))),
                  -1.0);
        step_d = d_loss.scalar();
        tape.backward(d_loss);
        adam_step(d_params, d_state);
        zero_all(d_params);

        // Generator update judged by the freshly updated discriminator,
        // non-saturating form.
        const Tensor p_fake2 = probability(d, fake);
        const Tensor g_adv = scale(log(p_fake2), -1.0);
        step_adv = g_adv.scalar();
        g_objective = g_adv;
      }
      if (cfg.use_mse) {
        const Tensor diff = sub(fake, real);
        const Tensor g_mse = mean(mul(diff, diff));
        step_mse = g_mse.scalar();
        g_objective =
            g_objective.defined() ? add(g_objective, g_mse) : g_mse;
      }

      if (!std::isfinite(step_d) || !std::isfinite(step_adv) ||
          !std::isfinite(step_mse))
        throw std::runtime_error(
            "training diverged: non-finite loss at epoch " +
            std::to_string(epoch) + ", study " + raw.study_id + ", frame " +
            std::to_string(raw.frame_index));

      tape.backward(g_objective);
      adam_step(g_params, g_state);
      zero_all(g_params);
      zero_all(d_params);  // discard gradients of the replayed D branch

      sum_d += step_d;
      sum_adv += step_adv;
      sum_mse += step_mse;
    }

    const double n = static_cast<double>(dataset.size());
    result.history.push_back(
        {epoch, sum_d / n, sum_adv / n, sum_mse / n});

    if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 &&
        epoch % cfg.checkpoint_every == 0 && epoch != cfg.epochs)
      save_generator(cfg.out_dir + "/generator_epoch" +
                         std::to_string(epoch) + ".tgw",
                     g);
  }

  if (!cfg.out_dir.empty())
    save_generator(cfg.out_dir + "/generator.tgw", g);

  result.generator = g;
  return result;
}

void write_loss_history(const std::string& path,
                        const std::vector<EpochStats>& history) {
  std::vector<std::vector<std::string>> rows;
  rows.reserve(history.size());
  for (const EpochStats& e : history)
    rows.push_back({std::to_string(e.epoch), format_double(e.d_loss),
                    format_double(e.g_adv), format_double(e.g_mse)});
  write_csv(path, {"epoch", "d_loss", "g_adv", "g_mse"}, rows);
}

}  // namespace dynpet
