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

#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dynpet/data.hpp"
#include "dynpet/model.hpp"

namespace dynpet {

struct TrainConfig {
  double lr_g = 2e-4;
  double lr_d = 5e-5;
  int epochs = 30;
  std::array<int, 3> patch = {32, 32, 16};
  double rot_xy_deg = 45.0;  // in-plane rotation range [-r, r]
  int trans_vox = 5;         // integer translation range [-t, t]^3
  int mask_jitter_vox = 3;   // extra label-map shift range [-j, j]^3
  bool use_adv = true;       // adversarial term in the generator objective
  bool use_mse = true;       // voxel MSE term in the generator objective
  bool use_mask = true;      // feed the anatomy channel
  bool use_film = true;      // temporal modulation at the bottleneck
  std::uint64_t seed = 0;

  ModelConfig model;          // levels / base_channels / lstm_hidden
  int checkpoint_every = 0;   // epochs between checkpoints; 0 = final only
  std::string out_dir;        // checkpoint directory; empty = none written
};

/// One conversion case: an eligible early frame, the reference last frame,
/// the segmentation, and the temporal conditioning for that frame.
struct TrainingSample {
  Volume early_frame;  // normalized to [-1, 1]
  Volume last_frame;   // normalized to [-1, 1]
  LabelMap labels;
  TemporalInput temporal;
  std::string study_id;
  int frame_index = 0;
};

struct NormalizeResult {
  Volume volume;
  double vmin = 0.0;
  double vmax = 0.0;
  bool constant = false;  // degenerate input mapped to all zeros
};

/// Affine map x' = 2(x - min)/(max - min) - 1. A constant volume maps to all
/// zeros with the `constant` flag raised. NaN input -> error.
NormalizeResult normalize_frame(const Volume& v);

/// Indices of frames (excluding the last) whose LVBP activity exceeds 10% of
/// the TAC maximum. All-zero TAC yields an empty list.
std::vector<int> select_eligible_frames(const std::vector<double>& lvbp_tac);

/// Smallest index with lvbp >= rvbp. Throws "no EQ frame" if none exists.
int find_eq_frame(const std::vector<double>& rvbp_tac,
                  const std::vector<double>& lvbp_tac);

/// Single-channel anatomy encoding: {bg, RVBP, LVBP, myo} -> {-1, -1/3,
/// +1/3, +1}.
Volume encode_anatomy(const LabelMap& labels);

/// Geometric augmentation parameters, drawn once per sample per step.
struct AugmentParams {
  std::array<int, 3> patch = {0, 0, 0};
  std::array<int, 3> crop_center = {0, 0, 0};  // jittered, pre-translation
  std::array<int, 3> translation = {0, 0, 0};
  double theta_rad = 0.0;                      // xy-plane rotation
  std::array<int, 3> mask_shift = {0, 0, 0};   // label map only
};

/// Draws crop jitter, rotation angle, translation, and mask jitter in a
/// fixed order. The crop center is the centroid of the inferior (-y) half
/// of the myocardium mask plus integer jitter in [-4, 4]^3.
AugmentParams draw_augment_params(const TrainingSample& s,
                                  const TrainConfig& cfg,
                                  std::mt19937_64& rng);

/// Applies one geometric transform to both frames and the label map: crop
/// around the (translated, bounds-clamped) center with xy rotation about the
/// patch center. Frames resample trilinearly, labels nearest-neighbor; the
/// label sampling point is additionally displaced by mask_shift.
TrainingSample apply_augment(const TrainingSample& s, const AugmentParams& p);

/// -ln(d_real) - ln(1 - d_fake) with probabilities clamped at 1e-7.
/// Values outside [0, 1] are rejected.
double adv_loss(double d_real, double d_fake);

/// Mean squared voxel difference. Shapes must match.
double mse_loss(const Volume& pred, const Volume& target);

struct EpochStats {
  int epoch = 0;       // 1-based
  double d_loss = 0.0;
  double g_adv = 0.0;
  double g_mse = 0.0;
};

struct TrainResult {
  Generator generator;
  std::vector<EpochStats> history;
};

/// Alternating adversarial training over the sample list, batch size 1.
/// Per step the discriminator minimizes -ln D(real) - ln(1 - D(fake)) on a
/// detached fake, then the generator minimizes the non-saturating
/// -ln D(fake) (if use_adv) plus the voxel MSE (if use_mse). A non-finite
/// loss aborts with a diagnostic.
TrainResult train(const std::vector<TrainingSample>& dataset,
                  const TrainConfig& cfg);

/// Loss history as CSV with header epoch,d_loss,g_adv,g_mse.
void write_loss_history(const std::string& path,
                        const std::vector<EpochStats>& history);

}  // namespace dynpet
