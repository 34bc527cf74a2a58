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

#include <cstdint>
#include <string>
#include <vector>

#include "dynpet/data.hpp"
#include "dynpet/kinetics.hpp"
#include "dynpet/model.hpp"
#include "dynpet/motion.hpp"
#include "dynpet/training.hpp"

namespace dynpet {

/**
 * One study on disk is a directory holding
 *   frames.dpv   dynamic series
 *   labels.dpv   segmentation (single-frame volume of labels 0..3)
 *   tacs.csv     frame_start,duration,rvbp,lvbp,myo (motion-free curves)
 *   truth.csv    k1,k2,mbf (simulation ground truth)
 */
struct StudyData {
  std::string id;
  DynamicSeries series;
  LabelMap labels;
  std::vector<double> rvbp_tac, lvbp_tac, myo_tac;
  double true_k1 = 0.0, true_k2 = 0.0, true_mbf = 0.0;
};

void save_study(const std::string& dir, const StudyData& s);
StudyData load_study(const std::string& dir);

/// Sorted names of subdirectories of `root` that contain frames.dpv.
std::vector<std::string> list_studies(const std::string& root);

/// Temporal conditioning for converting frame `frame_index` of this study.
TemporalInput temporal_input_for(const StudyData& s, int frame_index);

/// One TrainingSample per eligible early frame; frames normalized to
/// [-1, 1] individually, the last frame serving as the shared target.
std::vector<TrainingSample> build_training_samples(const StudyData& s);

/// Normalized copy of the study where every eligible early frame is
/// replaced by the generator's late-frame prediction. Non-eligible frames
/// pass through normalization untouched. Extents must suit the generator.
DynamicSeries convert_study(const StudyData& s, const Generator& g);

struct CorruptResult {
  DynamicSeries series;                   // frames after simulated motion
  std::vector<int> moved;                 // frame indices that moved
  std::vector<DisplacementField> fields;  // true motion, aligned with moved
};

/// Applies an independent random B-spline motion (magnitude in voxels,
/// then multiplied by `scale`) to every eligible early frame. The last
/// frame and non-eligible frames stay untouched. magnitude = 0 leaves all
/// frames bit-identical with all-zero truth fields.
CorruptResult corrupt_study(const StudyData& s, double magnitude,
                            double scale, double spacing, std::uint64_t seed);

struct RegisterStudyResult {
  DynamicSeries corrected;                // raw frames resliced by estimates
  std::vector<int> moved;                 // registered frame indices
  std::vector<DisplacementField> fields;  // estimated correction fields
};

/**
 * Registers every eligible early frame of `corrupted` onto the reference
 * frame (default: the last). When `converted` is non-null its frames stand
 * in for the raw ones during optimization — the late-frame appearance makes
 * the pair same-contrast — and the estimated field is then applied to the
 * raw corrupted frame.
 */
RegisterStudyResult register_study(const StudyData& corrupted,
                                   const DynamicSeries* converted,
                                   int fixed_frame = -1,
                                   const RegisterOptions& opt = {});

struct StudyQuantification {
  KineticParams params;
  std::vector<double> input_tac;   // LV blood pool
  std::vector<double> tissue_tac;  // myocardium
  int erode_radius = 0;            // radius actually used
};

/// TAC extraction (labels eroded radius 2, falling back to 1 then 0 until
/// both ROIs survive) followed by the compartment fit.
StudyQuantification quantify_study(const DynamicSeries& series,
                                   const LabelMap& labels,
                                   const FitOptions& opt = {});

/// Per-frame image scores of a converted series against the study's own
/// normalized last frame, next to the unconverted baseline (the normalized
/// early frame scored against the same reference).
struct FrameScore {
  std::string study_id;
  int frame_index = 0;
  int eq = 0;  // study's EQ frame index
  double conv_mse = 0, conv_nmae = 0, conv_psnr = 0, conv_ssim = 0;
  double base_mse = 0, base_nmae = 0, base_psnr = 0, base_ssim = 0;
};

std::vector<FrameScore> score_study(const StudyData& truth,
                                    const DynamicSeries& converted);

/// Motion accuracy of one corrected frame: the estimated correction field
/// against the true motion, and the uncorrected (zero-field) baseline.
struct MotionScore {
  std::string study_id;
  int frame_index = 0;
  int eq = 0;
  double corrected_mm = 0;
  double uncorrected_mm = 0;
};

/// Mean absolute control-point error of an estimated correction against
/// the true motion field. The correction acts in the opposite direction of
/// the corruption, so the estimate is negated before comparison (exact for
/// translations, first-order for general smooth fields).
double correction_error_mm(const DisplacementField& est_correction,
                           const DisplacementField& true_motion,
                           const double voxel_mm[3]);

/// One aggregate row of the evaluation report: a frame stratum and metric
/// with paired statistics of converted (or corrected) versus baseline.
/// Strata: eq_minus_1, eq_plus_1, pre_eq, all. For n == 1 the test is
/// undefined and reported as t = 0, p = 1.
struct EvaluationRow {
  std::string stratum;
  std::string metric;
  int n = 0;
  double mean_conv = 0, sd_conv = 0;
  double mean_base = 0, sd_base = 0;
  double t = 0, p = 1;
};

std::vector<EvaluationRow> stratify_scores(
    const std::vector<FrameScore>& scores);
std::vector<EvaluationRow> stratify_motion(
    const std::vector<MotionScore>& scores);

/// CSV with header stratum,metric,n,mean_conv,sd_conv,mean_base,sd_base,t,p.
void write_evaluation_csv(const std::string& path,
                          const std::vector<EvaluationRow>& rows);

}  // namespace dynpet
