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

#include "dynpet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>

#include "dynpet/common.hpp"
#include "dynpet/io.hpp"
#include "dynpet/metrics.hpp"

namespace dynpet {

namespace fs = std::filesystem;

namespace {

double parse_cell(const std::string& s, const std::string& what) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw std::runtime_error("bad numeric cell '" + s + "' in " + what);
  return v;
}

std::vector<int> eligible_of(const StudyData& s) {
  if (static_cast<int>(s.lvbp_tac.size()) != s.series.nframes())
    throw std::runtime_error("study " + s.id +
                             ": TAC length does not match frame count");
  return select_eligible_frames(s.lvbp_tac);
}

/// Aggregates one stratum/metric pair into a report row.
EvaluationRow make_row(const std::string& stratum, const std::string& metric,
                       const std::vector<double>& conv,
                       const std::vector<double>& base) {
  EvaluationRow row;
  row.stratum = stratum;
  row.metric = metric;
  row.n = static_cast<int>(conv.size());
  auto mean_sd = [](const std::vector<double>& v, double& m, double& sd) {
    m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    sd = v.size() > 1 ? std::sqrt(acc / static_cast<double>(v.size() - 1))
                      : 0.0;
  };
  mean_sd(conv, row.mean_conv, row.sd_conv);
  mean_sd(base, row.mean_base, row.sd_base);
  if (row.n >= 2) {
    const TTestResult tt = paired_t_test(conv, base);
    row.t = tt.t;
    row.p = tt.p;
  }
  return row;
}

/// Strata shared by image and motion reports; `eligible` marks whether the
/// eq+1 member is part of the scored set at all.
bool in_stratum(const std::string& stratum, int frame, int eq) {
  if (stratum == "eq_minus_1") return frame == eq - 1;
  if (stratum == "eq_plus_1") return frame == eq + 1;
  if (stratum == "pre_eq") return frame < eq;
  return true;  // "all"
}

const char* kStrata[4] = {"eq_minus_1", "eq_plus_1", "pre_eq", "all"};

}  // namespace

void save_study(const std::string& dir, const StudyData& s) {
  fs::create_directories(dir);
  write_series(dir + "/frames.dpv", s.series);
  write_labels(dir + "/labels.dpv", s.labels, s.series.voxel_mm);
  const int n = s.series.nframes();
  if (static_cast<int>(s.rvbp_tac.size()) != n ||
      static_cast<int>(s.lvbp_tac.size()) != n ||
      static_cast<int>(s.myo_tac.size()) != n)
    throw std::runtime_error("save_study: TAC lengths do not match frames");
  std::vector<std::vector<std::string>> rows;
  rows.reserve(n);
  for (int i = 0; i < n; ++i)
    rows.push_back({format_double(s.series.timing[i].start_s),
                    format_double(s.series.timing[i].duration_s),
                    format_double(s.rvbp_tac[i]), format_double(s.lvbp_tac[i]),
                    format_double(s.myo_tac[i])});
  write_csv(dir + "/tacs.csv", {"frame_start", "duration", "rvbp", "lvbp", "myo"},
            rows);
  write_csv(dir + "/truth.csv", {"k1", "k2", "mbf"},
            {{format_double(s.true_k1), format_double(s.true_k2),
              format_double(s.true_mbf)}});
}

StudyData load_study(const std::string& dir) {
  StudyData s;
  s.id = fs::path(dir).filename().string();
  if (s.id.empty()) s.id = fs::path(dir).parent_path().filename().string();
  s.series = read_series(dir + "/frames.dpv");
  s.labels = read_labels(dir + "/labels.dpv");
  if (s.labels.nx != s.series.nx || s.labels.ny != s.series.ny ||
      s.labels.nz != s.series.nz)
    throw std::runtime_error("study " + s.id +
                             ": label grid does not match frames");

  std::vector<std::string> header;
  const auto tac_rows = read_csv(dir + "/tacs.csv", header);
  if (header != std::vector<std::string>{"frame_start", "duration", "rvbp",
                                         "lvbp", "myo"})
    throw std::runtime_error("study " + s.id + ": unexpected tacs.csv header");
  if (static_cast<int>(tac_rows.size()) != s.series.nframes())
    throw std::runtime_error("study " + s.id +
                             ": tacs.csv row count does not match frames");
  for (const auto& row : tac_rows) {
    s.rvbp_tac.push_back(parse_cell(row[2], "tacs.csv"));
    s.lvbp_tac.push_back(parse_cell(row[3], "tacs.csv"));
    s.myo_tac.push_back(parse_cell(row[4], "tacs.csv"));
  }

  const auto truth_rows = read_csv(dir + "/truth.csv", header);
  if (header != std::vector<std::string>{"k1", "k2", "mbf"} ||
      truth_rows.size() != 1)
    throw std::runtime_error("study " + s.id + ": malformed truth.csv");
  s.true_k1 = parse_cell(truth_rows[0][0], "truth.csv");
  s.true_k2 = parse_cell(truth_rows[0][1], "truth.csv");
  s.true_mbf = parse_cell(truth_rows[0][2], "truth.csv");
  return s;
}

std::vector<std::string> list_studies(const std::string& root) {
  std::vector<std::string> out;
  if (!fs::is_directory(root))
    throw std::runtime_error("not a directory: " + root);
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && fs::exists(entry.path() / "frames.dpv"))
      out.push_back(entry.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

TemporalInput temporal_input_for(const StudyData& s, int frame_index) {
  TemporalInput t;
  t.rvbp = s.rvbp_tac;
  t.lvbp = s.lvbp_tac;
  t.frame_index = frame_index;
  t.num_frames = static_cast<int>(s.rvbp_tac.size());
  return t;
}

std::vector<TrainingSample> build_training_samples(const StudyData& s) {
  const std::vector<int> eligible = eligible_of(s);
  const Volume last =
      normalize_frame(s.series.frames.back()).volume;
  std::vector<TrainingSample> out;
  out.reserve(eligible.size());
  for (int i : eligible) {
    TrainingSample sample;
    sample.early_frame = normalize_frame(s.series.frames[i]).volume;
    sample.last_frame = last;
    sample.labels = s.labels;
    sample.temporal = temporal_input_for(s, i);
    sample.study_id = s.id;
    sample.frame_index = i;
    out.push_back(std::move(sample));
  }
  return out;
}

DynamicSeries convert_study(const StudyData& s, const Generator& g) {
  const std::vector<int> eligible = eligible_of(s);
  DynamicSeries out;
  out.nx = s.series.nx;
  out.ny = s.series.ny;
  out.nz = s.series.nz;
  for (int ax = 0; ax < 3; ++ax) out.voxel_mm[ax] = s.series.voxel_mm[ax];
  out.timing = s.series.timing;
  out.frames.reserve(s.series.frames.size());
  for (const Volume& f : s.series.frames)
    out.frames.push_back(normalize_frame(f).volume);

  const Volume anat = encode_anatomy(s.labels);
  for (int i : eligible) {
    std::vector<double> xin;
    xin.reserve(2 * out.frames[i].v.size());
    xin.insert(xin.end(), out.frames[i].v.begin(), out.frames[i].v.end());
    xin.insert(xin.end(), anat.v.begin(), anat.v.end());
    const Tensor x =
        Tensor::from({2, out.nx, out.ny, out.nz}, std::move(xin));
    const Tensor fake = g.forward(x, temporal_input_for(s, i));
    out.frames[i].v.assign(fake.data().begin(), fake.data().end());
  }
  return out;
}

CorruptResult corrupt_study(const StudyData& s, double magnitude,
                            double scale, double spacing,
                            std::uint64_t seed) {
  if (magnitude < 0.0 || scale < 0.0)
    throw std::invalid_argument("corrupt_study: negative magnitude or scale");
  CorruptResult r;
  r.series = s.series;
  r.moved = eligible_of(s);
  for (int i : r.moved) {
    if (magnitude == 0.0 || scale == 0.0) {
      r.fields.push_back(
          make_field(s.series.nx, s.series.ny, s.series.nz, spacing));
      continue;  // frames stay bit-identical
    }
    DisplacementField f = scale_field(
        simulate_motion(s.series.nx, s.series.ny, s.series.nz, spacing,
                        magnitude, mix_seed(seed, static_cast<std::uint64_t>(i))),
        scale);
    r.series.frames[i] = warp(s.series.frames[i], f);
    r.fields.push_back(std::move(f));
  }
  return r;
}

RegisterStudyResult register_study(const StudyData& corrupted,
                                   const DynamicSeries* converted,
                                   int fixed_frame,
                                   const RegisterOptions& opt) {
  const int n = corrupted.series.nframes();
  if (fixed_frame < 0) fixed_frame = n - 1;
  if (fixed_frame >= n)
    throw std::invalid_argument("register_study: fixed frame out of range");
  if (converted &&
      (converted->nx != corrupted.series.nx ||
       converted->ny != corrupted.series.ny ||
       converted->nz != corrupted.series.nz ||
       converted->nframes() != n))
    throw std::invalid_argument(
        "register_study: converted series grid mismatch");

  RegisterStudyResult r;
  r.corrected = corrupted.series;
  r.moved = eligible_of(corrupted);

  const Volume fixed_vol =
      converted ? converted->frames[fixed_frame]
                : normalize_frame(corrupted.series.frames[fixed_frame]).volume;
  for (int i : r.moved) {
    const Volume moving =
        converted ? converted->frames[i]
                  : normalize_frame(corrupted.series.frames[i]).volume;
    RegisterResult reg = register_volumes(moving, fixed_vol, opt);
    r.corrected.frames[i] = warp(corrupted.series.frames[i], reg.field);
    r.fields.push_back(std::move(reg.field));
  }
  return r;
}

StudyQuantification quantify_study(const DynamicSeries& series,
                                   const LabelMap& labels,
                                   const FitOptions& opt) {
  StudyQuantification q;
  for (int radius = 2; radius >= 0; --radius) {
    const LabelMap eroded = erode_labels(labels, radius);
    bool has_lv = false, has_myo = false;
    for (std::uint8_t v : eroded.v) {
      has_lv = has_lv || v == kLvBlood;
      has_myo = has_myo || v == kMyocardium;
    }
    if (!has_lv || !has_myo) continue;
    q.erode_radius = radius;
    q.input_tac = extract_tac(series, eroded, kLvBlood);
    q.tissue_tac = extract_tac(series, eroded, kMyocardium);
    q.params = fit_1tcm(q.input_tac, q.tissue_tac, series.timing, opt);
    return q;
  }
  throw std::runtime_error(
      "quantify_study: LV or myocardium ROI empty even without erosion");
}

std::vector<FrameScore> score_study(const StudyData& truth,
                                    const DynamicSeries& converted) {
  if (converted.nframes() != truth.series.nframes() ||
      converted.nx != truth.series.nx || converted.ny != truth.series.ny ||
      converted.nz != truth.series.nz)
    throw std::invalid_argument("score_study: series grids differ");
  const std::vector<int> eligible = eligible_of(truth);
  const int eq = find_eq_frame(truth.rvbp_tac, truth.lvbp_tac);
  const Volume ref = normalize_frame(truth.series.frames.back()).volume;

  std::vector<FrameScore> out;
  out.reserve(eligible.size());
  for (int i : eligible) {
    const Volume base = normalize_frame(truth.series.frames[i]).volume;
    const Volume& conv = converted.frames[i];
    FrameScore fs;
    fs.study_id = truth.id;
    fs.frame_index = i;
    fs.eq = eq;
    fs.conv_mse = mse(conv, ref);
    fs.conv_nmae = nmae(conv, ref);
    fs.conv_psnr = psnr(conv, ref);
    fs.conv_ssim = ssim(conv, ref);
    fs.base_mse = mse(base, ref);
    fs.base_nmae = nmae(base, ref);
    fs.base_psnr = psnr(base, ref);
    fs.base_ssim = ssim(base, ref);
    out.push_back(std::move(fs));
  }
  return out;
}

double correction_error_mm(const DisplacementField& est_correction,
                           const DisplacementField& true_motion,
                           const double voxel_mm[3]) {
  return motion_error_mm(scale_field(est_correction, -1.0), true_motion,
                         voxel_mm);
}

std::vector<EvaluationRow> stratify_scores(
    const std::vector<FrameScore>& scores) {
  std::vector<EvaluationRow> rows;
  const char* metrics[4] = {"mse", "nmae", "psnr", "ssim"};
  for (const char* stratum : kStrata)
    for (int m = 0; m < 4; ++m) {
      std::vector<double> conv, base;
      for (const FrameScore& fs : scores) {
        if (!in_stratum(stratum, fs.frame_index, fs.eq)) continue;
        const double c[4] = {fs.conv_mse, fs.conv_nmae, fs.conv_psnr,
                             fs.conv_ssim};
        const double b[4] = {fs.base_mse, fs.base_nmae, fs.base_psnr,
                             fs.base_ssim};
        conv.push_back(c[m]);
        base.push_back(b[m]);
      }
      if (!conv.empty()) rows.push_back(make_row(stratum, metrics[m], conv, base));
    }
  return rows;
}

std::vector<EvaluationRow> stratify_motion(
    const std::vector<MotionScore>& scores) {
  std::vector<EvaluationRow> rows;
  for (const char* stratum : kStrata) {
    std::vector<double> conv, base;
    for (const MotionScore& ms : scores) {
      if (!in_stratum(stratum, ms.frame_index, ms.eq)) continue;
      conv.push_back(ms.corrected_mm);
      base.push_back(ms.uncorrected_mm);
    }
    if (!conv.empty()) rows.push_back(make_row(stratum, "motion_mm", conv, base));
  }
  return rows;
}

void write_evaluation_csv(const std::string& path,
                          const std::vector<EvaluationRow>& rows) {
  std::vector<std::vector<std::string>> cells;
  cells.reserve(rows.size());
  for (const EvaluationRow& r : rows)
    cells.push_back({r.stratum, r.metric, std::to_string(r.n),
                     format_double(r.mean_conv), format_double(r.sd_conv),
                     format_double(r.mean_base), format_double(r.sd_base),
                     format_double(r.t), format_double(r.p)});
  write_csv(path,
            {"stratum", "metric", "n", "mean_conv", "sd_conv", "mean_base",
             "sd_base", "t", "p"},
            cells);
}

}  // namespace dynpet
