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

#include "dynpet/kinetics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dynpet/phantom.hpp"

namespace dynpet {

std::vector<double> extract_tac(const DynamicSeries& series,
                                const LabelMap& labels, std::uint8_t roi) {
  if (series.nx != labels.nx || series.ny != labels.ny ||
      series.nz != labels.nz)
    throw std::invalid_argument("extract_tac: label grid mismatch");
  std::vector<std::size_t> voxels;
  for (std::size_t i = 0; i < labels.v.size(); ++i)
    if (labels.v[i] == roi) voxels.push_back(i);
  if (voxels.empty())
    throw std::invalid_argument("extract_tac: empty ROI for label " +
                                std::to_string(roi));
  std::vector<double> tac;
  tac.reserve(series.frames.size());
  for (const Volume& f : series.frames) {
    double s = 0.0;
    for (std::size_t i : voxels) s += f.v[i];
    tac.push_back(s / static_cast<double>(voxels.size()));
  }
  return tac;
}

LabelMap erode_labels(const LabelMap& labels, int radius) {
  if (radius < 0) throw std::invalid_argument("erode_labels: negative radius");
  LabelMap out(labels.nx, labels.ny, labels.nz);
  if (radius == 0) {
    out.v = labels.v;
    return out;
  }
  for (int x = 0; x < labels.nx; ++x)
    for (int y = 0; y < labels.ny; ++y)
      for (int z = 0; z < labels.nz; ++z) {
        const std::uint8_t lab = labels.at(x, y, z);
        if (lab == kBackground) continue;
        bool keep = x - radius >= 0 && x + radius < labels.nx &&
                    y - radius >= 0 && y + radius < labels.ny &&
                    z - radius >= 0 && z + radius < labels.nz;
        for (int dx = -radius; keep && dx <= radius; ++dx)
          for (int dy = -radius; keep && dy <= radius; ++dy)
            for (int dz = -radius; keep && dz <= radius; ++dz)
              if (labels.at(x + dx, y + dy, z + dz) != lab) keep = false;
        if (keep) out.at(x, y, z) = lab;
      }
  return out;
}

// ---------------------------------------------------------------------------
// 1-tissue compartment fit

namespace {

constexpr double kFitDtS = 0.1;

// Rebuilds the input function on a fine uniform grid: linear between the
// anchors (0,0) and each frame midpoint, constant after the last midpoint.
std::vector<double> rebuild_input(const std::vector<double>& ca,
                                  const std::vector<FrameTiming>& timing) {
  const double end_s = timing.back().start_s + timing.back().duration_s;
  const auto n = static_cast<std::size_t>(std::llround(end_s / kFitDtS)) + 1;
  std::vector<double> anchor_t(1, 0.0), anchor_v(1, 0.0);
  for (std::size_t f = 0; f < ca.size(); ++f) {
    anchor_t.push_back(timing[f].mid_s());
    anchor_v.push_back(ca[f]);
  }
  std::vector<double> fine(n);
  std::size_t seg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * kFitDtS;
    while (seg + 1 < anchor_t.size() && anchor_t[seg + 1] < t) ++seg;
    if (seg + 1 >= anchor_t.size()) {
      fine[i] = anchor_v.back();
    } else {
      const double t0 = anchor_t[seg], t1 = anchor_t[seg + 1];
      const double u = (t - t0) / (t1 - t0);
      fine[i] = anchor_v[seg] + u * (anchor_v[seg + 1] - anchor_v[seg]);
    }
  }
  return fine;
}

struct FitProblem {
  std::vector<double> ca_fine;
  std::vector<FrameTiming> timing;
  std::vector<double> ct;
  std::vector<double> w;

  std::vector<double> model(double k1, double k2) const {
    return bin_frames(tissue_tac(ca_fine, kFitDtS / 60.0, k1, k2), kFitDtS,
                      timing);
  }

  double wss(double k1, double k2) const {
    const std::vector<double> m = model(k1, k2);
    double s = 0.0;
    for (std::size_t f = 0; f < ct.size(); ++f) {
      const double r = ct[f] - m[f];
      s += w[f] * r * r;
    }
    return s;
  }
};

}  // namespace

KineticParams fit_1tcm(const std::vector<double>& ca,
                       const std::vector<double>& ct,
                       const std::vector<FrameTiming>& timing,
                       const FitOptions& opt) {
  if (ca.size() != ct.size() || ca.size() != timing.size())
    throw std::invalid_argument("fit_1tcm: TAC / timing length mismatch");
  if (ca.empty()) throw std::invalid_argument("fit_1tcm: empty TACs");
  const double ca_peak = *std::max_element(ca.begin(), ca.end());
  if (!(ca_peak > 0.0))
    throw std::invalid_argument("fit_1tcm: input function is identically zero");

  KineticParams out;
  const double ct_peak = *std::max_element(ct.begin(), ct.end());
  if (!(ct_peak > 0.0)) return out;  // no tissue signal fits K1 = k2 = 0

  FitProblem prob;
  prob.ca_fine = rebuild_input(ca, timing);
  prob.timing = timing;
  prob.ct = ct;
  prob.w.reserve(ct.size());
  const double floor_val = 0.01 * ct_peak;
  for (std::size_t f = 0; f < ct.size(); ++f)
    prob.w.push_back(timing[f].duration_s / std::max(ct[f], floor_val));

  // Coarse grid search seeds the local refinement away from bad minima.
  double k1 = 0.0, k2 = 0.0, best = prob.wss(0.0, 0.0);
  for (int i = 0; i < opt.grid_n; ++i)
    for (int j = 0; j < opt.grid_n; ++j) {
      const double c1 = opt.k1_max * i / (opt.grid_n - 1);
      const double c2 = opt.k2_max * j / (opt.grid_n - 1);
      const double s = prob.wss(c1, c2);
      if (s < best) {
        best = s;
        k1 = c1;
        k2 = c2;
      }
    }

  // Levenberg-Marquardt on r_f = sqrt(w_f) (ct_f - model_f), 2 parameters.
  double lambda = 1e-3;
  bool converged = false;
  const std::size_t nf = ct.size();
  for (int iter = 0; iter < opt.max_iters; ++iter) {
    const std::vector<double> m0 = prob.model(k1, k2);
    // numeric Jacobian by central differences
    const double h1 = std::max(1e-6, 1e-5 * std::abs(k1));
    const double h2 = std::max(1e-6, 1e-5 * std::abs(k2));
    const std::vector<double> mp1 = prob.model(k1 + h1, k2);
    const std::vector<double> mm1 = prob.model(std::max(0.0, k1 - h1), k2);
    const std::vector<double> mp2 = prob.model(k1, k2 + h2);
    const std::vector<double> mm2 = prob.model(k1, std::max(0.0, k2 - h2));
    const double d1 = h1 + std::min(k1, h1);  // actual step if clamped at 0
    const double d2 = h2 + std::min(k2, h2);

    double jtj11 = 0.0, jtj12 = 0.0, jtj22 = 0.0, jtr1 = 0.0, jtr2 = 0.0;
    for (std::size_t f = 0; f < nf; ++f) {
      const double sw = std::sqrt(prob.w[f]);
      const double j1 = sw * (mp1[f] - mm1[f]) / d1;
      const double j2 = sw * (mp2[f] - mm2[f]) / d2;
      const double r = sw * (ct[f] - m0[f]);
      jtj11 += j1 * j1;
      jtj12 += j1 * j2;
      jtj22 += j2 * j2;
      jtr1 += j1 * r;
      jtr2 += j2 * r;
    }

    bool stepped = false;
    for (int attempt = 0; attempt < 8; ++attempt) {
      const double a11 = jtj11 * (1.0 + lambda);
      const double a22 = jtj22 * (1.0 + lambda);
      const double det = a11 * a22 - jtj12 * jtj12;
      if (std::abs(det) < 1e-30) break;
      const double dk1 = (a22 * jtr1 - jtj12 * jtr2) / det;
      const double dk2 = (a11 * jtr2 - jtj12 * jtr1) / det;
      const double c1 = std::max(0.0, k1 + dk1);
      const double c2 = std::max(0.0, k2 + dk2);
      const double s = prob.wss(c1, c2);
      if (s < best) {
        const double rel_gain = (best - s) / std::max(best, 1e-300);
        const double moved = std::abs(c1 - k1) + std::abs(c2 - k2);
        k1 = c1;
        k2 = c2;
        best = s;
        lambda = std::max(lambda / 3.0, 1e-12);
        stepped = true;
        if (rel_gain < 1e-12 || moved < 1e-12) converged = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!stepped) {
      converged = true;  // no admissible step improves the objective
      break;
    }
    if (converged) break;
  }

  out.k1 = k1;
  out.k2 = k2;
  out.wss = best;
  out.converged = converged;
  const double k1_cap = mbf_to_k1(20.0);
  out.mbf = k1 < k1_cap ? k1_to_mbf(k1) : 20.0;
  return out;
}

// ---------------------------------------------------------------------------
// flow-extraction relationship

double mbf_to_k1(double mbf, double a, double b) {
  if (mbf < 0.0) throw std::invalid_argument("mbf_to_k1: negative flow");
  if (mbf == 0.0) return 0.0;
  return mbf * (1.0 - a * std::exp(-b / mbf));
}

double k1_to_mbf(double k1, double a, double b) {
  if (k1 < 0.0) throw std::invalid_argument("k1_to_mbf: negative K1");
  if (k1 == 0.0) return 0.0;
  double lo = 1e-6, hi = 20.0;
  if (k1 > mbf_to_k1(hi, a, b))
    throw std::invalid_argument("k1_to_mbf: K1 above attainable range");
  while (hi - lo > 1e-9) {
    const double mid = 0.5 * (lo + hi);
    if (mbf_to_k1(mid, a, b) < k1)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double percent_difference(double value, double reference) {
  if (reference == 0.0)
    throw std::invalid_argument("percent_difference: zero reference");
  return 100.0 * (value - reference) / reference;
}

}  // namespace dynpet
