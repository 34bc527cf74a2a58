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

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "dynpet/io.hpp"
#include "dynpet/pipeline.hpp"
#include "dynpet/training.hpp"

namespace fs = std::filesystem;
using namespace dynpet;

namespace {

const fs::path kWork = fs::temp_directory_path() / "dynpet_e2e";

std::string cli() { return DYNPET_CLI_PATH; }

/// Runs a shell command and returns its exit status (-1 if it did not exit
/// normally). stdout is discarded; stderr stays visible for diagnosis.
int run(const std::string& cmd, bool quiet_stderr = false) {
  const std::string full =
      cmd + " >/dev/null" + (quiet_stderr ? " 2>/dev/null" : "");
  const int rc = std::system(full.c_str());
  if (rc == -1) return -1;
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string file_bytes(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE_MESSAGE(is.good(), "cannot open " << path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
  REQUIRE(os.good());
}

std::string q(const fs::path& p) { return p.string(); }

/// Loads a single-row CSV report into header-keyed cells.
std::vector<std::pair<std::string, std::string>> read_report(
    const fs::path& path) {
  std::vector<std::string> header;
  const auto rows = read_csv(path.string(), header);
  REQUIRE(rows.size() == 1);
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < header.size(); ++i)
    out.emplace_back(header[i], rows[0][i]);
  return out;
}

std::string cell(const std::vector<std::pair<std::string, std::string>>& row,
                 const std::string& key) {
  for (const auto& [k, v] : row)
    if (k == key) return v;
  FAIL("missing column " << key);
  return {};
}

std::string field_file(const char* prefix, int frame) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%02d.tgf", prefix, frame);
  return buf;
}

}  // namespace

TEST_CASE("invalid invocations fail with a nonzero exit") {
  CHECK(run(cli() + " --help", true) == 0);
  CHECK(run(cli(), true) != 0);
  CHECK(run(cli() + " bogus_subcommand", true) != 0);
  // Missing required option.
  CHECK(run(cli() + " quantify --study somewhere", true) != 0);
  // Nonexistent study directory.
  CHECK(run(cli() + " quantify --study /no/such/dir --out /dev/null", true) !=
        0);
}

TEST_CASE("mistyped config keys are rejected") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);
  const fs::path cfg = kWork / "typo.cfg";
  write_text(cfg, "kinetics.grid_m = 17\n");
  CHECK(run(cli() + " simulate --config " + q(cfg) + " --out " +
                q(kWork / "x") + " --n 1",
            true) != 0);

  const fs::path broken = kWork / "broken.cfg";
  write_text(broken, "not a key value line\n");
  CHECK(run(cli() + " simulate --config " + q(broken) + " --out " +
                q(kWork / "x") + " --n 1",
            true) != 0);
}

TEST_CASE("pipeline stages compose end to end") {
  fs::remove_all(kWork);
  fs::create_directories(kWork);

  // Clean, noise-free world so quantification accuracy is attributable.
  const fs::path cfg = kWork / "sim.cfg";
  write_text(cfg,
             "[phantom]\n"
             "nx = 16\n"
             "ny = 16\n"
             "nz = 8\n"
             "psf_sigma_vox = 0\n"
             "noise_level = 0\n"
             "[sim]\n"
             "vary = false\n");

  const fs::path sim = kWork / "sim";
  REQUIRE(run(cli() + " simulate --config " + q(cfg) + " --out " + q(sim) +
              " --n 1 --seed 3") == 0);
  const fs::path study = sim / "study_000";
  REQUIRE(fs::exists(study / "frames.dpv"));
  REQUIRE(fs::exists(study / "labels.dpv"));
  REQUIRE(fs::exists(study / "tacs.csv"));
  REQUIRE(fs::exists(study / "truth.csv"));

  // Re-simulation with the same seed is byte-for-byte identical.
  const fs::path sim2 = kWork / "sim_rerun";
  REQUIRE(run(cli() + " simulate --config " + q(cfg) + " --out " + q(sim2) +
              " --n 1 --seed 3") == 0);
  CHECK(file_bytes(study / "frames.dpv") ==
        file_bytes(sim2 / "study_000" / "frames.dpv"));

  const StudyData truth = load_study(study.string());
  const std::vector<int> eligible = select_eligible_frames(truth.lvbp_tac);
  REQUIRE(eligible.size() >= 5);

  // Quantification on the motion-free study recovers the simulated truth.
  const fs::path rep0 = kWork / "quant_clean.csv";
  REQUIRE(run(cli() + " quantify --study " + q(study) + " --out " + q(rep0)) ==
          0);
  {
    const auto row = read_report(rep0);
    CHECK(cell(row, "study") == "study_000");
    CHECK(cell(row, "converged") == "1");
    CHECK(std::abs(std::stod(cell(row, "pct_dk1"))) < 1.0);
    CHECK(std::abs(std::stod(cell(row, "pct_dmbf"))) < 3.0);
  }

  // Zero-magnitude corruption is the identity with all-zero truth fields.
  const fs::path corr0 = kWork / "corr0" / "study_000";
  REQUIRE(run(cli() + " corrupt --study " + q(study) + " --magnitude 0" +
              " --out " + q(corr0) + " --seed 5") == 0);
  CHECK(file_bytes(study / "frames.dpv") == file_bytes(corr0 / "frames.dpv"));
  for (int f : eligible) {
    const DisplacementField zf =
        read_field((corr0 / field_file("true_field", f)).string());
    for (double d : zf.d) CHECK(d == 0.0);
  }
  const fs::path rep1 = kWork / "quant_zero.csv";
  REQUIRE(run(cli() + " quantify --study " + q(corr0) + " --out " + q(rep1)) ==
          0);
  CHECK(file_bytes(rep0) == file_bytes(rep1));

  // Real corruption: deterministic per seed, frames actually move.
  const fs::path corr = kWork / "corr" / "study_000";
  const fs::path corrb = kWork / "corr_rerun" / "study_000";
  const std::string corrupt_args =
      " corrupt --study " + q(study) + " --magnitude 1 --scale 1 --seed 5";
  REQUIRE(run(cli() + corrupt_args + " --out " + q(corr)) == 0);
  REQUIRE(run(cli() + corrupt_args + " --out " + q(corrb)) == 0);
  CHECK(file_bytes(corr / "frames.dpv") == file_bytes(corrb / "frames.dpv"));
  CHECK(file_bytes(corr / field_file("true_field", eligible[0])) ==
        file_bytes(corrb / field_file("true_field", eligible[0])));
  CHECK(file_bytes(study / "frames.dpv") != file_bytes(corr / "frames.dpv"));

  // Registration writes one correction field per eligible frame and a
  // corrected series on the original grid.
  const fs::path regcfg = kWork / "reg.cfg";
  write_text(regcfg, "motion.iters = 30\n");
  const fs::path reg = kWork / "reg" / "study_000";
  REQUIRE(run(cli() + " register --moving " + q(corr) + " --config " +
              q(regcfg) + " --out " + q(reg)) == 0);
  for (int f : eligible)
    CHECK(fs::exists(reg / field_file("est_field", f)));
  {
    const DynamicSeries corrected =
        read_series((reg / "frames.dpv").string());
    CHECK(corrected.nx == truth.series.nx);
    CHECK(corrected.nframes() == truth.series.nframes());
    const DisplacementField est = read_field(
        (reg / field_file("est_field", eligible[0])).string());
    const DisplacementField tru = read_field(
        (corr / field_file("true_field", eligible[0])).string());
    CHECK(est.gx == tru.gx);
    CHECK(est.gy == tru.gy);
    CHECK(est.gz == tru.gz);
  }

  // The evaluation report aggregates the motion scores.
  const fs::path evrep = kWork / "moteval.csv";
  REQUIRE(run(cli() + " evaluate --pred " + q(kWork / "reg") + " --truth " +
              q(kWork / "corr") + " --out " + q(evrep)) == 0);
  {
    std::vector<std::string> header;
    const auto rows = read_csv(evrep.string(), header);
    const std::vector<std::string> want = {
        "stratum", "metric", "n",       "mean_conv", "sd_conv",
        "mean_base", "sd_base", "t", "p"};
    CHECK(header == want);
    bool found_all = false;
    for (const auto& r : rows)
      if (r[0] == "all" && r[1] == "motion_mm") {
        found_all = true;
        CHECK(std::stoi(r[2]) == static_cast<int>(eligible.size()));
        CHECK(std::stod(r[5]) > 0.0);  // uncorrected baseline is nonzero
      }
    CHECK(found_all);
  }

  // Training data with per-study kinetic variation. Each stage takes its
  // own config: unconsumed keys are a hard error by design.
  const fs::path datacfg = kWork / "data.cfg";
  write_text(datacfg,
             "[phantom]\n"
             "nx = 16\n"
             "ny = 16\n"
             "nz = 8\n"
             "psf_sigma_vox = 0\n"
             "noise_level = 0\n");
  const fs::path traincfg = kWork / "train.cfg";
  write_text(traincfg,
             "[train]\n"
             "epochs = 1\n"
             "patch_x = 8\n"
             "patch_y = 8\n"
             "patch_z = 8\n"
             "levels = 2\n"
             "base_channels = 2\n"
             "lstm_hidden = 4\n");
  const fs::path data = kWork / "data";
  REQUIRE(run(cli() + " simulate --config " + q(datacfg) + " --out " +
              q(data) + " --n 2 --seed 7") == 0);

  const fs::path model = kWork / "model";
  REQUIRE(run(cli() + " train --config " + q(traincfg) + " --data " + q(data) +
              " --out " + q(model) + " --seed 11") == 0);
  REQUIRE(fs::exists(model / "generator.tgw"));
  {
    std::vector<std::string> header;
    const auto rows = read_csv((model / "loss.csv").string(), header);
    CHECK(header == std::vector<std::string>{"epoch", "d_loss", "g_adv",
                                             "g_mse"});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0][0] == "1");
  }

  // Conversion produces a same-shape series and reruns byte-identically.
  const fs::path pred = kWork / "pred" / "study_000";
  REQUIRE(run(cli() + " convert --ckpt " + q(model / "generator.tgw") +
              " --study " + q(data / "study_000") + " --out " + q(pred)) == 0);
  {
    const DynamicSeries conv = read_series((pred / "converted.dpv").string());
    const StudyData src = load_study((data / "study_000").string());
    CHECK(conv.nx == src.series.nx);
    CHECK(conv.nframes() == src.series.nframes());
    for (double v : conv.frames[select_eligible_frames(src.lvbp_tac)[0]].v)
      CHECK(std::abs(v) <= 1.0);
  }
  const fs::path pred2 = kWork / "pred_rerun" / "study_000";
  REQUIRE(run(cli() + " convert --ckpt " + q(model / "generator.tgw") +
              " --study " + q(data / "study_000") + " --out " + q(pred2)) ==
          0);
  CHECK(file_bytes(pred / "converted.dpv") ==
        file_bytes(pred2 / "converted.dpv"));

  // Image-quality evaluation over the converted frames.
  const fs::path imrep = kWork / "imeval.csv";
  REQUIRE(run(cli() + " evaluate --pred " + q(kWork / "pred") + " --truth " +
              q(data) + " --out " + q(imrep)) == 0);
  {
    std::vector<std::string> header;
    const auto rows = read_csv(imrep.string(), header);
    bool found_ssim = false;
    for (const auto& r : rows)
      if (r[0] == "all" && r[1] == "ssim") {
        found_ssim = true;
        CHECK(std::stod(r[3]) > 0.0);
        CHECK(std::stod(r[3]) <= 1.0);
      }
    CHECK(found_ssim);
  }

  fs::remove_all(kWork);
}
