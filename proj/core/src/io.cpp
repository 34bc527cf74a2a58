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

#include "dynpet/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dynpet/serial.hpp"

namespace dynpet {

namespace {

constexpr std::uint32_t kMaxExtent = 1u << 14;  // sanity bound per axis

void check_extent(std::uint32_t e, const std::string& path) {
  if (e == 0 || e > kMaxExtent)
    throw std::runtime_error("implausible volume extent " + std::to_string(e) +
                             " in " + path);
}

}  // namespace

void write_series(const std::string& path, const DynamicSeries& s) {
  if (s.frames.empty())
    throw std::runtime_error("refusing to write empty series to " + path);
  if (s.timing.size() != s.frames.size())
    throw std::runtime_error("series timing/frame count mismatch for " + path);
  const std::size_t nvox =
      static_cast<std::size_t>(s.nx) * s.ny * s.nz;
  for (const Volume& f : s.frames)
    if (f.nx != s.nx || f.ny != s.ny || f.nz != s.nz || f.v.size() != nvox)
      throw std::runtime_error("series frame grid mismatch for " + path);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write("DPV1", 4);
  serial::write_u16(os, 1);
  serial::write_u32(os, static_cast<std::uint32_t>(s.nx));
  serial::write_u32(os, static_cast<std::uint32_t>(s.ny));
  serial::write_u32(os, static_cast<std::uint32_t>(s.nz));
  for (int ax = 0; ax < 3; ++ax)
    serial::write_f32(os, static_cast<float>(s.voxel_mm[ax]));
  serial::write_u32(os, static_cast<std::uint32_t>(s.frames.size()));
  for (const FrameTiming& t : s.timing) {
    serial::write_f32(os, static_cast<float>(t.start_s));
    serial::write_f32(os, static_cast<float>(t.duration_s));
  }
  for (const Volume& f : s.frames)
    for (double v : f.v) serial::write_f32(os, static_cast<float>(v));
  if (!os) throw std::runtime_error("write failed for " + path);
}

DynamicSeries read_series(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[4];
  serial::read_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, "DPV1", 4) != 0)
    throw std::runtime_error(path + " is not a DPV1 volume");
  const std::uint16_t version = serial::read_u16(is, "version");
  if (version != 1)
    throw std::runtime_error("unsupported DPV1 version " +
                             std::to_string(version) + " in " + path);
  DynamicSeries s;
  const std::uint32_t nx = serial::read_u32(is, "nx");
  const std::uint32_t ny = serial::read_u32(is, "ny");
  const std::uint32_t nz = serial::read_u32(is, "nz");
  check_extent(nx, path);
  check_extent(ny, path);
  check_extent(nz, path);
  s.nx = static_cast<int>(nx);
  s.ny = static_cast<int>(ny);
  s.nz = static_cast<int>(nz);
  for (int ax = 0; ax < 3; ++ax)
    s.voxel_mm[ax] = serial::read_f32(is, "voxel size");
  const std::uint32_t nframes = serial::read_u32(is, "frame count");
  if (nframes == 0 || nframes > 4096)
    throw std::runtime_error("implausible frame count in " + path);
  s.timing.resize(nframes);
  for (std::uint32_t f = 0; f < nframes; ++f) {
    s.timing[f].start_s = serial::read_f32(is, "frame start");
    s.timing[f].duration_s = serial::read_f32(is, "frame duration");
  }
  s.frames.reserve(nframes);
  for (std::uint32_t f = 0; f < nframes; ++f) {
    Volume vol(s.nx, s.ny, s.nz);
    for (double& v : vol.v) v = serial::read_f32(is, "voxel data");
    s.frames.push_back(std::move(vol));
  }
  return s;
}

void write_labels(const std::string& path, const LabelMap& m,
                  const double voxel_mm[3]) {
  DynamicSeries s;
  s.nx = m.nx;
  s.ny = m.ny;
  s.nz = m.nz;
  for (int ax = 0; ax < 3; ++ax) s.voxel_mm[ax] = voxel_mm[ax];
  s.timing.push_back({0.0, 0.0});
  Volume vol(m.nx, m.ny, m.nz);
  for (std::size_t i = 0; i < m.v.size(); ++i) vol.v[i] = m.v[i];
  s.frames.push_back(std::move(vol));
  write_series(path, s);
}

LabelMap read_labels(const std::string& path) {
  DynamicSeries s = read_series(path);
  if (s.frames.size() != 1)
    throw std::runtime_error("label map " + path + " must have one frame, has " +
                             std::to_string(s.frames.size()));
  LabelMap m(s.nx, s.ny, s.nz);
  for (std::size_t i = 0; i < m.v.size(); ++i) {
    const long long lab = std::llround(s.frames[0].v[i]);
    if (lab < 0 || lab > 3 ||
        std::abs(s.frames[0].v[i] - static_cast<double>(lab)) > 1e-3)
      throw std::runtime_error("label map " + path +
                               " contains a non-label value");
    m.v[i] = static_cast<std::uint8_t>(lab);
  }
  return m;
}

void write_field(const std::string& path, const DisplacementField& f) {
  if (f.d.size() != static_cast<std::size_t>(f.npoints()) * 3)
    throw std::runtime_error("displacement field size mismatch for " + path);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write("TGF1", 4);
  serial::write_u32(os, static_cast<std::uint32_t>(f.gx));
  serial::write_u32(os, static_cast<std::uint32_t>(f.gy));
  serial::write_u32(os, static_cast<std::uint32_t>(f.gz));
  serial::write_f32(os, static_cast<float>(f.spacing));
  for (double v : f.d) serial::write_f32(os, static_cast<float>(v));
  if (!os) throw std::runtime_error("write failed for " + path);
}

DisplacementField read_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[4];
  serial::read_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, "TGF1", 4) != 0)
    throw std::runtime_error(path + " is not a TGF1 displacement field");
  const std::uint32_t gx = serial::read_u32(is, "gx");
  const std::uint32_t gy = serial::read_u32(is, "gy");
  const std::uint32_t gz = serial::read_u32(is, "gz");
  check_extent(gx, path);
  check_extent(gy, path);
  check_extent(gz, path);
  const float spacing = serial::read_f32(is, "spacing");
  if (!(spacing > 0.0f))
    throw std::runtime_error("nonpositive control spacing in " + path);
  DisplacementField f(static_cast<int>(gx), static_cast<int>(gy),
                      static_cast<int>(gz), spacing);
  for (double& v : f.d) v = serial::read_f32(is, "displacements");
  return f;
}

void write_csv(const std::string& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream os(path, std::ios::binary);  // binary: stable newlines
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) os << ',';
    os << header[i];
  }
  os << '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw std::runtime_error("csv row width mismatch for " + path);
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) os << ',';
      os << row[i];
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed for " + path);
}

std::vector<std::vector<std::string>> read_csv(
    const std::string& path, std::vector<std::string>& header) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (first) {
      header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != header.size())
        throw std::runtime_error("csv row width mismatch in " + path);
      rows.push_back(std::move(cells));
    }
  }
  if (first) throw std::runtime_error("csv " + path + " is empty");
  return rows;
}

std::string format_double(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;  // %.17g always round-trips
}

}  // namespace dynpet
