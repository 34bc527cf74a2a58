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

#include <string>
#include <vector>

#include "dynpet/data.hpp"

namespace dynpet {

/**
 * Dynamic volume container, format "DPV1":
 *
 *   magic    4 bytes "DPV1"
 *   version  u16 LE, currently 1
 *   dims     3 * u32 LE (nx, ny, nz)
 *   voxel    3 * f32 LE voxel size in mm
 *   nframes  u32 LE
 *   timing   per frame: f32 LE start seconds, f32 LE duration seconds
 *   voxels   per frame: nx*ny*nz f32 LE values, x-major, z fastest
 */
void write_series(const std::string& path, const DynamicSeries& s);
DynamicSeries read_series(const std::string& path);

/// Label maps travel as a single-frame DPV1 volume whose voxel values are
/// the integer labels; reading validates that every value is one of 0..3.
void write_labels(const std::string& path, const LabelMap& m,
                  const double voxel_mm[3]);
LabelMap read_labels(const std::string& path);

/**
 * Displacement field container, format "TGF1":
 *
 *   magic    4 bytes "TGF1"
 *   grid     3 * u32 LE control grid extents
 *   spacing  f32 LE control point spacing in voxels
 *   data     npoints * 3 f32 LE (dx, dy, dz) triplets, voxels
 */
void write_field(const std::string& path, const DisplacementField& f);
DisplacementField read_field(const std::string& path);

/// Minimal CSV support: comma separated, first row is the header, no
/// quoting (none of our writers emit commas inside cells).
void write_csv(const std::string& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);
std::vector<std::vector<std::string>> read_csv(
    const std::string& path, std::vector<std::string>& header);

/// Shortest decimal text that round-trips the value exactly.
std::string format_double(double v);

}  // namespace dynpet
