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
#include <vector>

namespace dynpet {

// Anatomical label values shared by the phantom, the augmentation stage and
// the kinetic analysis.
inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kRvBlood = 1;    // right-ventricle blood pool
inline constexpr std::uint8_t kLvBlood = 2;    // left-ventricle blood pool
inline constexpr std::uint8_t kMyocardium = 3;

/// One scalar volume, x-major with z fastest: index (x*ny + y)*nz + z.
struct Volume {
  int nx = 0, ny = 0, nz = 0;
  std::vector<double> v;

  Volume() = default;
  Volume(int x, int y, int z)
      : nx(x), ny(y), nz(z),
        v(static_cast<std::size_t>(x) * y * z, 0.0) {}

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(x) * ny + y) * nz + z;
  }
  double& at(int x, int y, int z) { return v[index(x, y, z)]; }
  double at(int x, int y, int z) const { return v[index(x, y, z)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
  bool same_grid(const Volume& o) const {
    return nx == o.nx && ny == o.ny && nz == o.nz;
  }
};

/// Segmentation on the same grid convention as Volume.
struct LabelMap {
  int nx = 0, ny = 0, nz = 0;
  std::vector<std::uint8_t> v;

  LabelMap() = default;
  LabelMap(int x, int y, int z)
      : nx(x), ny(y), nz(z),
        v(static_cast<std::size_t>(x) * y * z, kBackground) {}

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(x) * ny + y) * nz + z;
  }
  std::uint8_t& at(int x, int y, int z) { return v[index(x, y, z)]; }
  std::uint8_t at(int x, int y, int z) const { return v[index(x, y, z)]; }
};

struct FrameTiming {
  double start_s = 0.0;
  double duration_s = 0.0;
  double mid_s() const { return start_s + 0.5 * duration_s; }
};

/// A dynamic acquisition: equally sized frames plus their timing.
struct DynamicSeries {
  int nx = 0, ny = 0, nz = 0;
  double voxel_mm[3] = {1.0, 1.0, 1.0};
  std::vector<FrameTiming> timing;
  std::vector<Volume> frames;

  int nframes() const { return static_cast<int>(frames.size()); }
};

/// Free-form deformation displacements on a coarse control grid.
/// Control point (i,j,k) sits at voxel ((i-1)*spacing, (j-1)*spacing,
/// (k-1)*spacing); one layer of points lies outside each face so the cubic
/// B-spline support covers the whole volume. Components are interleaved:
/// index ((i*gy + j)*gz + k)*3 + axis, displacements in voxels.
struct DisplacementField {
  int gx = 0, gy = 0, gz = 0;
  double spacing = 8.0;
  std::vector<double> d;

  DisplacementField() = default;
  DisplacementField(int x, int y, int z, double sp)
      : gx(x), gy(y), gz(z), spacing(sp),
        d(static_cast<std::size_t>(x) * y * z * 3, 0.0) {}

  std::size_t index(int i, int j, int k, int axis) const {
    return ((static_cast<std::size_t>(i) * gy + j) * gz + k) * 3 + axis;
  }
  int npoints() const { return gx * gy * gz; }
};

}  // namespace dynpet
