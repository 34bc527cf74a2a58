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

#include "dynpet/checkpoint.hpp"

#include <fstream>
#include <limits>

#include "dynpet/serial.hpp"

namespace dynpet {

namespace {
constexpr char kMagic[4] = {'T', 'G', 'W', '1'};
}

void save_checkpoint(const std::string& path,
                     const std::vector<NamedParam>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(kMagic, 4);
  serial::write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const NamedParam& p : params) {
    if (p.name.size() > std::numeric_limits<std::uint16_t>::max())
      throw std::runtime_error("checkpoint entry name too long: " + p.name);
    serial::write_u16(os, static_cast<std::uint16_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    os.put(static_cast<char>(p.tensor.rank()));
    for (int ax = 0; ax < p.tensor.rank(); ++ax)
      serial::write_u32(os, static_cast<std::uint32_t>(p.tensor.dim(ax)));
    for (double v : p.tensor.data()) serial::write_f64(os, v);
  }
  if (!os) throw std::runtime_error("write failed for " + path);
}

std::vector<NamedParam> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[4];
  serial::read_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error(path + " is not a TGW1 checkpoint");
  const std::uint32_t count = serial::read_u32(is, "entry count");
  std::vector<NamedParam> params;
  params.reserve(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint16_t name_len = serial::read_u16(is, "name length");
    std::string name(name_len, '\0');
    if (name_len) serial::read_bytes(is, name.data(), name_len, "name");
    unsigned char rank;
    serial::read_bytes(is, &rank, 1, "rank");
    std::vector<int> shape(rank);
    std::int64_t numel = 1;
    for (int ax = 0; ax < rank; ++ax) {
      const std::uint32_t ext = serial::read_u32(is, "extent");
      if (ext == 0 || ext > (1u << 24))
        throw std::runtime_error("implausible tensor extent in " + path);
      shape[ax] = static_cast<int>(ext);
      numel *= shape[ax];
    }
    std::vector<double> data(static_cast<std::size_t>(numel));
    for (double& v : data) v = serial::read_f64(is, "values");
    params.push_back({std::move(name), Tensor::from(std::move(shape), std::move(data))});
  }
  return params;
}

}  // namespace dynpet
