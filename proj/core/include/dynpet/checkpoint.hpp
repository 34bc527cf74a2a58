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

#include "dynpet/tensor.hpp"

namespace dynpet {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

/**
 * Weight checkpoint, format "TGW1":
 *
 *   magic   4 bytes "TGW1"
 *   count   u32 LE, number of entries
 *   entry   u16 LE name length, name bytes (UTF-8),
 *           u8 rank, rank * u32 LE extents,
 *           numel * f64 LE values
 *
 * Entries round-trip bit exactly and keep their order.
 */
void save_checkpoint(const std::string& path,
                     const std::vector<NamedParam>& params);

std::vector<NamedParam> load_checkpoint(const std::string& path);

}  // namespace dynpet
