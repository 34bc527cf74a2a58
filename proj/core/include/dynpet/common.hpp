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
#include <functional>
#include <stdexcept>
#include <string>

namespace dynpet {

/// Worker count for cross-study parallel sections. Reads DYNPET_THREADS,
/// falls back to hardware concurrency, and is always at least 1.
int worker_count();

/// Runs fn(i) for i in [begin, end) on up to worker_count() threads.
/// Iterations must write disjoint outputs; the decomposition is
/// deterministic, so results do not depend on the thread count.
/// Calls made from inside a parallel section run serially.
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn);

/// splitmix64 step, used to derive independent RNG streams from one seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b) {
  return mix_seed(mix_seed(seed, a), b);
}

}  // namespace dynpet
