// Copyright 2026 The freshrec Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string>

#include "freshrec/core.h"

namespace freshrec {

/// Quotient/remainder split of an id for the hashing-trick baseline, where
/// the embedding of `id` is the sum of the rows for `quotient` and
/// `remainder` in two small tables.
struct DecomposedId {
  uint64_t quotient = 0;
  uint64_t remainder = 0;

  friend bool operator==(const DecomposedId&, const DecomposedId&) = default;
};

/// `modulus` must be a power of two.
inline DecomposedId decompose_id(uint64_t id, uint64_t modulus) {
  if (modulus == 0 || (modulus & (modulus - 1)) != 0) {
    throw ContractViolation("decomposition modulus must be a power of two, got " +
                            std::to_string(modulus));
  }
  return {id / modulus, id & (modulus - 1)};
}

}  // namespace freshrec
