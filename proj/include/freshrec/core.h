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
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace freshrec {

/// Seconds of event time. All windows and TTLs are measured in this unit.
using Timestamp = int64_t;

/// A sparse feature identifier. `id` is stored verbatim; nothing in the
/// embedding path reduces it modulo a table size.
struct FeatureKey {
  uint32_t table_id = 0;
  uint64_t id = 0;

  friend bool operator==(const FeatureKey&, const FeatureKey&) = default;
  friend auto operator<=>(const FeatureKey&, const FeatureKey&) = default;
};

/// One labelled training or evaluation example. `features` holds one key
/// per slot, in slot order; the key's table_id is its slot.
struct Example {
  std::vector<FeatureKey> features;
  int label = 0;
  Timestamp ts = 0;

  friend bool operator==(const Example&, const Example&) = default;
};

// Error taxonomy shared by every module.

/// A caller broke a documented precondition (bad shapes, out-of-range args).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A table could not grow past its configured allocation limit.
class StorageExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A metric is undefined for the given input (e.g. single-class AUC).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Snapshot or spill data failed validation or could not be read back.
class RecoveryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Finalizer-style 64-bit mixer (multiply-xor-shift).
constexpr uint64_t mix64(uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

/// Derives an independent sub-seed for a named component from a root seed.
uint64_t derive_seed(uint64_t root, std::string_view component) noexcept;

/// 64-bit FNV-1a over a byte range.
uint64_t fnv1a64(std::span<const uint8_t> bytes,
                 uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

struct FeatureKeyHash {
  size_t operator()(const FeatureKey& k) const noexcept {
    return static_cast<size_t>(mix64(k.id ^ (uint64_t{k.table_id} << 48) ^
                                     0x9e3779b97f4a7c15ULL));
  }
};

}  // namespace freshrec
