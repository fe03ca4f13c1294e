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

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

namespace freshrec {

/// Count-min sketch over 64-bit ids. Estimates never undercount. Increments
/// are relaxed atomics, so concurrent writers only lose accuracy, never
/// memory safety.
class CountMinSketch {
 public:
  /// `width` must be a power of two.
  CountMinSketch(size_t depth, size_t width, uint64_t seed);

  /// Adds one occurrence and returns the new estimate.
  uint32_t increment(uint64_t id) noexcept;
  uint32_t estimate(uint64_t id) const noexcept;

  size_t depth() const noexcept { return depth_; }
  size_t width() const noexcept { return width_; }

 private:
  size_t cell(size_t row, uint64_t id) const noexcept;

  size_t depth_;
  size_t width_;
  std::vector<uint64_t> row_seeds_;
  std::unique_ptr<std::atomic<uint32_t>[]> counters_;
};

/// Pre-admission occurrence counting: a count-min sketch by default, or an
/// exact hash map (tests, small tables).
class OccurrenceCounter {
 public:
  enum class Mode { kSketch, kExact };

  OccurrenceCounter(Mode mode, size_t depth, size_t width, uint64_t seed);

  uint32_t record(uint64_t id);
  uint32_t estimate(uint64_t id) const;
  Mode mode() const noexcept { return mode_; }

 private:
  Mode mode_;
  std::unique_ptr<CountMinSketch> sketch_;
  mutable std::mutex exact_mu_;
  std::unordered_map<uint64_t, uint32_t> exact_;
};

}  // namespace freshrec
