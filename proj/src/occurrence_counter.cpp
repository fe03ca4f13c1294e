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

#include "freshrec/occurrence_counter.h"

#include <algorithm>
#include <limits>
#include <string>

#include "freshrec/core.h"

namespace freshrec {

CountMinSketch::CountMinSketch(size_t depth, size_t width, uint64_t seed)
    : depth_(depth), width_(width) {
  if (depth == 0 || width == 0 || (width & (width - 1)) != 0) {
    throw ContractViolation("count-min sketch needs depth >= 1 and power-of-two width, got " +
                            std::to_string(depth) + "x" + std::to_string(width));
  }
  row_seeds_.reserve(depth);
  for (size_t r = 0; r < depth; ++r) row_seeds_.push_back(mix64(seed + 0x9e3779b97f4a7c15ULL * (r + 1)));
  counters_ = std::make_unique<std::atomic<uint32_t>[]>(depth * width);
  for (size_t i = 0; i < depth * width; ++i) counters_[i].store(0, std::memory_order_relaxed);
}

size_t CountMinSketch::cell(size_t row, uint64_t id) const noexcept {
  return row * width_ + (static_cast<size_t>(mix64(id ^ row_seeds_[row])) & (width_ - 1));
}

uint32_t CountMinSketch::increment(uint64_t id) noexcept {
  uint32_t best = std::numeric_limits<uint32_t>::max();
  for (size_t r = 0; r < depth_; ++r) {
    auto& c = counters_[cell(r, id)];
    uint32_t now = c.fetch_add(1, std::memory_order_relaxed) + 1;
    best = std::min(best, now);
  }
  return best;
}

uint32_t CountMinSketch::estimate(uint64_t id) const noexcept {
  uint32_t best = std::numeric_limits<uint32_t>::max();
  for (size_t r = 0; r < depth_; ++r) {
    best = std::min(best, counters_[cell(r, id)].load(std::memory_order_relaxed));
  }
  return best;
}

OccurrenceCounter::OccurrenceCounter(Mode mode, size_t depth, size_t width, uint64_t seed)
    : mode_(mode) {
  if (mode_ == Mode::kSketch) sketch_ = std::make_unique<CountMinSketch>(depth, width, seed);
}

uint32_t OccurrenceCounter::record(uint64_t id) {
  if (sketch_) return sketch_->increment(id);
  std::lock_guard lock(exact_mu_);
  return ++exact_[id];
}

uint32_t OccurrenceCounter::estimate(uint64_t id) const {
  if (sketch_) return sketch_->estimate(id);
  std::lock_guard lock(exact_mu_);
  auto it = exact_.find(id);
  return it == exact_.end() ? 0 : it->second;
}

}  // namespace freshrec
