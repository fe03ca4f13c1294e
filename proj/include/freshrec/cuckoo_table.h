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

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "freshrec/core.h"

namespace freshrec {

/// Two-table cuckoo hash map from 64-bit ids to `Value`.
///
/// Every stored id lives either at slot h0(id) of the first array or at
/// slot h1(id) of the second, so a lookup probes at most two slots. An insert
/// that finds its slot occupied evicts the occupant into its alternate array,
/// repeating up to `kDisplacementLimit` times; a longer chain (a cycle, in
/// practice) doubles the capacity and rehashes everything.
///
/// Not synchronized. EmbeddingTable adds locking on top.
template <typename Value>
class CuckooTable {
 public:
  static constexpr int kDisplacementLimit = 64;
  static constexpr double kMaxLoadFactor = 0.9;

  /// `capacity` counts slots across both arrays and must be a power of two
  /// no smaller than 2.
  CuckooTable(size_t capacity, std::array<uint64_t, 2> seeds,
              size_t max_capacity = size_t{1} << 30)
      : seeds_(seeds), max_capacity_(max_capacity) {
    if (capacity < 2 || (capacity & (capacity - 1)) != 0) {
      throw ContractViolation("cuckoo capacity must be a power of two >= 2, got " +
                              std::to_string(capacity));
    }
    if (capacity > max_capacity_) {
      throw StorageExhausted("initial capacity exceeds allocation limit");
    }
    allocate(capacity);
  }

  /// Slot index of `id` in array `side` (0 or 1).
  size_t bucket(int side, uint64_t id) const noexcept {
    return static_cast<size_t>(mix64(id ^ seeds_[side])) & (half_ - 1);
  }

  /// Returns the stored value or nullptr. `probes`, when given, receives the
  /// number of slots inspected (1 or 2).
  Value* find(uint64_t id, int* probes = nullptr) noexcept {
    return const_cast<Value*>(std::as_const(*this).find(id, probes));
  }
  const Value* find(uint64_t id, int* probes = nullptr) const noexcept {
    for (int side = 0; side < 2; ++side) {
      const Slot& s = arrays_[side][bucket(side, id)];
      if (s.used && s.id == id) {
        if (probes) *probes = side + 1;
        return &s.value;
      }
    }
    if (probes) *probes = 2;
    return nullptr;
  }

  /// Which array holds `id`, if any.
  std::optional<int> side_of(uint64_t id) const noexcept {
    for (int side = 0; side < 2; ++side) {
      const Slot& s = arrays_[side][bucket(side, id)];
      if (s.used && s.id == id) return side;
    }
    return std::nullopt;
  }

  /// Inserts or overwrites. Throws StorageExhausted when growth would pass
  /// the allocation limit; the table is unchanged in that case.
  Value& insert_or_assign(uint64_t id, Value value) {
    if (Value* existing = find(id)) {
      *existing = std::move(value);
      return *existing;
    }
    if (static_cast<double>(size_ + 1) > kMaxLoadFactor * static_cast<double>(capacity())) {
      if (capacity() * 2 > max_capacity_) {
        throw StorageExhausted("cuckoo table at allocation limit (" +
                               std::to_string(max_capacity_) + " slots)");
      }
      rebuild(capacity() * 2, collect());
    }
    // A failed chain at the size limit cannot be undone by growing, so keep
    // a copy to roll back to.
    std::optional<std::array<std::vector<Slot>, 2>> backup;
    if (capacity() * 2 > max_capacity_) backup = arrays_;
    if (auto homeless = place(Slot{id, std::move(value), true})) {
      if (backup) {
        arrays_ = std::move(*backup);
        throw StorageExhausted("cuckoo table at allocation limit (" +
                               std::to_string(max_capacity_) + " slots)");
      }
      // `homeless` may be an older entry displaced by the chain; the stored
      // set plus `homeless` is still the old set plus the new entry.
      auto items = collect();
      items.push_back(std::move(*homeless));
      rebuild(capacity() * 2, std::move(items));
    }
    ++size_;
    return *find(id);
  }

  bool erase(uint64_t id) noexcept {
    for (int side = 0; side < 2; ++side) {
      Slot& s = arrays_[side][bucket(side, id)];
      if (s.used && s.id == id) {
        s = Slot{};
        --size_;
        return true;
      }
    }
    return false;
  }

  /// Visits entries in slot order.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& arr : arrays_)
      for (const Slot& s : arr)
        if (s.used) fn(s.id, s.value);
  }
  template <typename Fn>
  void for_each_mut(Fn&& fn) {
    for (auto& arr : arrays_)
      for (Slot& s : arr)
        if (s.used) fn(s.id, s.value);
  }

  /// Removes every entry for which `pred(id, value)` holds.
  template <typename Pred>
  size_t erase_if(Pred&& pred) {
    size_t removed = 0;
    for (auto& arr : arrays_) {
      for (Slot& s : arr) {
        if (s.used && pred(s.id, std::as_const(s.value))) {
          s = Slot{};
          ++removed;
        }
      }
    }
    size_ -= removed;
    return removed;
  }

  size_t size() const noexcept { return size_; }
  size_t capacity() const noexcept { return 2 * half_; }
  size_t growth_count() const noexcept { return growths_; }
  double load_factor() const noexcept {
    return static_cast<double>(size_) / static_cast<double>(capacity());
  }

 private:
  struct Slot {
    uint64_t id = 0;
    Value value{};
    bool used = false;
  };

  void allocate(size_t capacity) {
    half_ = capacity / 2;
    for (auto& arr : arrays_) arr.assign(half_, Slot{});
  }

  // Walks the displacement chain. Returns the entry left without a slot
  // when the chain exceeds the limit.
  std::optional<Slot> place(Slot item) {
    int side = 0;
    for (int step = 0; step < kDisplacementLimit; ++step) {
      Slot& target = arrays_[side][bucket(side, item.id)];
      if (!target.used) {
        target = std::move(item);
        return std::nullopt;
      }
      std::swap(target, item);
      side ^= 1;
    }
    return item;
  }

  std::vector<Slot> collect() const {
    std::vector<Slot> items;
    items.reserve(size_ + 1);
    for (const auto& arr : arrays_)
      for (const Slot& s : arr)
        if (s.used) items.push_back(s);
    return items;
  }

  // Reinserts `items` into fresh arrays, doubling again if a chain fails.
  void rebuild(size_t new_capacity, std::vector<Slot> items) {
    auto old = std::move(arrays_);
    const size_t old_half = half_;
    for (;;) {
      if (new_capacity > max_capacity_) {
        arrays_ = std::move(old);
        half_ = old_half;
        throw StorageExhausted("cuckoo table cannot grow past " +
                               std::to_string(max_capacity_) + " slots");
      }
      allocate(new_capacity);
      ++growths_;
      bool ok = true;
      for (const Slot& item : items) {
        if (place(item)) {
          ok = false;
          break;
        }
      }
      if (ok) return;
      new_capacity *= 2;
    }
  }

  std::array<uint64_t, 2> seeds_;
  size_t max_capacity_;
  size_t half_ = 0;
  size_t size_ = 0;
  size_t growths_ = 0;
  std::array<std::vector<Slot>, 2> arrays_;
};

}  // namespace freshrec
