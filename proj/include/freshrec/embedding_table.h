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

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <shared_mutex>
#include <span>
#include <vector>

#include "freshrec/core.h"
#include "freshrec/cuckoo_table.h"
#include "freshrec/occurrence_counter.h"

namespace freshrec {

/// Stored state of one admitted feature id.
struct EmbeddingEntry {
  Eigen::VectorXf vector;
  Eigen::VectorXf accumulator;  // Adagrad sum of squared gradients
  Timestamp last_update = 0;
  uint32_t occurrence_estimate = 0;
};

struct TableConfig {
  uint32_t dim = 8;
  uint32_t admit_threshold = 0;     // occurrences before admission; 0 disables
  double admit_probability = 1.0;   // Bernoulli admission gate, in (0, 1]
  Timestamp ttl = 0;                // inactivity expiry in seconds; 0 = never
  size_t initial_capacity = 1024;   // slots, power of two
  std::array<uint64_t, 2> hash_seeds{0x243f6a8885a308d3ULL, 0x13198a2e03707344ULL};
  size_t max_capacity = size_t{1} << 28;
  size_t sketch_depth = 4;
  size_t sketch_width = size_t{1} << 18;
  bool exact_counts = false;
  uint64_t init_seed = 1;
  /// Uniform init half-width; non-positive means 1/sqrt(dim).
  float init_scale = 0.0f;
};

/// Throws ContractViolation on an invalid config.
void validate(const TableConfig& config);

/// Stable 64-bit digest of the config fields that shape stored state.
uint64_t config_digest(const TableConfig& config);

struct TableStats {
  uint64_t admitted = 0;
  uint64_t filtered = 0;           // lookups of absent ids that were not admitted
  uint64_t missing_gradients = 0;  // gradients addressed to absent ids
  uint64_t evicted = 0;
};

/// A collisionless embedding table: cuckoo storage plus admission filters,
/// TTL expiry and an Adagrad update path.
///
/// Readers share a lock, writers take it exclusively, so every read sees a
/// whole vector from before or after a write.
class EmbeddingTable {
 public:
  static constexpr float kAdagradEpsilon = 1e-8f;

  EmbeddingTable(uint32_t table_id, TableConfig config);

  uint32_t table_id() const noexcept { return table_id_; }
  const TableConfig& config() const noexcept { return config_; }
  uint32_t dim() const noexcept { return config_.dim; }

  std::optional<EmbeddingEntry> lookup(uint64_t id) const;

  /// Copies the vector into `out` (length dim) if present. `probes` gets the
  /// slot count inspected.
  bool lookup_vector(uint64_t id, Eigen::Ref<Eigen::VectorXf> out, int* probes = nullptr) const;

  /// Training-side lookup. A present id has last_update refreshed. An absent
  /// id has its occurrence recorded and is admitted with a fresh vector when
  /// the count reaches admit_threshold and the Bernoulli gate passes.
  /// Returns the vector, or nullopt when the id stays filtered.
  std::optional<Eigen::VectorXf> lookup_or_admit(uint64_t id, Timestamp now);

  /// Same admission rule, writing into `out`. Returns false when filtered.
  bool lookup_or_admit_into(uint64_t id, Timestamp now, Eigen::Ref<Eigen::VectorXf> out);

  uint32_t record_occurrence(uint64_t id);

  /// Inserts or overwrites. Throws ContractViolation on a wrong-size entry.
  void insert(uint64_t id, EmbeddingEntry entry);

  /// Serving-side upsert of a synced vector; optimizer state stays zero.
  void upsert_vector(uint64_t id, const Eigen::Ref<const Eigen::VectorXf>& vector, Timestamp now);

  /// Adagrad step. Returns false (and counts it) when the id is absent.
  bool apply_gradient(uint64_t id, const Eigen::Ref<const Eigen::VectorXf>& grad, float lr,
                      Timestamp now);

  bool erase(uint64_t id);

  /// Drops entries idle for more than ttl seconds. No-op when ttl is 0.
  size_t evict_expired(Timestamp now);

  size_t size() const;
  size_t capacity() const;
  TableStats stats() const;

  /// Ids in ascending order.
  std::vector<uint64_t> ids() const;

  /// Calls fn(id, entry) in ascending id order under the read lock.
  template <typename Fn>
  void for_each_sorted(Fn&& fn) const {
    std::shared_lock lock(mu_);
    std::vector<std::pair<uint64_t, const EmbeddingEntry*>> rows;
    rows.reserve(store_.size());
    store_.for_each([&](uint64_t id, const EmbeddingEntry& e) { rows.emplace_back(id, &e); });
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [id, e] : rows) fn(id, *e);
  }

  /// Binary form: header (table_id u32, dim u32, config digest u64, count
  /// u64) then one length-prefixed record per id in ascending id order:
  /// id u64, dim u32, vector f32[dim], accumulator f32[dim], last_update i64.
  std::vector<uint8_t> serialize() const;

  /// Rebuilds a table from serialize() output. The config must match the
  /// digest in the header. Throws RecoveryError on any mismatch.
  static std::unique_ptr<EmbeddingTable> deserialize(std::span<const uint8_t> bytes,
                                                     const TableConfig& config);

 private:
  EmbeddingEntry fresh_entry(uint64_t id, Timestamp now, uint32_t occurrences);
  bool admit_locked(uint64_t id, Timestamp now, Eigen::Ref<Eigen::VectorXf> out);

  uint32_t table_id_;
  TableConfig config_;
  mutable std::shared_mutex mu_;
  CuckooTable<EmbeddingEntry> store_;
  std::unique_ptr<OccurrenceCounter> counter_;  // created on first use
  std::mt19937_64 rng_;                         // admission gate only
  TableStats stats_;
};

}  // namespace freshrec
