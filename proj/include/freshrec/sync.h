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
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "freshrec/core.h"
#include "freshrec/ps.h"

namespace freshrec {

enum class SyncAction { kNone, kSparseOnly, kSparseAndDense };

/// Sparse parameters sync every `sparse_interval` steps, dense ones every
/// `dense_interval` steps (a multiple of the sparse interval).
struct SyncSchedule {
  uint64_t sparse_interval = 1;
  uint64_t dense_interval = 1;
};

void validate(const SyncSchedule& schedule);
SyncAction should_sync(uint64_t step, const SyncSchedule& schedule);

struct SparseSection {
  uint32_t table_id = 0;
  std::vector<std::pair<uint64_t, Eigen::VectorXf>> entries;
};

/// Incremental update from one training shard to its serving counterpart.
/// Carries parameter values only; optimizer state never crosses the wire.
struct SyncPacket {
  uint32_t source_shard = 0;
  uint64_t version = 0;
  std::vector<SparseSection> sections;
  std::optional<std::vector<uint8_t>> dense;  // serialize_dense(..., false)
  Timestamp created_at = 0;

  size_t entry_count() const;
};

/// Wire form, little-endian: source u32, version u64, section count u32;
/// per section table_id u32, entry count u32, then entries (id u64, dim
/// f32 values); then, if present, the dense slice as u64 length + bytes.
std::vector<uint8_t> encode(const SyncPacket& packet);

/// `dim_of(table_id)` supplies the receiver's width for each table.
SyncPacket decode(std::span<const uint8_t> bytes,
                  const std::function<uint32_t(uint32_t)>& dim_of);

/// Bandwidth estimate for one sparse sync: num_keys * dim * bytes_per_element,
/// plus 8 bytes of key per entry when `include_keys`.
uint64_t estimate_packet_bytes(uint64_t num_keys, uint64_t dim, uint64_t bytes_per_element,
                               bool include_keys = false);

struct BuiltPacket {
  SyncPacket packet;
  size_t skipped = 0;  // drained keys no longer present (evicted since touch)
};

/// Copies the current vector of each drained key that still exists.
BuiltPacket build_sparse_packet(const PSShard& training, std::span<const FeatureKey> drained,
                                uint64_t version, Timestamp now);

enum class ApplyResult { kApplied, kStale };

/// Upserts every entry (per-key atomic) and swaps the dense slice whole.
/// Packets not newer than the last one applied from the same source are
/// rejected and leave the shard untouched.
ApplyResult apply_packet(PSShard& serving, const SyncPacket& packet);

struct SyncStats {
  uint64_t packets = 0;
  uint64_t keys = 0;
  uint64_t skipped = 0;
  uint64_t bytes = 0;
  uint64_t dense_syncs = 0;
  uint64_t rejected = 0;
};

/// Pushes training-cluster updates to the serving cluster through the
/// encoded wire form. Owns the per-source packet counters, so they survive a
/// training shard being replaced by recovery.
class Synchronizer {
 public:
  Synchronizer(Cluster& training, Cluster& serving);

  /// Drains every training shard and applies the packets. kNone is a no-op.
  SyncStats sync(SyncAction action, Timestamp now);

  const SyncStats& totals() const noexcept { return totals_; }

 private:
  Cluster& training_;
  Cluster& serving_;
  std::vector<uint64_t> next_version_;
  SyncStats totals_;
};

}  // namespace freshrec
