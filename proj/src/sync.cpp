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

#include "freshrec/sync.h"

#include <string>

#include "freshrec/binary_io.h"

namespace freshrec {

void validate(const SyncSchedule& s) {
  if (s.sparse_interval == 0 || s.dense_interval == 0) {
    throw ContractViolation("sync intervals must be positive");
  }
  if (s.dense_interval % s.sparse_interval != 0) {
    throw ContractViolation("dense_interval must be a multiple of sparse_interval");
  }
}

SyncAction should_sync(uint64_t step, const SyncSchedule& s) {
  validate(s);
  if (step % s.dense_interval == 0) return SyncAction::kSparseAndDense;
  if (step % s.sparse_interval == 0) return SyncAction::kSparseOnly;
  return SyncAction::kNone;
}

size_t SyncPacket::entry_count() const {
  size_t n = 0;
  for (const auto& s : sections) n += s.entries.size();
  return n;
}

std::vector<uint8_t> encode(const SyncPacket& p) {
  ByteWriter w;
  w.u32(p.source_shard);
  w.u64(p.version);
  w.u32(static_cast<uint32_t>(p.sections.size()));
  for (const auto& s : p.sections) {
    w.u32(s.table_id);
    w.u32(static_cast<uint32_t>(s.entries.size()));
    for (const auto& [id, v] : s.entries) {
      w.u64(id);
      for (Eigen::Index d = 0; d < v.size(); ++d) w.f32(v[d]);
    }
  }
  if (p.dense) {
    w.u64(p.dense->size());
    w.bytes(*p.dense);
  }
  return std::move(w).take();
}

SyncPacket decode(std::span<const uint8_t> bytes,
                  const std::function<uint32_t(uint32_t)>& dim_of) {
  ByteReader r(bytes);
  SyncPacket p;
  p.source_shard = r.u32();
  p.version = r.u64();
  const uint32_t sections = r.u32();
  for (uint32_t i = 0; i < sections; ++i) {
    SparseSection s;
    s.table_id = r.u32();
    const uint32_t count = r.u32();
    const uint32_t dim = dim_of(s.table_id);
    s.entries.reserve(count);
    for (uint32_t k = 0; k < count; ++k) {
      const uint64_t id = r.u64();
      Eigen::VectorXf v(dim);
      for (uint32_t d = 0; d < dim; ++d) v[d] = r.f32();
      s.entries.emplace_back(id, std::move(v));
    }
    p.sections.push_back(std::move(s));
  }
  if (!r.done()) {
    const uint64_t len = r.u64();
    auto dense = r.bytes(len);
    p.dense.emplace(dense.begin(), dense.end());
  }
  if (!r.done()) throw RecoveryError("sync packet has trailing bytes");
  return p;
}

uint64_t estimate_packet_bytes(uint64_t num_keys, uint64_t dim, uint64_t bytes_per_element,
                               bool include_keys) {
  return num_keys * (dim * bytes_per_element + (include_keys ? 8 : 0));
}

BuiltPacket build_sparse_packet(const PSShard& training, std::span<const FeatureKey> drained,
                                uint64_t version, Timestamp now) {
  BuiltPacket out;
  out.packet.source_shard = training.index();
  out.packet.version = version;
  out.packet.created_at = now;
  // `drained` is sorted, so keys of one table are contiguous.
  for (const FeatureKey& key : drained) {
    if (!training.has_table(key.table_id)) {
      ++out.skipped;
      continue;
    }
    const auto& table = training.table(key.table_id);
    Eigen::VectorXf v(table.dim());
    if (!table.lookup_vector(key.id, v)) {
      ++out.skipped;
      continue;
    }
    auto& sections = out.packet.sections;
    if (sections.empty() || sections.back().table_id != key.table_id) {
      sections.push_back({key.table_id, {}});
    }
    sections.back().entries.emplace_back(key.id, std::move(v));
  }
  return out;
}

ApplyResult apply_packet(PSShard& serving, const SyncPacket& packet) {
  if (packet.version <= serving.applied_version(packet.source_shard)) return ApplyResult::kStale;
  for (const auto& section : packet.sections) {
    auto& table = serving.table(section.table_id);
    for (const auto& [id, v] : section.entries) table.upsert_vector(id, v, packet.created_at);
  }
  if (packet.dense) {
    if (!serving.owns_dense()) {
      throw ContractViolation("dense section sent to a shard without a dense model");
    }
    serving.replace_dense(deserialize_dense(*packet.dense, serving.dense_range(), false));
  }
  serving.set_applied_version(packet.source_shard, packet.version);
  serving.advance_clock(packet.created_at);
  serving.bump_version();
  return ApplyResult::kApplied;
}

Synchronizer::Synchronizer(Cluster& training, Cluster& serving)
    : training_(training), serving_(serving), next_version_(training.num_shards(), 1) {
  if (training.num_shards() != serving.num_shards()) {
    throw ContractViolation("training and serving clusters must have the same shard count");
  }
}

SyncStats Synchronizer::sync(SyncAction action, Timestamp now) {
  SyncStats stats;
  if (action == SyncAction::kNone) return stats;
  for (uint32_t i = 0; i < training_.num_shards(); ++i) {
    PSShard& source = training_.shard(i);
    PSShard& target = serving_.shard(i);
    const auto drained = source.touched().drain();
    BuiltPacket built = build_sparse_packet(source, drained, next_version_[i]++, now);
    if (action == SyncAction::kSparseAndDense && source.owns_dense()) {
      built.packet.dense = serialize_dense(source.dense(), false);
      ++stats.dense_syncs;
    }
    const auto wire = encode(built.packet);
    const auto received =
        decode(wire, [&](uint32_t table_id) { return target.table(table_id).dim(); });
    if (apply_packet(target, received) == ApplyResult::kStale) ++stats.rejected;
    ++stats.packets;
    stats.keys += received.entry_count();
    stats.skipped += built.skipped;
    stats.bytes += wire.size();
  }
  totals_.packets += stats.packets;
  totals_.keys += stats.keys;
  totals_.skipped += stats.skipped;
  totals_.bytes += stats.bytes;
  totals_.dense_syncs += stats.dense_syncs;
  totals_.rejected += stats.rejected;
  return stats;
}

}  // namespace freshrec
