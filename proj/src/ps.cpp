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

#include "freshrec/ps.h"

#include <algorithm>
#include <string>

#include "freshrec/binary_io.h"

namespace freshrec {

ShardId partition(const FeatureKey& key, uint32_t num_shards) {
  if (num_shards == 0) throw ContractViolation("partition: num_shards must be >= 1");
  return {static_cast<uint32_t>(mix64(key.id) % num_shards)};
}

ShardConfig serving_config(const ShardConfig& training) {
  ShardConfig out = training;
  for (auto& [id, c] : out.tables) {
    c.admit_threshold = 0;
    c.admit_probability = 1.0;
  }
  return out;
}

PSShard::PSShard(uint32_t index, Role role, ShardConfig config)
    : index_(index), role_(role), config_(std::move(config)) {
  for (const auto& [id, c] : config_.tables) {
    tables_.emplace(id, std::make_unique<EmbeddingTable>(id, c));
  }
  if (config_.dense) {
    if (config_.dense_partitions == 0 || index_ >= config_.dense_partitions) {
      throw ContractViolation("shard " + std::to_string(index_) + " outside " +
                              std::to_string(config_.dense_partitions) + " dense partitions");
    }
    const DenseRange r = dense_range();
    const auto offset = static_cast<Eigen::Index>(r.offset);
    const auto n = static_cast<Eigen::Index>(r.size);
    auto slice = std::make_shared<DenseSlice>();
    slice->offset = r.offset;
    // Every shard draws the full init and keeps its own part, so the model
    // does not depend on the partition count.
    slice->values = role_ == Role::kTraining
                        ? Eigen::VectorXf(DenseParams<float>::init(*config_.dense, config_.dense_seed)
                                              .flatten()
                                              .segment(offset, n))
                        : Eigen::VectorXf::Zero(n);
    slice->first_moment = Eigen::VectorXf::Zero(n);
    slice->second_moment = Eigen::VectorXf::Zero(n);
    dense_ = std::move(slice);
  }
}

EmbeddingTable& PSShard::table(uint32_t table_id) {
  auto it = tables_.find(table_id);
  if (it == tables_.end()) throw ContractViolation("unknown table " + std::to_string(table_id));
  return *it->second;
}

const EmbeddingTable& PSShard::table(uint32_t table_id) const {
  auto it = tables_.find(table_id);
  if (it == tables_.end()) throw ContractViolation("unknown table " + std::to_string(table_id));
  return *it->second;
}

std::vector<uint32_t> PSShard::table_ids() const {
  std::vector<uint32_t> ids;
  for (const auto& [id, t] : tables_) ids.push_back(id);
  return ids;
}

void PSShard::replace_table(std::unique_ptr<EmbeddingTable> table) {
  const uint32_t id = table->table_id();
  if (!config_.tables.contains(id)) {
    throw ContractViolation("table " + std::to_string(id) + " is not part of this shard");
  }
  tables_[id] = std::move(table);
}

bool PSShard::lookup(const FeatureKey& key, Eigen::Ref<Eigen::VectorXf> out) const {
  return table(key.table_id).lookup_vector(key.id, out);
}

bool PSShard::lookup_or_admit(const FeatureKey& key, Timestamp now,
                              Eigen::Ref<Eigen::VectorXf> out) {
  advance_clock(now);
  return table(key.table_id).lookup_or_admit_into(key.id, now, out);
}

bool PSShard::apply_gradient(const FeatureKey& key, const Eigen::Ref<const Eigen::VectorXf>& grad,
                             float lr, Timestamp now) {
  if (role_ != Role::kTraining) {
    throw ContractViolation("serving shards do not accept gradients");
  }
  advance_clock(now);
  if (!table(key.table_id).apply_gradient(key.id, grad, lr, now)) return false;
  touched_.mark(key);
  return true;
}

size_t PSShard::evict_expired(Timestamp now) {
  size_t n = 0;
  for (auto& [id, t] : tables_) n += t->evict_expired(now);
  return n;
}

size_t PSShard::key_count() const {
  size_t n = 0;
  for (const auto& [id, t] : tables_) n += t->size();
  return n;
}

DenseRange dense_range(uint64_t total, uint32_t num_shards, uint32_t shard) {
  if (num_shards == 0 || shard >= num_shards) {
    throw ContractViolation("dense_range: shard " + std::to_string(shard) + " of " +
                            std::to_string(num_shards));
  }
  const uint64_t base = total / num_shards;
  const uint64_t extra = total % num_shards;
  return {shard * base + std::min<uint64_t>(shard, extra), base + (shard < extra ? 1 : 0)};
}

DenseRange PSShard::dense_range() const {
  if (!config_.dense) {
    throw ContractViolation("shard " + std::to_string(index_) + " has no dense model");
  }
  const uint64_t total = DenseParams<float>::zeros(*config_.dense).parameter_count();
  return freshrec::dense_range(total, config_.dense_partitions, index_);
}

std::shared_ptr<const DenseSlice> PSShard::dense_ptr() const {
  std::lock_guard lock(dense_mu_);
  if (!dense_) throw ContractViolation("shard " + std::to_string(index_) + " has no dense slice");
  return dense_;
}

DenseSlice PSShard::dense() const { return *dense_ptr(); }

void PSShard::replace_dense(DenseSlice slice) {
  const DenseRange want = dense_range();
  const auto n = static_cast<Eigen::Index>(want.size);
  if (slice.range() != want || slice.first_moment.size() != n || slice.second_moment.size() != n) {
    throw ContractViolation("shard " + std::to_string(index_) + ": dense slice does not match [" +
                            std::to_string(want.offset) + ", +" + std::to_string(want.size) + ")");
  }
  auto next = std::make_shared<const DenseSlice>(std::move(slice));
  std::lock_guard lock(dense_mu_);
  dense_ = std::move(next);
}

void PSShard::apply_dense_gradient(const Eigen::Ref<const Eigen::VectorXf>& grad,
                                  const AdamOptions& options) {
  if (role_ == Role::kServing) throw ContractViolation("serving shards do not train");
  DenseSlice s = dense();
  ++s.step;
  adam_update<float>(s.values, grad, s.first_moment, s.second_moment, s.step, options);
  replace_dense(std::move(s));
}

uint64_t PSShard::applied_version(uint32_t source) const {
  auto it = applied_.find(source);
  return it == applied_.end() ? 0 : it->second;
}

void PSShard::set_applied_version(uint32_t source, uint64_t version) { applied_[source] = version; }

bool same_state(const PSShard& a, const PSShard& b) {
  if (a.version() != b.version() || a.table_ids() != b.table_ids()) return false;
  for (uint32_t id : a.table_ids()) {
    const auto& ta = a.table(id);
    const auto& tb = b.table(id);
    if (ta.ids() != tb.ids()) return false;
    bool equal = true;
    ta.for_each_sorted([&](uint64_t key, const EmbeddingEntry& ea) {
      if (!equal) return;
      auto eb = tb.lookup(key);
      equal = eb && ea.vector == eb->vector && ea.accumulator == eb->accumulator &&
              ea.last_update == eb->last_update;
    });
    if (!equal) return false;
  }
  if (a.owns_dense() != b.owns_dense()) return false;
  return !a.owns_dense() || *a.dense_ptr() == *b.dense_ptr();
}

std::vector<uint8_t> serialize_dense(const DenseSlice& slice, bool with_optimizer) {
  ByteWriter w;
  w.u64(slice.offset);
  w.u32(static_cast<uint32_t>(slice.values.size()));
  for (float x : slice.values) w.f32(x);
  if (with_optimizer) {
    for (float x : slice.first_moment) w.f32(x);
    for (float x : slice.second_moment) w.f32(x);
    w.i64(slice.step);
  }
  return std::move(w).take();
}

DenseSlice deserialize_dense(std::span<const uint8_t> bytes, DenseRange expected,
                             bool with_optimizer) {
  ByteReader r(bytes);
  DenseSlice s;
  s.offset = r.u64();
  const uint32_t n = r.u32();
  if (s.offset != expected.offset || n != expected.size) {
    throw RecoveryError("dense slice range mismatch: stored [" + std::to_string(s.offset) + ", +" +
                        std::to_string(n) + "), expected [" + std::to_string(expected.offset) +
                        ", +" + std::to_string(expected.size) + ")");
  }
  auto read_vec = [&](Eigen::VectorXf& v) {
    v.resize(n);
    for (uint32_t i = 0; i < n; ++i) v[i] = r.f32();
  };
  read_vec(s.values);
  if (with_optimizer) {
    read_vec(s.first_moment);
    read_vec(s.second_moment);
    s.step = r.i64();
  } else {
    s.first_moment = Eigen::VectorXf::Zero(n);
    s.second_moment = Eigen::VectorXf::Zero(n);
  }
  if (!r.done()) throw RecoveryError("dense slice has trailing bytes");
  return s;
}

Cluster::Cluster(uint32_t num_shards, Role role, ShardConfig config)
    : role_(role), config_(std::move(config)) {
  if (num_shards == 0) throw ContractViolation("cluster needs at least one shard");
  config_.dense_partitions = num_shards;
  for (uint32_t i = 0; i < num_shards; ++i) {
    shards_.push_back(std::make_unique<PSShard>(i, role, config_));
  }
}

DenseParams<float> Cluster::dense_params() const {
  if (!config_.dense) throw ContractViolation("cluster has no dense model");
  Eigen::VectorXf flat(static_cast<Eigen::Index>(
      DenseParams<float>::zeros(*config_.dense).parameter_count()));
  for (const auto& s : shards_) {
    const auto slice = s->dense_ptr();
    flat.segment(static_cast<Eigen::Index>(slice->offset), slice->values.size()) = slice->values;
  }
  return DenseParams<float>::unflatten(*config_.dense, flat);
}

void Cluster::apply_dense_gradient(const Eigen::Ref<const Eigen::VectorXf>& flat,
                                   const AdamOptions& options) {
  for (auto& s : shards_) {
    const DenseRange r = s->dense_range();
    if (r.offset + r.size > static_cast<uint64_t>(flat.size())) {
      throw ContractViolation("dense gradient shorter than the model");
    }
    s->apply_dense_gradient(
        flat.segment(static_cast<Eigen::Index>(r.offset), static_cast<Eigen::Index>(r.size)),
        options);
  }
}

void Cluster::replace_shard(uint32_t i, std::unique_ptr<PSShard> s) {
  if (s->index() != i || s->role() != role_) {
    throw ContractViolation("replacement shard does not match slot " + std::to_string(i));
  }
  shards_.at(i) = std::move(s);
}

size_t Cluster::evict_expired(Timestamp now) {
  size_t n = 0;
  for (auto& s : shards_) n += s->evict_expired(now);
  return n;
}

}  // namespace freshrec
