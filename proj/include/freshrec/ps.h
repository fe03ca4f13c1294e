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
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "freshrec/adam.h"
#include "freshrec/core.h"
#include "freshrec/deepfm.h"
#include "freshrec/embedding_table.h"
#include "freshrec/touched_keys.h"

namespace freshrec {

enum class Role { kTraining, kServing };

struct ShardId {
  uint32_t index = 0;
  friend bool operator==(const ShardId&, const ShardId&) = default;
};

/// Stable key-to-shard assignment: mix64(id) mod num_shards.
ShardId partition(const FeatureKey& key, uint32_t num_shards);

/// Table layout shared by every shard of a cluster. The dense parameters,
/// when configured, are flattened and split into `dense_partitions`
/// contiguous slices; shard i holds slice i.
struct ShardConfig {
  std::map<uint32_t, TableConfig> tables;
  std::optional<DeepFMConfig> dense;
  uint64_t dense_seed = 1;
  uint32_t dense_partitions = 1;
};

/// Serving shards take the training layout with admission disabled; synced
/// keys are always accepted. TTL is kept so serving eviction mirrors training.
ShardConfig serving_config(const ShardConfig& training);

/// Half-open range [offset, offset + size) of the flattened dense vector.
struct DenseRange {
  uint64_t offset = 0;
  uint64_t size = 0;
  friend bool operator==(const DenseRange&, const DenseRange&) = default;
};

/// Slice of `total` parameters owned by `shard` out of `num_shards`; the
/// first total % num_shards shards take one extra element.
DenseRange dense_range(uint64_t total, uint32_t num_shards, uint32_t shard);

/// One shard's dense parameter slice and its Adam state.
struct DenseSlice {
  uint64_t offset = 0;
  Eigen::VectorXf values;
  Eigen::VectorXf first_moment;
  Eigen::VectorXf second_moment;
  int64_t step = 0;

  DenseRange range() const { return {offset, static_cast<uint64_t>(values.size())}; }
  friend bool operator==(const DenseSlice& a, const DenseSlice& b) {
    return a.offset == b.offset && a.step == b.step && a.values == b.values &&
           a.first_moment == b.first_moment && a.second_moment == b.second_moment;
  }
};

/// One parameter-server shard.
///
/// `version` counts applied update batches (training) or applied sync
/// packets (serving). Each table has its own reader/writer lock; the dense
/// slice is replaced as a whole under a mutex.
class PSShard {
 public:
  PSShard(uint32_t index, Role role, ShardConfig config);

  uint32_t index() const noexcept { return index_; }
  Role role() const noexcept { return role_; }
  const ShardConfig& config() const noexcept { return config_; }

  uint64_t version() const noexcept { return version_; }
  void set_version(uint64_t v) noexcept { version_ = v; }
  void bump_version() noexcept { ++version_; }

  /// Latest event time this shard has seen.
  Timestamp clock() const noexcept { return clock_; }
  void advance_clock(Timestamp now) noexcept { clock_ = std::max(clock_, now); }

  bool has_table(uint32_t table_id) const { return tables_.contains(table_id); }
  EmbeddingTable& table(uint32_t table_id);
  const EmbeddingTable& table(uint32_t table_id) const;
  std::vector<uint32_t> table_ids() const;
  void replace_table(std::unique_ptr<EmbeddingTable> table);

  bool lookup(const FeatureKey& key, Eigen::Ref<Eigen::VectorXf> out) const;
  bool lookup_or_admit(const FeatureKey& key, Timestamp now, Eigen::Ref<Eigen::VectorXf> out);

  /// Adagrad update; the key is marked touched when it was applied.
  /// Serving shards never originate gradients (ContractViolation).
  bool apply_gradient(const FeatureKey& key, const Eigen::Ref<const Eigen::VectorXf>& grad,
                      float lr, Timestamp now);

  TouchedKeys& touched() noexcept { return touched_; }

  size_t evict_expired(Timestamp now);
  size_t key_count() const;

  bool owns_dense() const noexcept { return config_.dense.has_value(); }
  /// The range this shard owns (ContractViolation if there is no dense model).
  DenseRange dense_range() const;
  /// Copy of the dense slice (ContractViolation if this shard has none).
  DenseSlice dense() const;
  std::shared_ptr<const DenseSlice> dense_ptr() const;
  /// Swaps the slice whole; its range must match dense_range().
  void replace_dense(DenseSlice slice);
  /// One Adam step on this shard's slice. `grad` covers the slice only.
  void apply_dense_gradient(const Eigen::Ref<const Eigen::VectorXf>& grad,
                            const AdamOptions& options);

  /// Highest sync packet version applied from `source` (0 if none).
  uint64_t applied_version(uint32_t source) const;
  void set_applied_version(uint32_t source, uint64_t version);
  const std::map<uint32_t, uint64_t>& applied_versions() const noexcept { return applied_; }

 private:
  uint32_t index_;
  Role role_;
  ShardConfig config_;
  uint64_t version_ = 0;
  Timestamp clock_ = 0;
  std::map<uint32_t, std::unique_ptr<EmbeddingTable>> tables_;
  TouchedKeys touched_;
  mutable std::mutex dense_mu_;
  std::shared_ptr<const DenseSlice> dense_;
  std::map<uint32_t, uint64_t> applied_;
};

/// Deep comparison of stored state: key sets, vectors, accumulators,
/// timestamps, dense slice and version.
bool same_state(const PSShard& a, const PSShard& b);

/// Dense slice byte form: offset u64, element count u32, f32 values; when
/// `with_optimizer`, the first and second moments (f32 each) and the Adam
/// step as i64 follow. Reading checks the stored range against `expected`.
std::vector<uint8_t> serialize_dense(const DenseSlice& slice, bool with_optimizer);
DenseSlice deserialize_dense(std::span<const uint8_t> bytes, DenseRange expected,
                             bool with_optimizer);

/// A fixed set of shards of one role.
class Cluster {
 public:
  Cluster(uint32_t num_shards, Role role, ShardConfig config);

  uint32_t num_shards() const noexcept { return static_cast<uint32_t>(shards_.size()); }
  Role role() const noexcept { return role_; }
  const ShardConfig& config() const noexcept { return config_; }

  PSShard& shard(uint32_t i) { return *shards_.at(i); }
  const PSShard& shard(uint32_t i) const { return *shards_.at(i); }
  PSShard& shard_for(const FeatureKey& key) { return shard(partition(key, num_shards()).index); }
  const PSShard& shard_for(const FeatureKey& key) const {
    return shard(partition(key, num_shards()).index);
  }

  /// Dense parameters assembled from every shard's slice.
  DenseParams<float> dense_params() const;
  /// Splits a full flattened gradient by slice and applies one Adam step on
  /// every shard.
  void apply_dense_gradient(const Eigen::Ref<const Eigen::VectorXf>& flat,
                            const AdamOptions& options);

  /// Swaps in a new shard object (used by recovery).
  void replace_shard(uint32_t i, std::unique_ptr<PSShard> s);

  size_t evict_expired(Timestamp now);

 private:
  Role role_;
  ShardConfig config_;
  std::vector<std::unique_ptr<PSShard>> shards_;
};

}  // namespace freshrec
