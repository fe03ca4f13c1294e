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
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "freshrec/adam.h"
#include "freshrec/core.h"
#include "freshrec/datasets.h"
#include "freshrec/deepfm.h"
#include "freshrec/ps.h"
#include "freshrec/snapshot.h"
#include "freshrec/sync.h"

namespace freshrec {

/// How sparse ids reach the embedding tables.
enum class EmbeddingMode {
  kCollisionless,  // the raw id is the key
  kHashed,         // md5_reduce into hash_space, then a quotient/remainder pair
};

// Table-id layout. Slot s owns four tables; the hashed mode uses all four,
// the collisionless mode only the first two.
inline constexpr uint32_t kLinearTableBit = 0x8000;
inline constexpr uint32_t kRemainderTableBit = 0x4000;

struct TrainerConfig {
  DeepFMConfig model;
  /// Template for every slot's embedding table; dim is taken from the model.
  TableConfig table;
  uint32_t ps_shards = 1;
  size_t batch_size = 256;
  float sparse_lr = 0.05f;
  AdamOptions dense;
  EmbeddingMode embedding = EmbeddingMode::kCollisionless;
  uint64_t hash_space = uint64_t{1} << 16;
  uint64_t modulus = 256;  // power of two
  uint64_t seed = 1;

  void validate() const;
  ShardConfig shard_config() const;
};

struct TrainStats {
  size_t examples = 0;
  std::vector<double> batch_losses;  // mean log loss per mini-batch, pre-update

  double mean_loss() const;
};

struct Evaluation {
  size_t examples = 0;
  size_t positives = 0;
  double auc = std::numeric_limits<double>::quiet_NaN();  // NaN when single-class
  double log_loss = std::numeric_limits<double>::quiet_NaN();

  bool auc_defined() const { return auc == auc; }
};

/// Wires a DeepFM model to a training and a serving cluster. Training lookups
/// go through admission; serving and evaluation lookups never admit, and a
/// missing id contributes zeros.
class Trainer {
 public:
  explicit Trainer(TrainerConfig config);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const TrainerConfig& config() const noexcept { return config_; }
  Cluster& training() noexcept { return training_; }
  Cluster& serving() noexcept { return serving_; }
  const Cluster& training() const noexcept { return training_; }
  const Cluster& serving() const noexcept { return serving_; }
  const Synchronizer& synchronizer() const noexcept { return sync_; }

  /// One pass in mini-batches.
  TrainStats train(std::span<const Example> examples);

  std::vector<float> predict(std::span<const Example> examples, Role params) const;
  Evaluation evaluate(std::span<const Example> examples, Role params) const;

  SyncStats sync(SyncAction action);

  /// Drops rows idle for longer than their table's TTL from both clusters,
  /// at the training clock. Tables with ttl 0 are untouched.
  size_t evict_expired();

  /// Latest example timestamp trained on.
  Timestamp clock() const noexcept { return clock_; }

  /// Storage keys for one (slot, raw id): one in collisionless mode, a
  /// quotient and a remainder key in hashed mode.
  std::vector<FeatureKey> embedding_keys(uint32_t slot, uint64_t id) const;

 private:
  struct Gathered;
  Gathered gather(std::span<const Example> batch, Role params, bool admit);
  Gathered gather_const(std::span<const Example> batch, Role params) const;
  void train_batch(std::span<const Example> batch, TrainStats& stats);
  uint64_t reduce(uint64_t id) const;

  TrainerConfig config_;
  Cluster training_;
  Cluster serving_;
  Synchronizer sync_;
  Timestamp clock_ = std::numeric_limits<Timestamp>::min();
  mutable std::unordered_map<uint64_t, uint64_t> reduce_cache_;
};

/// Mean of the defined entries; NaN when none are defined.
double mean_defined(std::span<const double> values);
/// Sample standard deviation of the defined entries.
double sample_std(std::span<const double> values);

// --- Simulated online training ----------------------------------------------

enum class OnlineStage { kSync, kEvaluate, kTrain };

struct OnlineOptions {
  /// Sync schedule in units of online shards. Step 0 always ships everything.
  SyncSchedule schedule;
  /// False gives the frozen-batch arm: one sync after the batch phase only.
  bool keep_syncing = true;
  /// Called before the sync of online shard i.
  std::function<void(size_t i, Trainer&)> before_shard;
  /// Sees every stage in execution order.
  std::function<void(OnlineStage, size_t i)> observer;
};

struct ShardResult {
  size_t shard = 0;
  Evaluation eval;
  uint64_t packet_bytes = 0;
  size_t examples_seen = 0;  // trained before this shard's evaluation
  size_t evicted = 0;        // rows expired after training on this shard
};

struct OnlineResult {
  TrainStats batch;
  std::vector<ShardResult> shards;

  std::vector<double> aucs() const;
  double mean_auc() const;
};

/// Batch-trains on `batch_data`, then for each online shard i: sync training
/// to serving, evaluate serving parameters on shard i, train on shard i.
OnlineResult online_train_simulated(Trainer& trainer, std::span<const Example> batch_data,
                                    std::span<const std::span<const Example>> online_shards,
                                    const OnlineOptions& options = {});

/// First `batch_fraction` of the stream, and the remainder.
std::pair<std::span<const Example>, std::span<const Example>> split_batch_online(
    std::span<const Example> examples, double batch_fraction);

// --- Experiments ------------------------------------------------------------

struct MetricsRow {
  std::string experiment;
  std::string arm;
  uint64_t seed = 0;
  size_t step = 0;  // epoch or online shard index
  double auc = 0;
  double log_loss = 0;
  size_t examples_seen = 0;
  uint64_t packet_bytes = 0;
  double wall_seconds = 0;
};

/// Header plus one line per row. Wall time is left out so that a rerun with
/// the same seed produces an identical file.
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows);

struct CollisionConfig {
  TrainerConfig trainer;  // embedding mode is set per arm
  size_t epochs = 5;
  double test_fraction = 0.2;
};

struct CollisionEpoch {
  size_t epoch = 0;
  Evaluation collisionless;
  Evaluation hashed;
};

struct CollisionResult {
  std::vector<CollisionEpoch> epochs;
  std::vector<CollisionStats> slot_collisions;  // md5_reduce into hash_space, per slot
  std::vector<MetricsRow> rows;
};

/// Trains both arms from the same seed on the chronological head of the data
/// and evaluates training parameters on the held-out tail after every epoch.
CollisionResult collision_experiment(std::span<const Example> examples, const CollisionConfig& config);

struct SweepConfig {
  TrainerConfig trainer;
  std::vector<size_t> shard_counts{10, 50, 100};
  std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
  double batch_fraction = 5.0 / 7.0;
  SyncSchedule schedule;
};

struct SweepPoint {
  size_t num_shards = 0;
  std::vector<double> seed_means;  // mean online AUC per seed
  double mean = 0;
  double std = 0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  double pooled_std = 0;  // root mean of the per-point variances
  std::vector<MetricsRow> rows;
};

SweepResult sync_interval_sweep(std::span<const Example> examples, const SweepConfig& config);

struct FreshnessConfig {
  TrainerConfig trainer;
  size_t num_shards = 10;
  double batch_fraction = 5.0 / 7.0;
  SyncSchedule schedule;  // online arm only
};

struct FreshnessResult {
  std::vector<double> online_auc;
  std::vector<double> frozen_auc;
  double online_win_fraction = 0;  // shards where online > frozen
  double mean_difference = 0;      // mean(online) - mean(frozen)
  double pooled_std = 0;           // pooled std of the per-shard AUCs
  std::vector<MetricsRow> rows;
};

/// Online arm versus the frozen-batch arm on identical data and seed.
FreshnessResult online_vs_batch(std::span<const Example> examples, const FreshnessConfig& config);

struct ReliabilityConfig {
  TrainerConfig trainer;
  size_t num_shards = 20;          // online data shards
  size_t snapshot_every = 1;       // in online shards; 0 disables snapshots
  std::optional<FailurePlan> failure;  // at_step is an online shard index
  double batch_fraction = 5.0 / 7.0;
  double final_fraction = 0.25;    // tail of online shards scored for the final AUC
  SyncSchedule schedule;
  std::filesystem::path snapshot_root;  // empty: a private temp directory
};

struct ReliabilityResult {
  double baseline_auc = 0;
  double failure_auc = 0;
  double degradation = 0;  // baseline - failure
  std::optional<FailureReport> report;
  std::vector<MetricsRow> rows;
};

/// Paired runs with identical seeds; only the second injects the failure.
ReliabilityResult reliability_experiment(std::span<const Example> examples,
                                         const ReliabilityConfig& config);

}  // namespace freshrec
