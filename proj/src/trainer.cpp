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

#include "freshrec/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>

#include "freshrec/id_decomposition.h"
#include "freshrec/metrics.h"

namespace freshrec {
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool is_pow2(uint64_t x) { return x && !(x & (x - 1)); }

double batch_log_loss(const RowVector<float>& probabilities, std::span<const int> labels) {
  double total = 0;
  for (size_t b = 0; b < labels.size(); ++b)
    total += log_loss(static_cast<double>(probabilities[static_cast<Eigen::Index>(b)]), labels[b]);
  return total;
}

}  // namespace

// --- TrainerConfig ----------------------------------------------------------

void TrainerConfig::validate() const {
  freshrec::validate(model);
  TableConfig t = table;
  t.dim = model.dim;
  freshrec::validate(t);
  if (ps_shards == 0) throw ContractViolation("trainer: ps_shards must be >= 1");
  if (batch_size == 0) throw ContractViolation("trainer: batch_size must be >= 1");
  if (!(sparse_lr > 0)) throw ContractViolation("trainer: sparse_lr must be > 0");
  if (!(dense.learning_rate > 0)) throw ContractViolation("trainer: dense learning rate must be > 0");
  if (static_cast<uint32_t>(model.num_slots) >= kRemainderTableBit) throw ContractViolation("trainer: too many slots");
  if (embedding == EmbeddingMode::kHashed) {
    if (hash_space == 0) throw ContractViolation("trainer: hash_space must be >= 1");
    if (!is_pow2(modulus)) throw ContractViolation("trainer: modulus must be a power of two");
  }
}

ShardConfig TrainerConfig::shard_config() const {
  validate();
  ShardConfig out;
  TableConfig emb = table;
  emb.dim = model.dim;
  emb.init_seed = derive_seed(seed, "embedding");
  TableConfig lin = emb;
  lin.dim = 1;
  lin.admit_threshold = 0;  // admitted together with the embedding it belongs to
  lin.admit_probability = 1.0;
  lin.init_scale = 1e-4f;   // near-zero start for first-order terms
  for (uint32_t s = 0; s < static_cast<uint32_t>(model.num_slots); ++s) {
    out.tables[s] = emb;
    out.tables[s | kLinearTableBit] = lin;
    if (embedding == EmbeddingMode::kHashed) {
      out.tables[s | kRemainderTableBit] = emb;
      out.tables[s | kRemainderTableBit | kLinearTableBit] = lin;
    }
  }
  out.dense = model;
  out.dense_seed = derive_seed(seed, "dense");
  return out;
}

double TrainStats::mean_loss() const {
  if (batch_losses.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0;
  for (double l : batch_losses) total += l;
  return total / static_cast<double>(batch_losses.size());
}

// --- Trainer ----------------------------------------------------------------

struct Trainer::Gathered {
  Matrix<float> embeddings;  // (num_slots*dim) x B
  Matrix<float> linear;      // num_slots x B
  struct Use {
    FeatureKey key;
    Eigen::Index col;
    uint32_t slot;
    bool linear;
  };
  std::vector<Use> uses;     // admitted keys, in gather order
};

Trainer::Trainer(TrainerConfig config)
    : config_(std::move(config)),
      training_(config_.ps_shards, Role::kTraining, config_.shard_config()),
      serving_(config_.ps_shards, Role::kServing, serving_config(config_.shard_config())),
      sync_(training_, serving_) {}

uint64_t Trainer::reduce(uint64_t id) const {
  auto it = reduce_cache_.find(id);
  if (it != reduce_cache_.end()) return it->second;
  const uint64_t h = md5_reduce(id, config_.hash_space);
  reduce_cache_.emplace(id, h);
  return h;
}

std::vector<FeatureKey> Trainer::embedding_keys(uint32_t slot, uint64_t id) const {
  if (config_.embedding == EmbeddingMode::kCollisionless) return {{slot, id}};
  const auto d = decompose_id(reduce(id), config_.modulus);
  return {{slot, d.quotient}, {slot | kRemainderTableBit, d.remainder}};
}

namespace {

void check_example(const Example& ex, int num_slots) {
  if (static_cast<int>(ex.features.size()) != num_slots) {
    throw ContractViolation("example has " + std::to_string(ex.features.size()) +
                            " features, model expects " + std::to_string(num_slots));
  }
  for (int s = 0; s < num_slots; ++s) {
    if (ex.features[static_cast<size_t>(s)].table_id != static_cast<uint32_t>(s)) {
      throw ContractViolation("feature " + std::to_string(s) + " is tagged with slot " +
                              std::to_string(ex.features[static_cast<size_t>(s)].table_id));
    }
  }
}

}  // namespace

Trainer::Gathered Trainer::gather(std::span<const Example> batch, Role params, bool admit) {
  if (!admit) return gather_const(batch, params);
  const auto& m = config_.model;
  Gathered g;
  g.embeddings = Matrix<float>::Zero(m.input_width(), static_cast<Eigen::Index>(batch.size()));
  g.linear = Matrix<float>::Zero(m.num_slots, static_cast<Eigen::Index>(batch.size()));
  Eigen::VectorXf vec(m.dim), scalar(1);
  for (size_t b = 0; b < batch.size(); ++b) {
    const Example& ex = batch[b];
    check_example(ex, m.num_slots);
    const auto col = static_cast<Eigen::Index>(b);
    for (uint32_t s = 0; s < static_cast<uint32_t>(m.num_slots); ++s) {
      for (const FeatureKey& key : embedding_keys(s, ex.features[s].id)) {
        if (!training_.shard_for(key).lookup_or_admit(key, ex.ts, vec)) continue;
        g.embeddings.block(s * m.dim, col, m.dim, 1) += vec;
        g.uses.push_back({key, col, s, false});
        const FeatureKey lin{key.table_id | kLinearTableBit, key.id};
        if (training_.shard_for(lin).lookup_or_admit(lin, ex.ts, scalar)) {
          g.linear(s, col) += scalar[0];
          g.uses.push_back({lin, col, s, true});
        }
      }
    }
  }
  return g;
}

Trainer::Gathered Trainer::gather_const(std::span<const Example> batch, Role params) const {
  const auto& m = config_.model;
  const Cluster& cluster = params == Role::kTraining ? training_ : serving_;
  Gathered g;
  g.embeddings = Matrix<float>::Zero(m.input_width(), static_cast<Eigen::Index>(batch.size()));
  g.linear = Matrix<float>::Zero(m.num_slots, static_cast<Eigen::Index>(batch.size()));
  Eigen::VectorXf vec(m.dim), scalar(1);
  for (size_t b = 0; b < batch.size(); ++b) {
    const Example& ex = batch[b];
    check_example(ex, m.num_slots);
    const auto col = static_cast<Eigen::Index>(b);
    for (uint32_t s = 0; s < static_cast<uint32_t>(m.num_slots); ++s) {
      for (const FeatureKey& key : embedding_keys(s, ex.features[s].id)) {
        if (!cluster.shard_for(key).lookup(key, vec)) continue;
        g.embeddings.block(s * m.dim, col, m.dim, 1) += vec;
        const FeatureKey lin{key.table_id | kLinearTableBit, key.id};
        if (cluster.shard_for(lin).lookup(lin, scalar)) g.linear(s, col) += scalar[0];
      }
    }
  }
  return g;
}

void Trainer::train_batch(std::span<const Example> batch, TrainStats& stats) {
  const auto& m = config_.model;
  Timestamp now = clock_;
  std::vector<int> labels;
  labels.reserve(batch.size());
  for (const auto& ex : batch) {
    labels.push_back(ex.label);
    now = std::max(now, ex.ts);
  }
  clock_ = now;

  Gathered g = gather(batch, Role::kTraining, true);
  const DenseParams<float> dense = training_.dense_params();
  const auto pass = forward<float>(m, dense, g.embeddings, g.linear);
  stats.batch_losses.push_back(batch_log_loss(pass.probabilities, labels) /
                               static_cast<double>(batch.size()));
  stats.examples += batch.size();
  auto grads = backward<float>(m, dense, pass, labels);

  // Dense parameters follow the mean loss; sparse rows take the summed
  // gradient of every example that used them.
  const float inv_batch = 1.0f / static_cast<float>(batch.size());
  training_.apply_dense_gradient(grads.dense.flatten() * inv_batch, config_.dense);

  std::unordered_map<FeatureKey, size_t, FeatureKeyHash> index;
  std::vector<std::pair<FeatureKey, Eigen::VectorXf>> sums;
  for (const auto& use : g.uses) {
    auto [it, fresh] = index.try_emplace(use.key, sums.size());
    if (fresh) sums.emplace_back(use.key, Eigen::VectorXf::Zero(use.linear ? 1 : m.dim));
    auto& acc = sums[it->second].second;
    if (use.linear) acc[0] += grads.linear(use.slot, use.col);
    else acc += grads.embeddings.block(use.slot * m.dim, use.col, m.dim, 1);
  }
  for (const auto& [key, grad] : sums) {
    training_.shard_for(key).apply_gradient(key, grad, config_.sparse_lr, now);
  }
  // Every shard took part through its dense slice.
  for (uint32_t i = 0; i < training_.num_shards(); ++i) training_.shard(i).bump_version();
}

TrainStats Trainer::train(std::span<const Example> examples) {
  TrainStats stats;
  for (size_t start = 0; start < examples.size(); start += config_.batch_size) {
    train_batch(examples.subspan(start, std::min(config_.batch_size, examples.size() - start)), stats);
  }
  return stats;
}

std::vector<float> Trainer::predict(std::span<const Example> examples, Role params) const {
  std::vector<float> out;
  out.reserve(examples.size());
  const Cluster& cluster = params == Role::kTraining ? training_ : serving_;
  const DenseParams<float> dense = cluster.dense_params();
  for (size_t start = 0; start < examples.size(); start += config_.batch_size) {
    const auto batch = examples.subspan(start, std::min(config_.batch_size, examples.size() - start));
    const Gathered g = gather_const(batch, params);
    const auto pass = forward<float>(config_.model, dense, g.embeddings, g.linear);
    for (Eigen::Index b = 0; b < pass.probabilities.size(); ++b) out.push_back(pass.probabilities[b]);
  }
  return out;
}

Evaluation Trainer::evaluate(std::span<const Example> examples, Role params) const {
  Evaluation e;
  e.examples = examples.size();
  if (examples.empty()) return e;
  const auto p = predict(examples, params);
  std::vector<int> labels;
  labels.reserve(examples.size());
  double loss = 0;
  for (size_t i = 0; i < examples.size(); ++i) {
    labels.push_back(examples[i].label);
    e.positives += static_cast<size_t>(examples[i].label);
    loss += log_loss(static_cast<double>(p[i]), examples[i].label);
  }
  e.log_loss = loss / static_cast<double>(examples.size());
  try {
    e.auc = auc(p, labels);
  } catch (const UndefinedMetric&) {
    // single-class slice; auc stays NaN
  }
  return e;
}

SyncStats Trainer::sync(SyncAction action) {
  return sync_.sync(action, clock_ == std::numeric_limits<Timestamp>::min() ? 0 : clock_);
}

size_t Trainer::evict_expired() {
  if (clock_ == std::numeric_limits<Timestamp>::min()) return 0;
  return training_.evict_expired(clock_) + serving_.evict_expired(clock_);
}

double mean_defined(std::span<const double> values) {
  double total = 0;
  size_t n = 0;
  for (double v : values) {
    if (v != v) continue;
    total += v;
    ++n;
  }
  return n ? total / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

double sample_std(std::span<const double> values) {
  const double mean = mean_defined(values);
  double ss = 0;
  size_t n = 0;
  for (double v : values) {
    if (v != v) continue;
    ss += (v - mean) * (v - mean);
    ++n;
  }
  return n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
}

// --- Simulated online training ----------------------------------------------

std::vector<double> OnlineResult::aucs() const {
  std::vector<double> out;
  out.reserve(shards.size());
  for (const auto& s : shards) out.push_back(s.eval.auc);
  return out;
}

double OnlineResult::mean_auc() const {
  const auto a = aucs();
  return mean_defined(a);
}

OnlineResult online_train_simulated(Trainer& trainer, std::span<const Example> batch_data,
                                    std::span<const std::span<const Example>> online_shards,
                                    const OnlineOptions& options) {
  validate(options.schedule);
  auto notify = [&](OnlineStage stage, size_t i) {
    if (options.observer) options.observer(stage, i);
  };
  OnlineResult result;
  result.batch = trainer.train(batch_data);
  size_t seen = result.batch.examples;
  for (size_t i = 0; i < online_shards.size(); ++i) {
    if (options.before_shard) options.before_shard(i, trainer);
    ShardResult r;
    r.shard = i;
    const SyncAction action = i == 0 || options.keep_syncing ? should_sync(i, options.schedule)
                                                             : SyncAction::kNone;
    notify(OnlineStage::kSync, i);
    r.packet_bytes = trainer.sync(action).bytes;
    notify(OnlineStage::kEvaluate, i);
    r.eval = trainer.evaluate(online_shards[i], Role::kServing);
    r.examples_seen = seen;
    notify(OnlineStage::kTrain, i);
    seen += trainer.train(online_shards[i]).examples;
    r.evicted = trainer.evict_expired();
    result.shards.push_back(r);
  }
  return result;
}

std::pair<std::span<const Example>, std::span<const Example>> split_batch_online(
    std::span<const Example> examples, double batch_fraction) {
  if (!(batch_fraction >= 0 && batch_fraction <= 1))
    throw ContractViolation("batch_fraction must be in [0, 1]");
  const auto cut = static_cast<size_t>(std::floor(static_cast<double>(examples.size()) * batch_fraction));
  return {examples.first(cut), examples.subspan(cut)};
}

// --- Experiments ------------------------------------------------------------

void write_metrics_csv(const fs::path& path, std::span<const MetricsRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "experiment,arm,seed,step,auc,log_loss,examples_seen,packet_bytes\n";
  char buf[64];
  auto num = [&](double v) {
    if (v != v) return std::string("nan");
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out << r.experiment << ',' << r.arm << ',' << r.seed << ',' << r.step << ',' << num(r.auc)
        << ',' << num(r.log_loss) << ',' << r.examples_seen << ',' << r.packet_bytes << '\n';
  }
}

namespace {

MetricsRow row_for(std::string experiment, std::string arm, uint64_t seed, const ShardResult& s,
                   double wall) {
  return {std::move(experiment), std::move(arm), seed, s.shard, s.eval.auc, s.eval.log_loss,
          s.examples_seen, s.packet_bytes, wall};
}

}  // namespace

CollisionResult collision_experiment(std::span<const Example> examples, const CollisionConfig& config) {
  if (config.epochs == 0) throw ContractViolation("collision experiment: epochs must be >= 1");
  const auto [train, test] = split_batch_online(examples, 1.0 - config.test_fraction);
  if (train.empty() || test.empty()) throw ContractViolation("collision experiment: empty split");

  CollisionResult result;
  const int slots = config.trainer.model.num_slots;
  for (int s = 0; s < slots; ++s) {
    std::vector<uint64_t> ids;
    ids.reserve(examples.size());
    for (const auto& ex : examples) ids.push_back(ex.features.at(static_cast<size_t>(s)).id);
    result.slot_collisions.push_back(hash_collision_stats(ids, config.trainer.hash_space));
  }

  TrainerConfig exact_cfg = config.trainer, hashed_cfg = config.trainer;
  exact_cfg.embedding = EmbeddingMode::kCollisionless;
  hashed_cfg.embedding = EmbeddingMode::kHashed;
  Trainer exact(exact_cfg), hashed(hashed_cfg);
  const auto start = Clock::now();
  for (size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    CollisionEpoch e{epoch, {}, {}};
    exact.train(train);
    e.collisionless = exact.evaluate(test, Role::kTraining);
    hashed.train(train);
    e.hashed = hashed.evaluate(test, Role::kTraining);
    const double wall = seconds_since(start);
    const size_t seen = epoch * train.size();
    result.rows.push_back({"collision", "collisionless", config.trainer.seed, epoch,
                           e.collisionless.auc, e.collisionless.log_loss, seen, 0, wall});
    result.rows.push_back({"collision", "hashed", config.trainer.seed, epoch, e.hashed.auc,
                           e.hashed.log_loss, seen, 0, wall});
    result.epochs.push_back(e);
  }
  return result;
}

SweepResult sync_interval_sweep(std::span<const Example> examples, const SweepConfig& config) {
  const auto [batch, online] = split_batch_online(examples, config.batch_fraction);
  SweepResult result;
  double variance_sum = 0;
  for (size_t n : config.shard_counts) {
    SweepPoint point;
    point.num_shards = n;
    const auto shards = split_shards(online, n);
    for (uint64_t seed : config.seeds) {
      TrainerConfig tc = config.trainer;
      tc.seed = seed;
      Trainer trainer(tc);
      const auto start = Clock::now();
      OnlineOptions options;
      options.schedule = config.schedule;
      const auto run = online_train_simulated(trainer, batch, shards, options);
      const double wall = seconds_since(start);
      for (const auto& s : run.shards)
        result.rows.push_back(row_for("sweep", "N=" + std::to_string(n), seed, s, wall));
      point.seed_means.push_back(run.mean_auc());
    }
    point.mean = mean_defined(point.seed_means);
    point.std = sample_std(point.seed_means);
    variance_sum += point.std * point.std;
    result.points.push_back(std::move(point));
  }
  if (!result.points.empty())
    result.pooled_std = std::sqrt(variance_sum / static_cast<double>(result.points.size()));
  return result;
}

FreshnessResult online_vs_batch(std::span<const Example> examples, const FreshnessConfig& config) {
  const auto [batch, online] = split_batch_online(examples, config.batch_fraction);
  const auto shards = split_shards(online, config.num_shards);
  FreshnessResult result;
  for (bool keep_syncing : {true, false}) {
    Trainer trainer(config.trainer);
    OnlineOptions options;
    options.keep_syncing = keep_syncing;
    options.schedule = config.schedule;
    const auto start = Clock::now();
    const auto run = online_train_simulated(trainer, batch, shards, options);
    const double wall = seconds_since(start);
    for (const auto& s : run.shards) {
      result.rows.push_back(
          row_for("freshness", keep_syncing ? "online" : "frozen", config.trainer.seed, s, wall));
    }
    (keep_syncing ? result.online_auc : result.frozen_auc) = run.aucs();
  }
  size_t wins = 0, compared = 0;
  for (size_t i = 0; i < shards.size(); ++i) {
    const double a = result.online_auc[i], b = result.frozen_auc[i];
    if (a != a || b != b) continue;
    ++compared;
    if (a > b) ++wins;
  }
  result.online_win_fraction = compared ? static_cast<double>(wins) / static_cast<double>(compared) : 0;
  result.mean_difference = mean_defined(result.online_auc) - mean_defined(result.frozen_auc);
  const double so = sample_std(result.online_auc), sf = sample_std(result.frozen_auc);
  result.pooled_std = std::sqrt((so * so + sf * sf) / 2);
  return result;
}

ReliabilityResult reliability_experiment(std::span<const Example> examples,
                                         const ReliabilityConfig& config) {
  if (config.trainer.ps_shards < 2) throw ContractViolation("reliability experiment needs >= 2 PS shards");
  if (config.failure && config.failure->shard >= config.trainer.ps_shards)
    throw ContractViolation("failure plan names a shard outside the cluster");
  const auto [batch, online] = split_batch_online(examples, config.batch_fraction);
  const auto shards = split_shards(online, config.num_shards);

  const bool own_root = config.snapshot_root.empty();
  const fs::path root = own_root ? fs::temp_directory_path() /
                                       ("freshrec_reliability_" + std::to_string(std::random_device{}()))
                                 : config.snapshot_root;
  const size_t tail = std::max<size_t>(
      1, static_cast<size_t>(std::ceil(config.final_fraction * static_cast<double>(shards.size()))));

  ReliabilityResult result;
  auto final_auc = [&](const OnlineResult& run) {
    const auto a = run.aucs();
    return mean_defined(std::span(a).last(tail));
  };

  for (bool inject : {false, true}) {
    Trainer trainer(config.trainer);
    const fs::path run_root = root / (inject ? "failure" : "baseline");
    OnlineOptions options;
    options.schedule = config.schedule;
    options.before_shard = [&](size_t i, Trainer& t) {
      if (!inject) return;
      if (config.failure && i == config.failure->at_step) {
        result.report = inject_failure(t.training(), config.failure->shard, run_root);
      }
      if (config.snapshot_every && i % config.snapshot_every == 0) {
        for (uint32_t s = 0; s < t.training().num_shards(); ++s) {
          snapshot(t.training().shard(s), run_root, t.clock());
        }
      }
    };
    const auto start = Clock::now();
    const auto run = online_train_simulated(trainer, batch, shards, options);
    const double wall = seconds_since(start);
    for (const auto& s : run.shards) {
      result.rows.push_back(
          row_for("reliability", inject ? "failure" : "baseline", config.trainer.seed, s, wall));
    }
    (inject ? result.failure_auc : result.baseline_auc) = final_auc(run);
  }
  result.degradation = result.baseline_auc - result.failure_auc;
  if (own_root) {
    std::error_code ec;
    fs::remove_all(root, ec);
  }
  return result;
}

}  // namespace freshrec
