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
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "freshrec/core.h"

namespace freshrec {

/// Features logged at serving time, keyed by a per-request unique key.
struct FeatureLog {
  uint64_t request_key = 0;
  std::vector<FeatureKey> features;
  Timestamp ts = 0;

  friend bool operator==(const FeatureLog&, const FeatureLog&) = default;
};

enum class ActionKind { kNegative = 0, kPositive = 1 };

struct ActionLog {
  uint64_t request_key = 0;
  ActionKind action = ActionKind::kNegative;
  Timestamp ts = 0;

  friend bool operator==(const ActionLog&, const ActionLog&) = default;
};

struct JoinedExample {
  std::vector<FeatureKey> features;
  int label = 0;
  Timestamp ts = 0;
  bool sampled = false;  // survived negative sampling at rate < 1

  Example to_example() const { return {features, label, ts}; }
  friend bool operator==(const JoinedExample&, const JoinedExample&) = default;
};

enum class TimeoutPolicy { kDrop, kEmitNegative };

struct JoinerConfig {
  Timestamp memory_window = 300;  // seconds a feature stays in memory
  Timestamp disk_ttl = 86400;     // seconds a feature may wait in total
  Timestamp action_wait = -1;     // early-action buffer; negative = memory_window
  double negative_rate = 1.0;     // keep probability for label-0 examples
  TimeoutPolicy timeout_policy = TimeoutPolicy::kDrop;
  std::filesystem::path spill_path;  // empty: private temp file
  size_t compact_min_dead = 4096;
  uint64_t seed = 1;
};

void validate(const JoinerConfig& config);

struct JoinerCounters {
  uint64_t features = 0;
  uint64_t actions = 0;
  uint64_t joins = 0;
  uint64_t disk_hits = 0;
  uint64_t spilled = 0;
  uint64_t duplicate_features = 0;
  uint64_t duplicate_actions = 0;
  uint64_t action_misses = 0;      // buffered actions that never found features
  uint64_t timeouts_dropped = 0;
  uint64_t timeouts_negative = 0;
  uint64_t sampled_out = 0;
  uint64_t compactions = 0;
};

/// Append-only on-disk key-value store for features that outlived the
/// memory window. An in-memory index maps request key to file offset;
/// compaction rewrites only live records.
class SpillStore {
 public:
  explicit SpillStore(std::filesystem::path path);
  ~SpillStore();
  SpillStore(const SpillStore&) = delete;
  SpillStore& operator=(const SpillStore&) = delete;

  void put(const FeatureLog& log);
  std::optional<FeatureLog> get(uint64_t request_key);
  bool erase(uint64_t request_key);
  bool contains(uint64_t request_key) const { return index_.contains(request_key); }

  /// Live entries with ts < `cutoff`, oldest first.
  std::vector<uint64_t> older_than(Timestamp cutoff) const;

  size_t live() const noexcept { return index_.size(); }
  size_t dead() const noexcept { return dead_; }
  void compact();
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  struct Slot {
    uint64_t offset;
    Timestamp ts;
  };
  void open_fresh();
  FeatureLog read_at(uint64_t offset);

  std::filesystem::path path_;
  std::fstream file_;
  uint64_t end_ = 0;
  size_t dead_ = 0;
  std::unordered_map<uint64_t, Slot> index_;
  std::multimap<Timestamp, uint64_t> by_ts_;
};

/// Event-time stream joiner pairing feature logs with action logs by
/// request key. Features wait in memory for `memory_window`, then on disk
/// until `disk_ttl`; actions that arrive first wait `action_wait` for their
/// features. The event-time watermark is the largest timestamp seen.
class Joiner {
 public:
  explicit Joiner(JoinerConfig config);

  /// Stores the feature (latest wins on duplicates). Joins immediately when
  /// a buffered action is waiting for it.
  std::optional<JoinedExample> ingest_feature(FeatureLog log);

  /// Looks in memory, then on disk. On a miss the action is buffered.
  std::optional<JoinedExample> ingest_action(const ActionLog& log, Timestamp now);

  /// Spills, finalizes timed-out features per the timeout policy, drops
  /// stale buffered actions and compacts the spill file when worthwhile.
  std::vector<JoinedExample> flush_expired(Timestamp now);

  size_t memory_pending() const noexcept { return memory_.size(); }
  size_t disk_pending() const noexcept { return disk_.live(); }
  size_t buffered_actions() const noexcept { return actions_.size(); }
  Timestamp watermark() const noexcept { return watermark_; }
  const JoinerCounters& counters() const noexcept { return counters_; }
  const JoinerConfig& config() const noexcept { return config_; }

 private:
  void advance(Timestamp now);
  void spill_expired();
  void remove_from_memory(uint64_t key);
  std::optional<JoinedExample> emit(std::vector<FeatureKey> features, ActionKind action,
                                    Timestamp ts);

  JoinerConfig config_;
  Timestamp action_wait_;
  Timestamp watermark_ = std::numeric_limits<Timestamp>::min();
  std::unordered_map<uint64_t, FeatureLog> memory_;
  std::multimap<Timestamp, uint64_t> memory_by_ts_;
  SpillStore disk_;
  std::unordered_map<uint64_t, ActionLog> actions_;
  std::multimap<Timestamp, uint64_t> actions_by_ts_;
  std::unordered_map<uint64_t, Timestamp> joined_;  // for duplicate detection
  std::multimap<Timestamp, uint64_t> joined_by_ts_;
  std::mt19937_64 rng_;
  JoinerCounters counters_;
};

/// Keeps every positive; keeps a negative with probability `rate`. Kept
/// examples are flagged `sampled` when rate < 1.
std::optional<JoinedExample> negative_sample(JoinedExample example, double rate,
                                             std::mt19937_64& rng);

/// Undoes negative sampling at serving time: p / (p + (1 - p) / rate).
double log_odds_correct(double p, double rate);

// Text record format, tab-separated, one record per line:
//   F <request_key> <ts> <slot:id,...>
//   A <request_key> <ts> <0|1>
//   E <ts> <label> <slot:id,...>
using StreamRecord = std::variant<FeatureLog, ActionLog, JoinedExample>;

/// Throws ContractViolation on malformed input.
StreamRecord parse_record(const std::string& line);
std::string format_record(const FeatureLog& log);
std::string format_record(const ActionLog& log);
std::string format_record(const JoinedExample& example);
std::string format_features(const std::vector<FeatureKey>& features);
std::vector<FeatureKey> parse_features(const std::string& field);

}  // namespace freshrec
