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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "freshrec/ps.h"

namespace freshrec {

struct ManifestFile {
  std::string name;
  uint64_t length = 0;
  uint64_t checksum = 0;

  friend bool operator==(const ManifestFile&, const ManifestFile&) = default;
};

/// Durable description of one shard checkpoint. On disk this is the plain
/// text file `<root>/shard_<i>/v<version>/manifest`:
///
///   shard=<i>
///   version=<v>
///   timestamp=<t>
///   <file name> <byte length> <checksum as 16 hex digits>
///   ...
struct SnapshotManifest {
  uint32_t shard = 0;
  uint64_t version = 0;
  Timestamp timestamp = 0;
  std::vector<ManifestFile> files;
  std::filesystem::path directory;
};

/// 64-bit FNV-1a over a file's bytes.
uint64_t checksum_bytes(std::span<const uint8_t> bytes);

std::filesystem::path shard_directory(const std::filesystem::path& root, uint32_t shard);

/// Writes every table and the dense slice (if any) of `shard`, then the
/// manifest. Files land in a temporary directory that is renamed into place
/// only after all writes succeed, so an I/O failure leaves earlier
/// snapshots untouched. Tables are serialized one at a time, each under its
/// own read lock. `timestamp` defaults to the shard's event clock.
SnapshotManifest snapshot(const PSShard& shard, const std::filesystem::path& root,
                          std::optional<Timestamp> timestamp = std::nullopt);

SnapshotManifest read_manifest(const std::filesystem::path& manifest_path);

/// Rebuilds a shard from a manifest. Throws RecoveryError naming the file on
/// a missing file, length mismatch or checksum mismatch.
std::unique_ptr<PSShard> restore(const std::filesystem::path& manifest_path,
                                 const ShardConfig& config, Role role);

/// Manifest of the highest-versioned complete snapshot of `shard`, if any.
std::optional<std::filesystem::path> latest_snapshot(const std::filesystem::path& root,
                                                     uint32_t shard);

struct FailureReport {
  uint32_t shard = 0;
  bool restored = false;           // false: no snapshot, shard reset empty
  uint64_t version_before = 0;
  uint64_t version_after = 0;
  size_t keys_before = 0;
  size_t keys_after = 0;

  uint64_t lost_updates() const { return version_before - version_after; }
};

/// Discards the live state of `cluster.shard(shard)` and replaces it with its
/// latest snapshot under `root`, or with an empty shard when none exists.
FailureReport inject_failure(Cluster& cluster, uint32_t shard, const std::filesystem::path& root);

/// When to fail which shard in an experiment run.
struct FailurePlan {
  uint32_t shard = 0;
  uint64_t at_step = 0;
};

/// Back-of-envelope cost of training-PS failures under daily snapshots.
struct FeedbackLoss {
  double failures_per_day = 0;
  double users_per_failure = 0;          // users whose ids live on the failed shard
  double feedback_days_per_failure = 0;  // updates lost back to the last snapshot
  double mean_days_between_failures = 0; // +inf when the rate is 0
};

FeedbackLoss expected_feedback_loss(uint32_t num_shards, double daily_failure_rate, uint64_t dau,
                                    double snapshot_interval_days);

}  // namespace freshrec
