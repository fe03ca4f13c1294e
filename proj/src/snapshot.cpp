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

#include "freshrec/snapshot.h"

#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "freshrec/binary_io.h"

namespace freshrec {
namespace fs = std::filesystem;

namespace {

constexpr const char* kDenseFile = "dense.bin";

std::string table_file(uint32_t table_id) { return "table_" + std::to_string(table_id) + ".bin"; }

std::string hex16(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

ManifestFile write_checked(const fs::path& dir, const std::string& name,
                           const std::vector<uint8_t>& bytes) {
  write_file_bytes((dir / name).string(), bytes);
  return {name, bytes.size(), checksum_bytes(bytes)};
}

std::vector<uint8_t> read_verified(const fs::path& dir, const ManifestFile& f) {
  const fs::path p = dir / f.name;
  if (!fs::exists(p)) throw RecoveryError("snapshot file missing: " + p.string());
  auto bytes = read_file_bytes(p.string());
  if (bytes.size() != f.length) {
    throw RecoveryError("snapshot file " + p.string() + " has length " +
                        std::to_string(bytes.size()) + ", manifest says " +
                        std::to_string(f.length));
  }
  if (checksum_bytes(bytes) != f.checksum) {
    throw RecoveryError("checksum mismatch in snapshot file " + p.string());
  }
  return bytes;
}

}  // namespace

uint64_t checksum_bytes(std::span<const uint8_t> bytes) { return fnv1a64(bytes); }

fs::path shard_directory(const fs::path& root, uint32_t shard) {
  return root / ("shard_" + std::to_string(shard));
}

SnapshotManifest snapshot(const PSShard& shard, const fs::path& root,
                          std::optional<Timestamp> timestamp) {
  SnapshotManifest m;
  m.shard = shard.index();
  m.version = shard.version();
  m.timestamp = timestamp.value_or(shard.clock());

  const fs::path parent = shard_directory(root, shard.index());
  const fs::path final_dir = parent / ("v" + std::to_string(m.version));
  const fs::path tmp_dir = parent / ("v" + std::to_string(m.version) + ".tmp");
  fs::create_directories(parent);
  fs::remove_all(tmp_dir);
  fs::create_directories(tmp_dir);
  try {
    for (uint32_t id : shard.table_ids()) {
      m.files.push_back(write_checked(tmp_dir, table_file(id), shard.table(id).serialize()));
    }
    if (shard.owns_dense()) {
      m.files.push_back(write_checked(tmp_dir, kDenseFile, serialize_dense(shard.dense(), true)));
    }
    std::ostringstream text;
    text << "shard=" << m.shard << "\nversion=" << m.version << "\ntimestamp=" << m.timestamp
         << "\n";
    for (const auto& f : m.files) text << f.name << ' ' << f.length << ' ' << hex16(f.checksum) << "\n";
    const std::string s = text.str();
    write_file_bytes((tmp_dir / "manifest").string(),
                     std::span(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
    fs::remove_all(final_dir);
    fs::rename(tmp_dir, final_dir);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp_dir, ec);
    throw;
  }
  m.directory = final_dir;
  return m;
}

SnapshotManifest read_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw RecoveryError("snapshot manifest missing: " + manifest_path.string());
  SnapshotManifest m;
  m.directory = manifest_path.parent_path();
  std::string line;
  int header_fields = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    try {
      if (eq != std::string::npos) {
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "shard") m.shard = static_cast<uint32_t>(std::stoul(value));
        else if (key == "version") m.version = std::stoull(value);
        else if (key == "timestamp") m.timestamp = std::stoll(value);
        else throw RecoveryError("unknown manifest key '" + key + "'");
        ++header_fields;
        continue;
      }
      std::istringstream fields(line);
      ManifestFile f;
      std::string checksum;
      if (!(fields >> f.name >> f.length >> checksum)) throw std::invalid_argument(line);
      f.checksum = std::stoull(checksum, nullptr, 16);
      m.files.push_back(std::move(f));
    } catch (const std::logic_error&) {
      throw RecoveryError("malformed manifest line in " + manifest_path.string() + ": " + line);
    }
  }
  if (header_fields != 3) {
    throw RecoveryError("manifest " + manifest_path.string() + " lacks shard/version/timestamp");
  }
  return m;
}

std::unique_ptr<PSShard> restore(const fs::path& manifest_path, const ShardConfig& config,
                                 Role role) {
  const SnapshotManifest m = read_manifest(manifest_path);
  auto shard = std::make_unique<PSShard>(m.shard, role, config);
  bool saw_dense = false;
  for (const auto& f : m.files) {
    auto bytes = read_verified(m.directory, f);
    if (f.name == kDenseFile) {
      if (!config.dense) throw RecoveryError("snapshot has a dense slice the config lacks");
      try {
        shard->replace_dense(deserialize_dense(bytes, shard->dense_range(), true));
      } catch (const RecoveryError& e) {
        throw RecoveryError(f.name + ": " + e.what());
      }
      saw_dense = true;
      continue;
    }
    uint32_t table_id = 0;
    if (std::sscanf(f.name.c_str(), "table_%u.bin", &table_id) != 1) {
      throw RecoveryError("unexpected snapshot file " + f.name);
    }
    auto it = config.tables.find(table_id);
    if (it == config.tables.end()) {
      throw RecoveryError("snapshot file " + f.name + " names a table the config lacks");
    }
    try {
      shard->replace_table(EmbeddingTable::deserialize(bytes, it->second));
    } catch (const RecoveryError& e) {
      throw RecoveryError(f.name + ": " + e.what());
    }
  }
  if (config.dense && !saw_dense) throw RecoveryError("snapshot lacks " + std::string(kDenseFile));
  shard->set_version(m.version);
  shard->advance_clock(m.timestamp);
  return shard;
}

std::optional<fs::path> latest_snapshot(const fs::path& root, uint32_t shard) {
  const fs::path dir = shard_directory(root, shard);
  if (!fs::exists(dir)) return std::nullopt;
  std::optional<uint64_t> best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() < 2 || name[0] != 'v' || name.find('.') != std::string::npos) continue;
    if (!fs::exists(entry.path() / "manifest")) continue;
    try {
      const uint64_t v = std::stoull(name.substr(1));
      if (!best || v > *best) best = v;
    } catch (const std::logic_error&) {
    }
  }
  if (!best) return std::nullopt;
  return dir / ("v" + std::to_string(*best)) / "manifest";
}

FailureReport inject_failure(Cluster& cluster, uint32_t shard, const fs::path& root) {
  FailureReport report;
  report.shard = shard;
  const PSShard& live = cluster.shard(shard);
  report.version_before = live.version();
  report.keys_before = live.key_count();
  const ShardConfig config = live.config();
  std::unique_ptr<PSShard> replacement;
  if (auto manifest = latest_snapshot(root, shard)) {
    replacement = restore(*manifest, config, cluster.role());
    report.restored = true;
  } else {
    replacement = std::make_unique<PSShard>(shard, cluster.role(), config);
  }
  report.version_after = replacement->version();
  report.keys_after = replacement->key_count();
  cluster.replace_shard(shard, std::move(replacement));
  return report;
}

FeedbackLoss expected_feedback_loss(uint32_t num_shards, double daily_failure_rate, uint64_t dau,
                                    double snapshot_interval_days) {
  if (num_shards == 0) throw ContractViolation("expected_feedback_loss: zero shards");
  if (daily_failure_rate < 0 || daily_failure_rate > 1) {
    throw ContractViolation("expected_feedback_loss: failure rate must be in [0, 1]");
  }
  FeedbackLoss out;
  out.failures_per_day = num_shards * daily_failure_rate;
  out.users_per_failure = static_cast<double>(dau) / num_shards;
  out.feedback_days_per_failure = snapshot_interval_days;
  out.mean_days_between_failures = out.failures_per_day > 0
                                       ? 1.0 / out.failures_per_day
                                       : std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace freshrec
