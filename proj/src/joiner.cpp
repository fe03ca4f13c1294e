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

#include "freshrec/joiner.h"

#include <atomic>
#include <charconv>
#include <sstream>

#include "freshrec/binary_io.h"

namespace freshrec {
namespace fs = std::filesystem;

namespace {

fs::path private_spill_path(uint64_t seed) {
  static std::atomic<uint64_t> counter{0};
  std::random_device rd;
  return fs::temp_directory_path() /
         ("freshrec_spill_" + std::to_string(seed) + "_" + std::to_string(rd()) + "_" +
          std::to_string(counter++) + ".log");
}

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

void validate(const JoinerConfig& c) {
  if (c.memory_window < 0) throw ContractViolation("joiner: memory_window must be >= 0");
  if (c.disk_ttl < c.memory_window) throw ContractViolation("joiner: disk_ttl must be >= memory_window");
  if (!(c.negative_rate > 0.0 && c.negative_rate <= 1.0))
    throw ContractViolation("joiner: negative_rate must be in (0, 1]");
}

// --- SpillStore ------------------------------------------------------------

SpillStore::SpillStore(fs::path path) : path_(std::move(path)) { open_fresh(); }

SpillStore::~SpillStore() {
  file_.close();
  std::error_code ec;
  fs::remove(path_, ec);
}

void SpillStore::open_fresh() {
  file_.close();
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  file_.open(path_, std::ios::in | std::ios::out | std::ios::binary | std::ios::trunc);
  if (!file_) throw std::runtime_error("cannot open spill file " + path_.string());
  end_ = 0;
  dead_ = 0;
}

void SpillStore::put(const FeatureLog& log) {
  erase(log.request_key);  // an older record becomes dead space until compaction
  ByteWriter w;
  w.u32(0);
  w.u64(log.request_key);
  w.i64(log.ts);
  w.u32(static_cast<uint32_t>(log.features.size()));
  for (const auto& f : log.features) {
    w.u32(f.table_id);
    w.u64(f.id);
  }
  w.patch_u32(0, static_cast<uint32_t>(w.size() - 4));
  file_.clear();
  file_.seekp(static_cast<std::streamoff>(end_));
  file_.write(reinterpret_cast<const char*>(w.data().data()),
              static_cast<std::streamsize>(w.size()));
  file_.flush();
  if (!file_) throw std::runtime_error("spill write failed: " + path_.string());
  index_[log.request_key] = {end_, log.ts};
  by_ts_.emplace(log.ts, log.request_key);
  end_ += w.size();
}

FeatureLog SpillStore::read_at(uint64_t offset) {
  file_.clear();
  file_.seekg(static_cast<std::streamoff>(offset));
  uint8_t len_bytes[4];
  file_.read(reinterpret_cast<char*>(len_bytes), 4);
  const uint32_t len = ByteReader(len_bytes).u32();
  std::vector<uint8_t> body(len);
  file_.read(reinterpret_cast<char*>(body.data()), len);
  if (!file_) throw RecoveryError("spill read failed at offset " + std::to_string(offset));
  ByteReader r(body);
  FeatureLog log;
  log.request_key = r.u64();
  log.ts = r.i64();
  const uint32_t n = r.u32();
  log.features.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    const uint32_t table = r.u32();
    log.features.push_back({table, r.u64()});
  }
  return log;
}

std::optional<FeatureLog> SpillStore::get(uint64_t request_key) {
  auto it = index_.find(request_key);
  if (it == index_.end()) return std::nullopt;
  return read_at(it->second.offset);
}

bool SpillStore::erase(uint64_t request_key) {
  auto it = index_.find(request_key);
  if (it == index_.end()) return false;
  auto [lo, hi] = by_ts_.equal_range(it->second.ts);
  for (auto j = lo; j != hi; ++j) {
    if (j->second == request_key) {
      by_ts_.erase(j);
      break;
    }
  }
  index_.erase(it);
  ++dead_;
  return true;
}

std::vector<uint64_t> SpillStore::older_than(Timestamp cutoff) const {
  std::vector<uint64_t> out;
  for (auto it = by_ts_.begin(); it != by_ts_.end() && it->first < cutoff; ++it) {
    out.push_back(it->second);
  }
  return out;
}

void SpillStore::compact() {
  std::vector<FeatureLog> live;
  live.reserve(index_.size());
  for (const auto& [ts, key] : by_ts_) live.push_back(read_at(index_.at(key).offset));
  index_.clear();
  by_ts_.clear();
  open_fresh();
  for (const auto& log : live) put(log);
  dead_ = 0;
}

// --- Joiner ----------------------------------------------------------------

Joiner::Joiner(JoinerConfig config)
    : config_((validate(config), std::move(config))),
      action_wait_(config_.action_wait < 0 ? config_.memory_window : config_.action_wait),
      disk_(config_.spill_path.empty() ? private_spill_path(config_.seed) : config_.spill_path),
      rng_(mix64(config_.seed)) {}

void Joiner::advance(Timestamp now) { watermark_ = std::max(watermark_, now); }

void Joiner::remove_from_memory(uint64_t key) {
  auto it = memory_.find(key);
  if (it == memory_.end()) return;
  auto [lo, hi] = memory_by_ts_.equal_range(it->second.ts);
  for (auto j = lo; j != hi; ++j) {
    if (j->second == key) {
      memory_by_ts_.erase(j);
      break;
    }
  }
  memory_.erase(it);
}

void Joiner::spill_expired() {
  while (!memory_by_ts_.empty() && watermark_ - memory_by_ts_.begin()->first > config_.memory_window) {
    const uint64_t key = memory_by_ts_.begin()->second;
    memory_by_ts_.erase(memory_by_ts_.begin());
    auto it = memory_.find(key);
    disk_.put(it->second);
    memory_.erase(it);
    ++counters_.spilled;
  }
}

std::optional<JoinedExample> Joiner::emit(std::vector<FeatureKey> features, ActionKind action,
                                          Timestamp ts) {
  JoinedExample ex{std::move(features), action == ActionKind::kPositive ? 1 : 0, ts, false};
  auto kept = negative_sample(std::move(ex), config_.negative_rate, rng_);
  if (!kept) ++counters_.sampled_out;
  return kept;
}

std::optional<JoinedExample> Joiner::ingest_feature(FeatureLog log) {
  ++counters_.features;
  advance(log.ts);
  const uint64_t key = log.request_key;

  if (auto a = actions_.find(key); a != actions_.end()) {
    const ActionLog action = a->second;
    auto [lo, hi] = actions_by_ts_.equal_range(action.ts);
    for (auto j = lo; j != hi; ++j) {
      if (j->second == key) {
        actions_by_ts_.erase(j);
        break;
      }
    }
    actions_.erase(a);
    ++counters_.joins;
    joined_.emplace(key, log.ts);
    joined_by_ts_.emplace(log.ts, key);
    spill_expired();
    return emit(std::move(log.features), action.action, log.ts);
  }

  if (joined_.contains(key)) {
    ++counters_.duplicate_features;
    return std::nullopt;
  }
  if (memory_.contains(key) || disk_.contains(key)) {
    ++counters_.duplicate_features;
    remove_from_memory(key);
    disk_.erase(key);
  }
  memory_by_ts_.emplace(log.ts, key);
  memory_.emplace(key, std::move(log));
  spill_expired();
  return std::nullopt;
}

std::optional<JoinedExample> Joiner::ingest_action(const ActionLog& log, Timestamp now) {
  ++counters_.actions;
  advance(std::max(now, log.ts));
  const uint64_t key = log.request_key;

  std::optional<FeatureLog> feature;
  if (auto it = memory_.find(key); it != memory_.end()) {
    feature = std::move(it->second);
    remove_from_memory(key);
  } else if (auto from_disk = disk_.get(key)) {
    feature = std::move(from_disk);
    disk_.erase(key);
    ++counters_.disk_hits;
  }
  spill_expired();

  if (!feature) {
    if (joined_.contains(key) || actions_.contains(key)) {
      ++counters_.duplicate_actions;
    } else {
      actions_.emplace(key, log);
      actions_by_ts_.emplace(log.ts, key);
    }
    return std::nullopt;
  }
  ++counters_.joins;
  joined_.emplace(key, feature->ts);
  joined_by_ts_.emplace(feature->ts, key);
  return emit(std::move(feature->features), log.action, feature->ts);
}

std::vector<JoinedExample> Joiner::flush_expired(Timestamp now) {
  advance(now);
  spill_expired();
  std::vector<JoinedExample> out;

  // Strictly older than disk_ttl: now - ts > disk_ttl.
  for (uint64_t key : disk_.older_than(watermark_ - config_.disk_ttl)) {
    auto log = disk_.get(key);
    disk_.erase(key);
    if (config_.timeout_policy == TimeoutPolicy::kEmitNegative) {
      ++counters_.timeouts_negative;
      if (auto ex = emit(std::move(log->features), ActionKind::kNegative, log->ts)) {
        out.push_back(std::move(*ex));
      }
    } else {
      ++counters_.timeouts_dropped;
    }
  }

  while (!actions_by_ts_.empty() && watermark_ - actions_by_ts_.begin()->first > action_wait_) {
    actions_.erase(actions_by_ts_.begin()->second);
    actions_by_ts_.erase(actions_by_ts_.begin());
    ++counters_.action_misses;
  }

  while (!joined_by_ts_.empty() && watermark_ - joined_by_ts_.begin()->first > config_.disk_ttl) {
    joined_.erase(joined_by_ts_.begin()->second);
    joined_by_ts_.erase(joined_by_ts_.begin());
  }

  if (disk_.dead() >= config_.compact_min_dead && disk_.dead() > disk_.live()) {
    disk_.compact();
    ++counters_.compactions;
  }
  return out;
}

std::optional<JoinedExample> negative_sample(JoinedExample example, double rate,
                                             std::mt19937_64& rng) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ContractViolation("negative_sample: rate must be in (0, 1]");
  if (rate >= 1.0) return example;
  if (example.label == 0 && unit_uniform(rng) >= rate) return std::nullopt;
  example.sampled = true;
  return example;
}

double log_odds_correct(double p, double rate) {
  if (!(p > 0.0 && p < 1.0)) throw ContractViolation("log_odds_correct: p must be in (0, 1)");
  if (!(rate > 0.0 && rate <= 1.0)) throw ContractViolation("log_odds_correct: rate must be in (0, 1]");
  return p / (p + (1.0 - p) / rate);
}

// --- text records ----------------------------------------------------------

namespace {

template <typename T>
T parse_number(std::string_view s, const char* what) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ContractViolation(std::string("bad ") + what + " '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::vector<FeatureKey> parse_features(const std::string& field) {
  std::vector<FeatureKey> out;
  if (field.empty()) return out;
  for (const auto& item : split(field, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ContractViolation("feature '" + item + "' lacks slot:id");
    out.push_back({parse_number<uint32_t>(std::string_view(item).substr(0, colon), "slot"),
                   parse_number<uint64_t>(std::string_view(item).substr(colon + 1), "id")});
  }
  return out;
}

std::string format_features(const std::vector<FeatureKey>& features) {
  std::string out;
  for (size_t i = 0; i < features.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(features[i].table_id);
    out += ':';
    out += std::to_string(features[i].id);
  }
  return out;
}

StreamRecord parse_record(const std::string& raw) {
  std::string line = raw;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto f = split(line, '\t');
  if (f.empty()) throw ContractViolation("empty record");
  if (f[0] == "F" && f.size() == 4) {
    return FeatureLog{parse_number<uint64_t>(f[1], "request key"), parse_features(f[3]),
                      parse_number<Timestamp>(f[2], "timestamp")};
  }
  if (f[0] == "A" && f.size() == 4) {
    const int a = parse_number<int>(f[3], "action");
    if (a != 0 && a != 1) throw ContractViolation("action must be 0 or 1");
    return ActionLog{parse_number<uint64_t>(f[1], "request key"),
                     a ? ActionKind::kPositive : ActionKind::kNegative,
                     parse_number<Timestamp>(f[2], "timestamp")};
  }
  if (f[0] == "E" && f.size() == 4) {
    const int label = parse_number<int>(f[2], "label");
    if (label != 0 && label != 1) throw ContractViolation("label must be 0 or 1");
    return JoinedExample{parse_features(f[3]), label, parse_number<Timestamp>(f[1], "timestamp"),
                         false};
  }
  throw ContractViolation("unrecognized record: " + line);
}

std::string format_record(const FeatureLog& log) {
  return "F\t" + std::to_string(log.request_key) + "\t" + std::to_string(log.ts) + "\t" +
         format_features(log.features);
}

std::string format_record(const ActionLog& log) {
  return "A\t" + std::to_string(log.request_key) + "\t" + std::to_string(log.ts) + "\t" +
         (log.action == ActionKind::kPositive ? "1" : "0");
}

std::string format_record(const JoinedExample& ex) {
  return "E\t" + std::to_string(ex.ts) + "\t" + std::to_string(ex.label) + "\t" +
         format_features(ex.features);
}

}  // namespace freshrec
