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

#include "freshrec/embedding_table.h"

#include <bit>
#include <cmath>
#include <mutex>
#include <string>

#include "freshrec/binary_io.h"

namespace freshrec {
namespace {

constexpr uint32_t kRecordBytesFixed = 8 + 4 + 8;

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

void validate(const TableConfig& c) {
  auto fail = [](const std::string& msg) { throw ContractViolation("table config: " + msg); };
  if (c.dim < 1) fail("dim must be >= 1");
  if (!(c.admit_probability > 0.0 && c.admit_probability <= 1.0))
    fail("admit_probability must be in (0, 1]");
  if (c.ttl < 0) fail("ttl must be >= 0");
  if (c.initial_capacity < 2 || (c.initial_capacity & (c.initial_capacity - 1)) != 0)
    fail("initial_capacity must be a power of two >= 2");
  if (c.initial_capacity > c.max_capacity) fail("initial_capacity exceeds max_capacity");
}

uint64_t config_digest(const TableConfig& c) {
  ByteWriter w;
  w.u32(c.dim);
  w.u32(c.admit_threshold);
  w.u64(std::bit_cast<uint64_t>(c.admit_probability));
  w.i64(c.ttl);
  w.u64(c.hash_seeds[0]);
  w.u64(c.hash_seeds[1]);
  w.u64(c.init_seed);
  w.f32(c.init_scale);
  return fnv1a64(w.data());
}

EmbeddingTable::EmbeddingTable(uint32_t table_id, TableConfig config)
    : table_id_(table_id),
      config_((validate(config), config)),
      store_(config_.initial_capacity, config_.hash_seeds, config_.max_capacity),
      rng_(mix64(config_.init_seed ^ (uint64_t{table_id} << 32))) {}

EmbeddingEntry EmbeddingTable::fresh_entry(uint64_t id, Timestamp now, uint32_t occurrences) {
  const float scale = config_.init_scale > 0.0f
                          ? config_.init_scale
                          : 1.0f / std::sqrt(static_cast<float>(config_.dim));
  // A pure function of (seed, table, id): the same id gets the same initial
  // row whichever shard admits it, and in whatever order.
  const uint64_t base = mix64(config_.init_seed ^ (uint64_t{table_id_} << 32) ^ mix64(id));
  EmbeddingEntry e;
  e.vector.resize(config_.dim);
  for (uint32_t i = 0; i < config_.dim; ++i) {
    const double u = static_cast<double>(mix64(base + 0x9e3779b97f4a7c15ULL * (i + 1)) >> 11) *
                     0x1.0p-53;
    e.vector[i] = static_cast<float>((2.0 * u - 1.0) * scale);
  }
  e.accumulator = Eigen::VectorXf::Zero(config_.dim);
  e.last_update = now;
  e.occurrence_estimate = occurrences;
  return e;
}

std::optional<EmbeddingEntry> EmbeddingTable::lookup(uint64_t id) const {
  std::shared_lock lock(mu_);
  if (const auto* e = store_.find(id)) return *e;
  return std::nullopt;
}

bool EmbeddingTable::lookup_vector(uint64_t id, Eigen::Ref<Eigen::VectorXf> out,
                                   int* probes) const {
  std::shared_lock lock(mu_);
  const auto* e = store_.find(id, probes);
  if (!e) return false;
  out = e->vector;
  return true;
}

uint32_t EmbeddingTable::record_occurrence(uint64_t id) {
  if (!counter_) {
    counter_ = std::make_unique<OccurrenceCounter>(
        config_.exact_counts ? OccurrenceCounter::Mode::kExact : OccurrenceCounter::Mode::kSketch,
        config_.sketch_depth, config_.sketch_width, mix64(config_.init_seed + table_id_));
  }
  return counter_->record(id);
}

bool EmbeddingTable::admit_locked(uint64_t id, Timestamp now, Eigen::Ref<Eigen::VectorXf> out) {
  if (auto* e = store_.find(id)) {
    e->last_update = std::max(e->last_update, now);
    out = e->vector;
    return true;
  }
  uint32_t seen = 1;
  if (config_.admit_threshold > 0) {
    seen = record_occurrence(id);
    if (seen < config_.admit_threshold) {
      ++stats_.filtered;
      return false;
    }
  }
  if (config_.admit_probability < 1.0 && unit_uniform(rng_) >= config_.admit_probability) {
    ++stats_.filtered;
    return false;
  }
  auto& stored = store_.insert_or_assign(id, fresh_entry(id, now, seen));
  ++stats_.admitted;
  out = stored.vector;
  return true;
}

std::optional<Eigen::VectorXf> EmbeddingTable::lookup_or_admit(uint64_t id, Timestamp now) {
  Eigen::VectorXf out(config_.dim);
  std::unique_lock lock(mu_);
  if (!admit_locked(id, now, out)) return std::nullopt;
  return out;
}

bool EmbeddingTable::lookup_or_admit_into(uint64_t id, Timestamp now,
                                          Eigen::Ref<Eigen::VectorXf> out) {
  std::unique_lock lock(mu_);
  return admit_locked(id, now, out);
}

void EmbeddingTable::insert(uint64_t id, EmbeddingEntry entry) {
  if (entry.vector.size() != config_.dim || entry.accumulator.size() != config_.dim) {
    throw ContractViolation("entry width does not match table dim " +
                            std::to_string(config_.dim));
  }
  std::unique_lock lock(mu_);
  store_.insert_or_assign(id, std::move(entry));
}

void EmbeddingTable::upsert_vector(uint64_t id, const Eigen::Ref<const Eigen::VectorXf>& vector,
                                   Timestamp now) {
  if (vector.size() != config_.dim) {
    throw ContractViolation("synced vector width does not match table dim");
  }
  std::unique_lock lock(mu_);
  if (auto* e = store_.find(id)) {
    e->vector = vector;
    e->last_update = std::max(e->last_update, now);
    return;
  }
  EmbeddingEntry e;
  e.vector = vector;
  e.accumulator = Eigen::VectorXf::Zero(config_.dim);
  e.last_update = now;
  store_.insert_or_assign(id, std::move(e));
}

bool EmbeddingTable::apply_gradient(uint64_t id, const Eigen::Ref<const Eigen::VectorXf>& grad,
                                    float lr, Timestamp now) {
  if (grad.size() != config_.dim) {
    throw ContractViolation("gradient width does not match table dim");
  }
  std::unique_lock lock(mu_);
  auto* e = store_.find(id);
  if (!e) {
    ++stats_.missing_gradients;
    return false;
  }
  e->accumulator.array() += grad.array().square();
  e->vector.array() -= lr * grad.array() / (e->accumulator.array().sqrt() + kAdagradEpsilon);
  e->last_update = std::max(e->last_update, now);
  return true;
}

bool EmbeddingTable::erase(uint64_t id) {
  std::unique_lock lock(mu_);
  return store_.erase(id);
}

size_t EmbeddingTable::evict_expired(Timestamp now) {
  if (config_.ttl == 0) return 0;
  std::unique_lock lock(mu_);
  const size_t n = store_.erase_if(
      [&](uint64_t, const EmbeddingEntry& e) { return now - e.last_update > config_.ttl; });
  stats_.evicted += n;
  return n;
}

size_t EmbeddingTable::size() const {
  std::shared_lock lock(mu_);
  return store_.size();
}

size_t EmbeddingTable::capacity() const {
  std::shared_lock lock(mu_);
  return store_.capacity();
}

TableStats EmbeddingTable::stats() const {
  std::shared_lock lock(mu_);
  return stats_;
}

std::vector<uint64_t> EmbeddingTable::ids() const {
  std::vector<uint64_t> out;
  {
    std::shared_lock lock(mu_);
    out.reserve(store_.size());
    store_.for_each([&](uint64_t id, const EmbeddingEntry&) { out.push_back(id); });
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<uint8_t> EmbeddingTable::serialize() const {
  ByteWriter w;
  w.u32(table_id_);
  w.u32(config_.dim);
  w.u64(config_digest(config_));
  const size_t count_at = w.size();
  w.u64(0);
  uint64_t count = 0;
  for_each_sorted([&](uint64_t id, const EmbeddingEntry& e) {
    w.u32(kRecordBytesFixed + 8 * config_.dim);
    w.u64(id);
    w.u32(config_.dim);
    for (float v : e.vector) w.f32(v);
    for (float v : e.accumulator) w.f32(v);
    w.i64(e.last_update);
    ++count;
  });
  auto bytes = std::move(w).take();
  for (int i = 0; i < 8; ++i) bytes[count_at + i] = static_cast<uint8_t>(count >> (8 * i));
  return bytes;
}

std::unique_ptr<EmbeddingTable> EmbeddingTable::deserialize(std::span<const uint8_t> bytes,
                                                            const TableConfig& config) {
  ByteReader r(bytes);
  const uint32_t table_id = r.u32();
  const uint32_t dim = r.u32();
  const uint64_t digest = r.u64();
  const uint64_t count = r.u64();
  if (dim != config.dim) {
    throw RecoveryError("table " + std::to_string(table_id) + ": stored dim " +
                        std::to_string(dim) + " != configured " + std::to_string(config.dim));
  }
  if (digest != config_digest(config)) {
    throw RecoveryError("table " + std::to_string(table_id) + ": config digest mismatch");
  }
  auto table = std::make_unique<EmbeddingTable>(table_id, config);
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t len = r.u32();
    if (len != kRecordBytesFixed + 8 * dim) {
      throw RecoveryError("table " + std::to_string(table_id) + ": bad record length");
    }
    EmbeddingEntry e;
    const uint64_t id = r.u64();
    if (r.u32() != dim) throw RecoveryError("record dim mismatch");
    e.vector.resize(dim);
    e.accumulator.resize(dim);
    for (uint32_t d = 0; d < dim; ++d) e.vector[d] = r.f32();
    for (uint32_t d = 0; d < dim; ++d) e.accumulator[d] = r.f32();
    e.last_update = r.i64();
    table->store_.insert_or_assign(id, std::move(e));
  }
  if (!r.done()) throw RecoveryError("table " + std::to_string(table_id) + ": trailing bytes");
  return table;
}

}  // namespace freshrec
