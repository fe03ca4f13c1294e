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

#include <random>
#include <string>

#include "freshrec/ps.h"
#include "scratch_dir.h"

namespace freshrec::testing {

/// Two small tables (dims 4 and 2) plus a tiny dense model.
inline ShardConfig small_shard_config(bool with_dense = true) {
  ShardConfig c;
  TableConfig a;
  a.dim = 4;
  a.initial_capacity = 16;
  a.ttl = 1000;
  TableConfig b = a;
  b.dim = 2;
  b.hash_seeds = {77, 88};
  c.tables = {{0, a}, {1, b}};
  if (with_dense) c.dense = DeepFMConfig{2, 4, {3, 1}};
  c.dense_partitions = 4;  // standalone shards 0..3 each own a slice
  return c;
}

/// Admits `keys` random ids and applies a few gradient steps to each.
inline void populate(PSShard& shard, std::mt19937_64& rng, int keys) {
  std::normal_distribution<float> n(0.f, 1.f);
  for (int i = 0; i < keys; ++i) {
    const uint32_t table = static_cast<uint32_t>(rng() % 2);
    const FeatureKey key{table, rng()};
    const uint32_t dim = shard.table(table).dim();
    Eigen::VectorXf out(dim);
    const Timestamp now = static_cast<Timestamp>(rng() % 500);
    shard.lookup_or_admit(key, now, out);
    Eigen::VectorXf g(dim);
    for (uint32_t d = 0; d < dim; ++d) g[d] = n(rng);
    if (shard.role() == Role::kTraining) shard.apply_gradient(key, g, 0.05f, now + 1);
  }
  if (shard.owns_dense()) {
    auto slice = shard.dense();
    for (auto& x : slice.values) x = n(rng);
    for (auto& x : slice.first_moment) x = n(rng);
    slice.second_moment = slice.first_moment.cwiseAbs2();
    slice.step = static_cast<int64_t>(rng() % 100);
    shard.replace_dense(slice);
  }
  shard.set_version(rng() % 1000);
}

}  // namespace freshrec::testing
