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

#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>
#include <thread>
#include <unordered_map>

#include "freshrec/cuckoo_table.h"
#include "freshrec/embedding_table.h"
#include "freshrec/id_decomposition.h"
#include "freshrec/occurrence_counter.h"
#include "oracles.h"

namespace freshrec {
namespace {

constexpr std::array<uint64_t, 2> kSeeds{0x1234, 0x5678};

TableConfig small_config(uint32_t dim = 4) {
  TableConfig c;
  c.dim = dim;
  c.initial_capacity = 16;
  c.exact_counts = true;
  return c;
}

EmbeddingEntry entry_with(uint32_t dim, float fill) {
  EmbeddingEntry e;
  e.vector = Eigen::VectorXf::Constant(dim, fill);
  e.accumulator = Eigen::VectorXf::Zero(dim);
  return e;
}

TEST(CuckooTableTest, SingleInsertIsRetrievable) {
  CuckooTable<int> t(8, kSeeds);
  t.insert_or_assign(42, 7);
  ASSERT_NE(t.find(42), nullptr);
  EXPECT_EQ(*t.find(42), 7);
  EXPECT_EQ(t.find(43), nullptr);
}

TEST(CuckooTableTest, KeysCollidingAtFirstHashLandInDifferentArrays) {
  CuckooTable<int> t(64, kSeeds);
  // Brute-force a second id sharing the first id's h0 bucket.
  const uint64_t a = 1;
  uint64_t b = 2;
  while (t.bucket(0, b) != t.bucket(0, a)) ++b;
  t.insert_or_assign(a, 10);
  t.insert_or_assign(b, 20);
  EXPECT_EQ(*t.find(a), 10);
  EXPECT_EQ(*t.find(b), 20);
  ASSERT_TRUE(t.side_of(a) && t.side_of(b));
  EXPECT_NE(*t.side_of(a), *t.side_of(b));
}

TEST(CuckooTableTest, DisplacementCycleForcesGrowthAndKeepsAllKeys) {
  CuckooTable<uint64_t> t(8, kSeeds);
  // Three ids sharing both buckets cannot fit in two slots: a guaranteed cycle.
  std::vector<uint64_t> ids{5};
  for (uint64_t c = 6; ids.size() < 3; ++c) {
    if (t.bucket(0, c) == t.bucket(0, 5) && t.bucket(1, c) == t.bucket(1, 5)) ids.push_back(c);
  }
  for (uint64_t id : ids) t.insert_or_assign(id, id * 3);
  EXPECT_GE(t.growth_count(), 1u);
  for (uint64_t id : ids) {
    ASSERT_NE(t.find(id), nullptr) << id;
    EXPECT_EQ(*t.find(id), id * 3);
  }
  EXPECT_EQ(t.size(), 3u);
}

TEST(CuckooTableTest, RandomWorkloadMatchesShadowMap) {
  std::mt19937_64 rng(99);
  for (int round = 0; round < 20; ++round) {
    CuckooTable<uint64_t> t(2, {rng(), rng()});
    std::unordered_map<uint64_t, uint64_t> shadow;
    for (int op = 0; op < 2000; ++op) {
      const uint64_t id = rng() % 1500;
      if (rng() % 5 == 0) {
        EXPECT_EQ(t.erase(id), shadow.erase(id) == 1);
      } else {
        const uint64_t v = rng();
        t.insert_or_assign(id, v);
        shadow[id] = v;
      }
    }
    ASSERT_EQ(t.size(), shadow.size());
    for (const auto& [id, v] : shadow) {
      int probes = 0;
      const auto* got = t.find(id, &probes);
      ASSERT_NE(got, nullptr);
      EXPECT_EQ(*got, v);
      EXPECT_LE(probes, 2);
    }
    EXPECT_LE(t.load_factor(), CuckooTable<uint64_t>::kMaxLoadFactor);
  }
}

TEST(CuckooTableTest, GrowthPastLimitIsReported) {
  CuckooTable<int> t(4, kSeeds, 8);
  EXPECT_THROW(
      {
        for (int i = 0; i < 100; ++i) t.insert_or_assign(static_cast<uint64_t>(i), i);
      },
      StorageExhausted);
  // Whatever was stored before the failure is intact.
  t.for_each([&](uint64_t id, int v) { EXPECT_EQ(static_cast<int>(id), v); });
}

TEST(CuckooTableTest, RejectsNonPowerOfTwoCapacity) {
  EXPECT_THROW(CuckooTable<int>(12, kSeeds), ContractViolation);
}

TEST(EmbeddingTableTest, LookupOfAbsentKeyIsEmpty) {
  EmbeddingTable t(0, small_config());
  EXPECT_FALSE(t.lookup(5).has_value());
  t.insert(5, entry_with(4, 1.5f));
  auto got = t.lookup(5);
  ASSERT_TRUE(got.has_value());
  EXPECT_EQ(got->vector, Eigen::VectorXf::Constant(4, 1.5f));
}

TEST(EmbeddingTableTest, LookupProbesAtMostTwoSlots) {
  EmbeddingTable t(0, small_config());
  for (uint64_t id = 0; id < 500; ++id) t.insert(id, entry_with(4, 0.f));
  Eigen::VectorXf out(4);
  for (uint64_t id = 0; id < 1000; ++id) {
    int probes = 0;
    t.lookup_vector(id, out, &probes);
    EXPECT_GE(probes, 1);
    EXPECT_LE(probes, 2);
  }
}

TEST(EmbeddingTableTest, FiltersDisabledAdmitOnFirstSight) {
  EmbeddingTable t(0, small_config());
  for (uint64_t id = 0; id < 100; ++id) EXPECT_TRUE(t.lookup_or_admit(id, 0).has_value());
  EXPECT_EQ(t.size(), 100u);
}

TEST(EmbeddingTableTest, OccurrenceThresholdAdmitsOnFifthSighting) {
  auto c = small_config();
  c.admit_threshold = 5;
  EmbeddingTable t(0, c);
  for (int i = 0; i < 4; ++i) EXPECT_FALSE(t.lookup_or_admit(77, i).has_value()) << i;
  auto v = t.lookup_or_admit(77, 4);
  ASSERT_TRUE(v.has_value());
  EXPECT_EQ(t.lookup(77)->occurrence_estimate, 5u);
  EXPECT_EQ(t.stats().filtered, 4u);
}

TEST(EmbeddingTableTest, ThresholdWorksWithSketchCounting) {
  auto c = small_config();
  c.exact_counts = false;
  c.sketch_width = 1 << 10;
  c.admit_threshold = 3;
  EmbeddingTable t(0, c);
  EXPECT_FALSE(t.lookup_or_admit(9, 0));
  EXPECT_FALSE(t.lookup_or_admit(9, 0));
  EXPECT_TRUE(t.lookup_or_admit(9, 0));
}

TEST(EmbeddingTableTest, ProbabilisticAdmissionRate) {
  auto c = small_config();
  c.admit_probability = 0.5;
  c.init_seed = 2024;
  EmbeddingTable t(0, c);
  int admitted = 0;
  for (uint64_t id = 0; id < 10000; ++id) admitted += t.lookup_or_admit(id, 0).has_value();
  const double frac = admitted / 10000.0;
  EXPECT_GE(frac, 0.47);
  EXPECT_LE(frac, 0.53);
}

TEST(EmbeddingTableTest, PresentKeyRefreshesTimestamp) {
  EmbeddingTable t(0, small_config());
  t.lookup_or_admit(3, 10);
  t.lookup_or_admit(3, 50);
  EXPECT_EQ(t.lookup(3)->last_update, 50);
}

TEST(EmbeddingTableTest, InitializationWithinUniformBound) {
  auto c = small_config(16);
  EmbeddingTable t(0, c);
  for (uint64_t id = 0; id < 200; ++id) {
    auto v = t.lookup_or_admit(id, 0);
    ASSERT_TRUE(v);
    EXPECT_LE(v->cwiseAbs().maxCoeff(), 0.25f);
  }
}

TEST(EmbeddingTableTest, InitialRowDependsOnlyOnSeedTableAndId) {
  const auto c = small_config(8);
  EmbeddingTable forward(3, c), backward(3, c), other_table(4, c);
  std::vector<Eigen::VectorXf> rows;
  for (uint64_t id = 0; id < 100; ++id) rows.push_back(*forward.lookup_or_admit(id, 0));
  for (uint64_t id = 100; id-- > 0;) {
    EXPECT_EQ(*backward.lookup_or_admit(id, 0), rows[id]) << id;
  }
  EXPECT_NE(*other_table.lookup_or_admit(7, 0), rows[7]);
  EXPECT_NE(rows[7], rows[8]);
  // The mean of many uniform draws sits near zero.
  double sum = 0;
  for (const auto& r : rows) sum += r.sum();
  EXPECT_LT(std::abs(sum / 800.0), 0.05);
}

TEST(CountMinSketchTest, SingleKeyCountsExactly) {
  CountMinSketch s(4, 1 << 12, 7);
  EXPECT_GE(s.increment(11), 1u);
  for (int i = 1; i < 37; ++i) s.increment(11);
  EXPECT_EQ(s.estimate(11), 37u);
}

TEST(CountMinSketchTest, NeverUndercountsAgainstExactMap) {
  CountMinSketch s(4, 1 << 10, 3);
  std::unordered_map<uint64_t, uint32_t> exact;
  std::mt19937_64 rng(5);
  std::vector<uint64_t> keys(10000);
  for (auto& k : keys) k = rng();
  for (int i = 0; i < 50000; ++i) {
    const uint64_t k = keys[rng() % keys.size()];
    s.increment(k);
    ++exact[k];
  }
  for (uint64_t k : keys) EXPECT_GE(s.estimate(k), exact[k]);
}

TEST(CountMinSketchTest, ConcurrentIncrementsAreCounted) {
  CountMinSketch s(4, 1 << 8, 1);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 1000; ++i) s.increment(99);
    });
  for (auto& th : threads) th.join();
  EXPECT_EQ(s.estimate(99), 4000u);
}

TEST(EvictionTest, ZeroTtlIsNoOp) {
  EmbeddingTable t(0, small_config());
  t.lookup_or_admit(1, 0);
  EXPECT_EQ(t.evict_expired(1'000'000), 0u);
  EXPECT_EQ(t.size(), 1u);
}

TEST(EvictionTest, RemovesOnlyStaleEntries) {
  auto c = small_config();
  c.ttl = 100;
  EmbeddingTable t(0, c);
  t.lookup_or_admit(1, 0);
  t.lookup_or_admit(2, 150);
  EXPECT_EQ(t.evict_expired(200), 1u);
  EXPECT_FALSE(t.lookup(1));
  EXPECT_TRUE(t.lookup(2));
  // Exactly ttl seconds idle is not yet expired.
  EXPECT_EQ(t.evict_expired(250), 0u);
  EXPECT_EQ(t.evict_expired(251), 1u);
}

TEST(EvictionTest, RandomWorkloadMatchesShadowFilter) {
  std::mt19937_64 rng(17);
  for (int round = 0; round < 10; ++round) {
    auto c = small_config(2);
    c.ttl = 50;
    EmbeddingTable t(0, c);
    std::map<uint64_t, Timestamp> shadow;
    Timestamp now = 0;
    for (int op = 0; op < 3000; ++op) {
      now += static_cast<Timestamp>(rng() % 3);
      const uint64_t id = rng() % 400;
      t.lookup_or_admit(id, now);
      shadow[id] = now;
      if (op % 500 == 499) {
        size_t expected = 0;
        for (auto it = shadow.begin(); it != shadow.end();) {
          if (now - it->second > c.ttl) {
            it = shadow.erase(it);
            ++expected;
          } else {
            ++it;
          }
        }
        EXPECT_EQ(t.evict_expired(now), expected);
        std::vector<uint64_t> want;
        for (const auto& [id2, ts] : shadow) want.push_back(id2);
        EXPECT_EQ(t.ids(), want);
      }
    }
  }
}

TEST(AdagradTest, ZeroGradientLeavesStateUnchanged) {
  EmbeddingTable t(0, small_config());
  t.insert(1, entry_with(4, 0.5f));
  EXPECT_TRUE(t.apply_gradient(1, Eigen::VectorXf::Zero(4), 0.1f, 5));
  auto e = *t.lookup(1);
  EXPECT_EQ(e.vector, Eigen::VectorXf::Constant(4, 0.5f));
  EXPECT_EQ(e.accumulator, Eigen::VectorXf::Zero(4));
}

TEST(AdagradTest, FirstStepClosedForm) {
  EmbeddingTable t(0, small_config());
  t.insert(1, entry_with(4, 0.0f));
  Eigen::VectorXf g(4);
  g << 0.5f, -2.0f, 3.0f, 1e-3f;
  t.apply_gradient(1, g, 0.1f, 9);
  auto e = *t.lookup(1);
  for (int i = 0; i < 4; ++i) {
    const double expected = -0.1 * g[i] / (std::abs(g[i]) + 1e-8);
    EXPECT_NEAR(e.vector[i], expected, 1e-6);
  }
  EXPECT_EQ(e.last_update, 9);
}

TEST(AdagradTest, MatchesScalarReferenceOverTenSteps) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal(0.0, 1.0);
  EmbeddingTable t(0, small_config(6));
  t.insert(8, entry_with(6, 0.2f));
  oracle::ScalarAdagrad ref{std::vector<double>(6, 0.2f), std::vector<double>(6, 0.0)};
  for (int step = 0; step < 10; ++step) {
    std::vector<double> g(6);
    Eigen::VectorXf gf(6);
    for (int i = 0; i < 6; ++i) {
      gf[i] = static_cast<float>(normal(rng));
      g[i] = gf[i];
    }
    t.apply_gradient(8, gf, 0.05f, step);
    ref.step(g, 0.05);
  }
  auto e = *t.lookup(8);
  for (int i = 0; i < 6; ++i) {
    EXPECT_NEAR(e.vector[i], ref.weights[i], 1e-6);
    EXPECT_NEAR(e.accumulator[i], ref.accum[i], 1e-5 * std::max(1.0, ref.accum[i]));
  }
}

TEST(AdagradTest, AbsentKeyIsCountedNoOp) {
  EmbeddingTable t(0, small_config());
  EXPECT_FALSE(t.apply_gradient(3, Eigen::VectorXf::Ones(4), 0.1f, 0));
  EXPECT_EQ(t.stats().missing_gradients, 1u);
  EXPECT_THROW(t.apply_gradient(3, Eigen::VectorXf::Ones(3), 0.1f, 0), ContractViolation);
}

TEST(SerializationTest, RoundTripPreservesEveryField) {
  auto c = small_config(3);
  EmbeddingTable t(7, c);
  for (uint64_t id = 0; id < 300; ++id) {
    t.lookup_or_admit(id * 977, static_cast<Timestamp>(id));
    t.apply_gradient(id * 977, Eigen::VectorXf::Constant(3, 0.01f * id), 0.1f, id + 1);
  }
  auto bytes = t.serialize();
  auto back = EmbeddingTable::deserialize(bytes, c);
  EXPECT_EQ(back->table_id(), 7u);
  EXPECT_EQ(back->ids(), t.ids());
  for (uint64_t id : t.ids()) {
    auto a = *t.lookup(id);
    auto b = *back->lookup(id);
    EXPECT_EQ(a.vector, b.vector);
    EXPECT_EQ(a.accumulator, b.accumulator);
    EXPECT_EQ(a.last_update, b.last_update);
  }
  EXPECT_EQ(back->serialize(), bytes);
  // Header 24 bytes, then per record 4 (length) + 8 + 4 + 2*3*4 + 8.
  EXPECT_EQ(bytes.size(), 24u + 300u * (4 + 8 + 4 + 24 + 8));
}

TEST(SerializationTest, RejectsMismatchedConfig) {
  auto c = small_config(3);
  EmbeddingTable t(0, c);
  t.lookup_or_admit(1, 0);
  auto bytes = t.serialize();
  auto other = c;
  other.ttl = 5;
  EXPECT_THROW(EmbeddingTable::deserialize(bytes, other), RecoveryError);
  bytes.pop_back();
  EXPECT_THROW(EmbeddingTable::deserialize(bytes, c), RecoveryError);
}

TEST(DecomposeIdTest, SplitsQuotientAndRemainder) {
  EXPECT_EQ(decompose_id((uint64_t{1} << 24) + 5, uint64_t{1} << 24), (DecomposedId{1, 5}));
  EXPECT_EQ(decompose_id(0, uint64_t{1} << 24), (DecomposedId{0, 0}));
  EXPECT_THROW(decompose_id(5, 12), ContractViolation);
}

TEST(DecomposeIdTest, ReconstructsRandomIds) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 1000; ++i) {
    const uint64_t id = rng();
    const uint64_t modulus = uint64_t{1} << (1 + rng() % 40);
    const auto d = decompose_id(id, modulus);
    EXPECT_EQ(d.quotient * modulus + d.remainder, id);
    EXPECT_LT(d.remainder, modulus);
  }
}

}  // namespace
}  // namespace freshrec
