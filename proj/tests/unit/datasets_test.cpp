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

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "freshrec/datasets.h"
#include "oracles.h"
#include "scratch_dir.h"

namespace freshrec {
namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

TEST(BinarizeLabelTest, ThresholdAtThreeAndAHalf) {
  EXPECT_EQ(binarize_label(3.5), 1);
  EXPECT_EQ(binarize_label(3.4999), 0);
  EXPECT_EQ(binarize_label(5.0), 1);
  EXPECT_EQ(binarize_label(0.5), 0);
  EXPECT_THROW(binarize_label(0.4), ContractViolation);
  EXPECT_THROW(binarize_label(5.5), ContractViolation);
}

TEST(MovieLensTest, LoadsSortsAndCounts) {
  testing::ScratchDir dir("ml");
  const auto path = dir.path() / "ratings.csv";
  write_text(path,
             "userId,movieId,rating,timestamp\n"
             "1,10,4.0,300\n"
             "2,20,3.0,100\n"
             "not,a,row\n"
             "3,30,7.5,150\n"
             "1,30,3.5,200\n");
  const auto d = load_movielens(path);
  ASSERT_EQ(d.examples.size(), 3u);
  EXPECT_EQ(d.stats.rows, 5u);
  EXPECT_EQ(d.stats.malformed, 1u);
  EXPECT_EQ(d.stats.out_of_scale, 1u);
  EXPECT_EQ(d.examples[0], (Example{{{kUserSlot, 2}, {kMovieSlot, 20}}, 0, 100}));
  EXPECT_EQ(d.examples[1], (Example{{{kUserSlot, 1}, {kMovieSlot, 30}}, 1, 200}));
  EXPECT_EQ(d.examples[2], (Example{{{kUserSlot, 1}, {kMovieSlot, 10}}, 1, 300}));
}

TEST(MovieLensTest, FileErrors) {
  testing::ScratchDir dir("ml_err");
  EXPECT_THROW(load_movielens(dir.path() / "absent.csv"), DataFileError);
  write_text(dir.path() / "bad.csv", "user,movie\n1,2\n");
  EXPECT_THROW(load_movielens(dir.path() / "bad.csv"), DataFileError);
}

TEST(MovieLensTest, CsvRoundTripAndChronologicalOutput) {
  testing::ScratchDir dir("ml_rt");
  RatingsConfig c;
  c.num_users = 300;
  c.num_movies = 100;
  c.num_ratings = 5000;
  const auto ratings = gen_synthetic_ratings(c);
  write_movielens_csv(dir.path() / "r.csv", ratings);
  const auto loaded = load_movielens(dir.path() / "r.csv");
  EXPECT_EQ(loaded.examples, ratings_to_examples(ratings).examples);
  EXPECT_EQ(loaded.stats.loaded, 5000u);
  for (size_t i = 1; i < loaded.examples.size(); ++i)
    EXPECT_LE(loaded.examples[i - 1].ts, loaded.examples[i].ts);
}

TEST(MovieLensTest, SyntheticRatingsAreDeterministicAndShaped) {
  RatingsConfig c;
  c.num_users = 500;
  c.num_movies = 200;
  c.num_ratings = 20000;
  const auto a = gen_synthetic_ratings(c);
  EXPECT_EQ(a, gen_synthetic_ratings(c));
  std::set<uint64_t> users, movies;
  int positives = 0;
  for (const auto& r : a) {
    ASSERT_TRUE(rating_in_scale(r.rating));
    EXPECT_EQ(r.rating * 2, std::round(r.rating * 2));
    EXPECT_GE(r.user_id, 1u);
    EXPECT_LE(r.user_id, c.user_id_range);
    users.insert(r.user_id);
    movies.insert(r.movie_id);
    positives += binarize_label(r.rating);
  }
  EXPECT_LE(users.size(), 500u);
  EXPECT_GT(users.size(), 450u);
  EXPECT_LE(movies.size(), 200u);
  EXPECT_GT(positives, 0.3 * a.size());
  EXPECT_LT(positives, 0.7 * a.size());
  c.seed = 2;
  EXPECT_NE(a, gen_synthetic_ratings(c));
}

TEST(MovieLensTest, UserSubsampleKeepsWholeUsers) {
  RatingsConfig c;
  c.num_users = 2000;
  c.num_ratings = 20000;
  const auto ratings = gen_synthetic_ratings(c);
  const UserSubsample quarter{1, 4};
  const auto d = ratings_to_examples(ratings, quarter);
  EXPECT_EQ(d.stats.loaded + d.stats.subsampled, ratings.size());
  EXPECT_NEAR(static_cast<double>(d.stats.loaded) / ratings.size(), 0.25, 0.05);
  for (const auto& ex : d.examples) EXPECT_TRUE(quarter.keeps(ex.features[0].id));
}

TEST(CriteoTest, ParsesColumnsAndTokenizesPerSlot) {
  testing::ScratchDir dir("criteo");
  auto row = [](int label, const std::string& cat0) {
    std::string line = std::to_string(label);
    for (int i = 0; i < kCriteoIntegerColumns; ++i) line += "\t" + (i == 2 ? "" : std::to_string(i * 3));
    line += "\t" + cat0;
    for (int i = 1; i < kCriteoCategoricalColumns; ++i) line += "\tabc";
    return line + "\n";
  };
  write_text(dir.path() / "c.tsv", row(1, "68fd1e64") + "1\t2\t3\n" + row(0, "68fd1e64") + row(0, ""));
  const auto d = load_criteo(dir.path() / "c.tsv", 7);
  ASSERT_EQ(d.examples.size(), 3u);
  EXPECT_EQ(d.stats.malformed, 1u);
  EXPECT_EQ(d.examples[0].label, 1);
  EXPECT_EQ(d.examples[2].ts, 2);
  ASSERT_EQ(d.examples[0].features.size(), kCriteoSlots);
  for (uint32_t s = 0; s < kCriteoSlots; ++s) EXPECT_EQ(d.examples[0].features[s].table_id, s);
  const uint32_t cat0 = kCriteoIntegerColumns;
  EXPECT_EQ(d.examples[0].features[cat0], d.examples[1].features[cat0]);
  EXPECT_NE(d.examples[0].features[cat0], d.examples[2].features[cat0]);
  // The same token in two slots yields different ids.
  EXPECT_NE(d.examples[0].features[cat0 + 1].id, d.examples[0].features[cat0 + 2].id);
  EXPECT_NE(load_criteo(dir.path() / "c.tsv", 8).examples[0].features[cat0].id,
            d.examples[0].features[cat0].id);
  EXPECT_THROW(load_criteo(dir.path() / "missing.tsv", 1), DataFileError);
}

TEST(CollisionStatsTest, TableOneArithmetic) {
  EXPECT_NEAR(100 * collision_rate(162541, 149970), 7.73, 0.005);
  EXPECT_NEAR(100 * collision_rate(59047, 57361), 2.86, 0.005);
  EXPECT_EQ(collision_rate(0, 0), 0.0);
  EXPECT_THROW(collision_rate(5, 6), ContractViolation);
}

TEST(CollisionStatsTest, InjectiveReducerHasNoCollisions) {
  std::vector<uint64_t> ids(1000);
  std::iota(ids.begin(), ids.end(), 1);
  const auto s = collision_stats(ids, [](uint64_t id) { return id * 3; });
  EXPECT_EQ(s.before, 1000u);
  EXPECT_EQ(s.after, 1000u);
  EXPECT_EQ(s.rate, 0.0);
  ids.push_back(5);  // duplicates do not count twice
  EXPECT_EQ(collision_stats(ids, [](uint64_t id) { return id; }).before, 1000u);
}

TEST(CollisionStatsTest, Md5ReducerMatchesReferenceDigest) {
  // Values from an independent MD5 implementation over little-endian ids.
  const uint64_t all = ~uint64_t{0};
  EXPECT_EQ(md5_reduce(0, all), 40158834000849533ull);
  EXPECT_EQ(md5_reduce(1, all), 3639118294325972275ull);
  EXPECT_EQ(md5_reduce(162541, all), 10018283155178698731ull);
  EXPECT_EQ(md5_reduce(162541, 1000), 10018283155178698731ull % 1000);
  EXPECT_THROW(md5_reduce(1, 0), ContractViolation);
}

TEST(CollisionStatsTest, DistinctAfterHashingMatchesBallsInBins) {
  std::mt19937_64 rng(21);
  for (const auto& [n, m] : std::vector<std::pair<uint64_t, uint64_t>>{
           {20000, 16384}, {5000, 65536}, {100000, 1 << 20}}) {
    std::vector<uint64_t> ids(n);
    for (auto& id : ids) id = rng();
    const auto s = hash_collision_stats(ids, m);
    ASSERT_EQ(s.before, n);
    const double mean = oracle::expected_occupied(n, m);
    const double sd = std::sqrt(oracle::occupied_variance(n, m));
    EXPECT_NEAR(static_cast<double>(s.after), mean, 3 * sd) << n << " into " << m;
    EXPECT_NEAR(expected_distinct(n, m), mean, 1e-6 * mean);
  }
}

TEST(SplitShardsTest, Examples) {
  std::vector<Example> ex(10);
  for (size_t i = 0; i < ex.size(); ++i) ex[i].ts = static_cast<Timestamp>(i);
  auto two = split_shards(ex, 2);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].size(), 5u);
  EXPECT_EQ(two[1].front().ts, 5);
  auto one = split_shards(ex, 1);
  EXPECT_EQ(one[0].data(), ex.data());
  EXPECT_EQ(one[0].size(), 10u);
  EXPECT_THROW(split_shards(ex, 11), ContractViolation);
  EXPECT_THROW(split_shards(ex, 0), ContractViolation);
  std::swap(ex[3], ex[4]);
  EXPECT_THROW(split_shards(ex, 2), ContractViolation);
}

TEST(SplitShardsTest, ConcatenationRestoresInput) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t len = 1 + rng() % 300;
    std::vector<Example> ex(len);
    Timestamp t = 0;
    for (auto& e : ex) {
      t += static_cast<Timestamp>(rng() % 3);
      e.ts = t;
      e.label = static_cast<int>(rng() % 2);
      e.features = {{0, rng()}};
    }
    const size_t n = 1 + rng() % len;
    const auto shards = split_shards(ex, n);
    ASSERT_EQ(shards.size(), n);
    std::vector<Example> joined;
    size_t lo = len, hi = 0;
    for (const auto& s : shards) {
      joined.insert(joined.end(), s.begin(), s.end());
      lo = std::min(lo, s.size());
      hi = std::max(hi, s.size());
    }
    EXPECT_EQ(joined, ex);
    EXPECT_LE(hi - lo, 1u);
  }
}

TEST(DriftTest, DeterministicUnderSeed) {
  DriftConfig c;
  c.num_examples = 5000;
  const auto a = gen_synthetic_drift(c);
  EXPECT_EQ(a, gen_synthetic_drift(c));
  c.seed = 2;
  EXPECT_NE(a, gen_synthetic_drift(c));
  for (size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].ts, static_cast<Timestamp>(i));
    ASSERT_EQ(a[i].features.size(), 2u);
  }
}

TEST(DriftTest, ValidatesProbabilityRange) {
  DriftConfig c;
  c.base_ctr = 0.1;
  c.drift_amplitude = 0.2;
  EXPECT_THROW(c.validate(), ContractViolation);
  c = DriftConfig{};
  c.zipf_exponent = 0;
  EXPECT_THROW(c.validate(), ContractViolation);
}

TEST(DriftTest, ItemFrequenciesFollowZipfSlope) {
  DriftConfig c;
  c.num_examples = 400000;
  c.zipf_exponent = 1.1;
  c.num_ids = 2000;
  std::map<uint64_t, double> counts;
  for (const auto& ex : gen_synthetic_drift(c)) counts[ex.features[0].id] += 1;
  // Least-squares slope of log(count) on log(rank) over well-populated ranks.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int ranks = 100;
  for (int k = 1; k <= ranks; ++k) {
    const double x = std::log(k), y = std::log(counts[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (ranks * sxy - sx * sy) / (ranks * sxx - sx * sx);
  EXPECT_NEAR(slope, -1.1, 0.05);
}

TEST(DriftTest, WindowPositiveRateTracksSinusoid) {
  DriftConfig c;
  c.num_examples = 200000;
  c.drift_period = 50000;
  const auto ex = gen_synthetic_drift(c);
  const Timestamp window = 5000;
  for (uint64_t id : {1, 2}) {
    for (Timestamp start = 0; start < static_cast<Timestamp>(ex.size()); start += window) {
      double n = 0, pos = 0, expected = 0;
      for (Timestamp t = start; t < start + window; ++t) {
        const auto& e = ex[static_cast<size_t>(t)];
        if (e.features[0].id != id) continue;
        n += 1;
        pos += e.label;
        expected += drift_probability(c, id, t);
      }
      ASSERT_GT(n, 100);
      expected /= n;
      const auto band = oracle::binomial_interval(expected, n, 3.0);
      EXPECT_GE(pos / n, band.lo) << "id " << id << " window " << start;
      EXPECT_LE(pos / n, band.hi) << "id " << id << " window " << start;
    }
  }
}

TEST(DriftTest, ZeroAmplitudeIsStationary) {
  DriftConfig c;
  c.drift_amplitude = 0;
  c.num_examples = 100000;
  for (uint64_t id = 1; id < 50; ++id) EXPECT_DOUBLE_EQ(drift_probability(c, id, id * 977), c.base_ctr);
  const auto ex = gen_synthetic_drift(c);
  for (size_t start = 0; start < ex.size(); start += 20000) {
    double pos = 0;
    for (size_t i = start; i < start + 20000; ++i) pos += ex[i].label;
    const auto band = oracle::binomial_interval(c.base_ctr, 20000, 3.0);
    EXPECT_GE(pos / 20000, band.lo);
    EXPECT_LE(pos / 20000, band.hi);
  }
}

TEST(ExampleFileTest, RoundTrip) {
  testing::ScratchDir dir("examples");
  DriftConfig c;
  c.num_examples = 1000;
  c.num_slots = 3;
  c.context_effect = 0.02;
  const auto ex = gen_synthetic_drift(c);
  write_examples(dir.path() / "e.txt", ex);
  const auto back = read_examples(dir.path() / "e.txt");
  EXPECT_EQ(back.examples, ex);
  EXPECT_EQ(back.stats.malformed, 0u);
}

}  // namespace
}  // namespace freshrec
