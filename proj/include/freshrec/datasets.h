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
#include <span>
#include <stdexcept>
#include <vector>

#include "freshrec/core.h"

namespace freshrec {

/// An input file is missing or unreadable.
class DataFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- MovieLens --------------------------------------------------------------

inline constexpr uint32_t kUserSlot = 0;
inline constexpr uint32_t kMovieSlot = 1;

struct RawRating {
  uint64_t user_id = 0;
  uint64_t movie_id = 0;
  double rating = 0;
  Timestamp ts = 0;

  friend bool operator==(const RawRating&, const RawRating&) = default;
};

bool rating_in_scale(double rating) noexcept;

/// 1 iff rating >= 3.5. Throws ContractViolation outside [0.5, 5.0].
int binarize_label(double rating);

struct LoadStats {
  size_t rows = 0;          // data rows seen, header excluded
  size_t loaded = 0;
  size_t malformed = 0;     // wrong column count or unparsable fields
  size_t out_of_scale = 0;  // MovieLens ratings outside [0.5, 5.0]
  size_t subsampled = 0;    // dropped by the user-bucket filter
};

struct LoadedDataset {
  std::vector<Example> examples;
  LoadStats stats;
};

/// Keeps users whose id hashes into the first `keep` of `buckets` buckets.
struct UserSubsample {
  uint32_t keep = 1;
  uint32_t buckets = 1;

  bool keeps(uint64_t user_id) const noexcept;
};

/// Reads `userId,movieId,rating,timestamp` CSV into two-slot examples
/// (user, movie), stably sorted by timestamp.
LoadedDataset load_movielens(const std::filesystem::path& path, UserSubsample subsample = {});

/// Converts ratings to examples, skipping (and counting) out-of-scale rows.
LoadedDataset ratings_to_examples(std::span<const RawRating> ratings, UserSubsample subsample = {});

void write_movielens_csv(const std::filesystem::path& path, std::span<const RawRating> ratings);

/// Latent-factor generator producing MovieLens-shaped ratings.
struct RatingsConfig {
  uint64_t num_users = 5000;
  uint64_t num_movies = 2000;
  size_t num_ratings = 200000;
  uint32_t latent_dim = 4;
  uint64_t user_id_range = 162541;   // user ids are drawn from [1, range]
  uint64_t movie_id_range = 209171;
  double bias_std = 0.6;
  double factor_std = 0.5;
  double noise_std = 0.5;
  double movie_zipf = 0.8;
  uint64_t seed = 1;

  void validate() const;
};

std::vector<RawRating> gen_synthetic_ratings(const RatingsConfig& config);

// --- Criteo -----------------------------------------------------------------

inline constexpr int kCriteoIntegerColumns = 13;
inline constexpr int kCriteoCategoricalColumns = 26;
inline constexpr uint32_t kCriteoSlots = kCriteoIntegerColumns + kCriteoCategoricalColumns;

/// Feature id for a raw token in a slot. Deterministic in (seed, slot, token).
uint64_t tokenize(uint64_t seed, uint32_t slot, std::string_view token) noexcept;

/// Reads Criteo TSV (label, 13 integer, 26 categorical columns). Integer
/// columns are log2-bucketed before tokenizing; empty fields map to a
/// per-slot missing token. Timestamps are line indices.
LoadedDataset load_criteo(const std::filesystem::path& path, uint64_t seed);

// --- Hash collisions --------------------------------------------------------

struct CollisionStats {
  uint64_t before = 0;
  uint64_t after = 0;
  double rate = 0;  // (before - after) / before
};

double collision_rate(uint64_t before, uint64_t after);

/// First 8 bytes of MD5 over the little-endian id, reduced into [0, space).
uint64_t md5_reduce(uint64_t id, uint64_t space);

CollisionStats collision_stats(std::span<const uint64_t> ids,
                               const std::function<uint64_t(uint64_t)>& reducer);

/// collision_stats with md5_reduce into `space`.
CollisionStats hash_collision_stats(std::span<const uint64_t> ids, uint64_t space);

/// Expected distinct bins after throwing n balls into m bins.
double expected_distinct(uint64_t n, uint64_t m);

// --- Sharding ---------------------------------------------------------------

/// Contiguous chronological shards with sizes equal to within one; earlier
/// shards get the extra element. Throws if n == 0, n > size, or the input is
/// not sorted by timestamp.
std::vector<std::span<const Example>> split_shards(std::span<const Example> examples, size_t n);

// --- Concept drift ----------------------------------------------------------

/// Slot 0 carries a Zipf-distributed item whose positive rate follows
/// base_ctr + drift_amplitude * sin(2*pi*t/drift_period + phase(id)). Slots
/// 1..num_slots-1 carry uniformly drawn context ids with fixed, zero-mean
/// additive effects. Timestamps are example indices.
struct DriftConfig {
  uint64_t num_ids = 1000;
  double zipf_exponent = 1.0;
  int64_t drift_period = 20000;
  double base_ctr = 0.3;
  double drift_amplitude = 0.2;
  uint64_t seed = 1;
  size_t num_examples = 100000;
  uint32_t num_slots = 2;
  uint64_t context_ids = 100;
  double context_effect = 0.05;

  void validate() const;
};

/// Programmed positive probability of item `id` (1-based rank) at time t,
/// before context effects.
double drift_probability(const DriftConfig& config, uint64_t id, Timestamp t);

std::vector<Example> gen_synthetic_drift(const DriftConfig& config);

/// Zipf sampler over ranks 1..n with P(k) proportional to k^-s.
class ZipfSampler {
 public:
  ZipfSampler(uint64_t n, double exponent);
  /// Maps a uniform draw in [0, 1) to a rank.
  uint64_t operator()(double u) const;
  double probability(uint64_t rank) const;

 private:
  std::vector<double> cdf_;
};

// --- Example files ----------------------------------------------------------

/// One `E` record per line.
void write_examples(const std::filesystem::path& path, std::span<const Example> examples);
LoadedDataset read_examples(const std::filesystem::path& path);

}  // namespace freshrec
