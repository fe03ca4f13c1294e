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

#include "freshrec/datasets.h"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <unordered_set>

#include "freshrec/joiner.h"

namespace freshrec {
namespace fs = std::filesystem;

namespace {

double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::vector<std::string_view> split_view(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    const size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

template <typename T>
bool parse_field(std::string_view s, T& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataFileError("cannot open data file " + path.string());
  return in;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

void sort_by_time(std::vector<Example>& examples) {
  std::stable_sort(examples.begin(), examples.end(),
                   [](const Example& a, const Example& b) { return a.ts < b.ts; });
}

}  // namespace

// --- MovieLens --------------------------------------------------------------

bool rating_in_scale(double rating) noexcept { return rating >= 0.5 && rating <= 5.0; }

int binarize_label(double rating) {
  if (!rating_in_scale(rating)) {
    throw ContractViolation("rating " + std::to_string(rating) + " outside [0.5, 5.0]");
  }
  return rating >= 3.5 ? 1 : 0;
}

bool UserSubsample::keeps(uint64_t user_id) const noexcept {
  return buckets <= 1 || mix64(user_id ^ 0x5bd1e9955bd1e995ULL) % buckets < keep;
}

LoadedDataset ratings_to_examples(std::span<const RawRating> ratings, UserSubsample subsample) {
  LoadedDataset out;
  for (const auto& r : ratings) {
    ++out.stats.rows;
    if (!rating_in_scale(r.rating)) {
      ++out.stats.out_of_scale;
      continue;
    }
    if (!subsample.keeps(r.user_id)) {
      ++out.stats.subsampled;
      continue;
    }
    out.examples.push_back(
        {{{kUserSlot, r.user_id}, {kMovieSlot, r.movie_id}}, binarize_label(r.rating), r.ts});
  }
  out.stats.loaded = out.examples.size();
  sort_by_time(out.examples);
  return out;
}

LoadedDataset load_movielens(const fs::path& path, UserSubsample subsample) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataFileError(path.string() + ": empty file");
  strip_cr(line);
  if (line != "userId,movieId,rating,timestamp") {
    throw DataFileError(path.string() + ": expected header userId,movieId,rating,timestamp");
  }
  std::vector<RawRating> ratings;
  size_t malformed = 0;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_view(line, ',');
    RawRating r;
    if (f.size() != 4 || !parse_field(f[0], r.user_id) || !parse_field(f[1], r.movie_id) ||
        !parse_field(f[2], r.rating) || !parse_field(f[3], r.ts)) {
      ++malformed;
      continue;
    }
    ratings.push_back(r);
  }
  auto out = ratings_to_examples(ratings, subsample);
  out.stats.rows += malformed;
  out.stats.malformed = malformed;
  return out;
}

void write_movielens_csv(const fs::path& path, std::span<const RawRating> ratings) {
  std::ofstream out(path);
  if (!out) throw DataFileError("cannot write " + path.string());
  out << "userId,movieId,rating,timestamp\n";
  char buf[32];
  for (const auto& r : ratings) {
    const auto end = std::to_chars(buf, buf + sizeof(buf), r.rating, std::chars_format::fixed, 1);
    out << r.user_id << ',' << r.movie_id << ',' << std::string_view(buf, end.ptr - buf) << ','
        << r.ts << '\n';
  }
}

void RatingsConfig::validate() const {
  if (num_users == 0 || num_movies == 0) throw ContractViolation("ratings: empty id sets");
  if (num_users > user_id_range || num_movies > movie_id_range)
    throw ContractViolation("ratings: id range smaller than id count");
  if (latent_dim == 0) throw ContractViolation("ratings: latent_dim must be >= 1");
  if (movie_zipf <= 0) throw ContractViolation("ratings: movie_zipf must be > 0");
}

std::vector<RawRating> gen_synthetic_ratings(const RatingsConfig& c) {
  c.validate();
  std::mt19937_64 rng(mix64(c.seed ^ 0x726174696e6773ULL));
  std::normal_distribution<double> normal(0.0, 1.0);

  auto draw_ids = [&](uint64_t count, uint64_t range) {
    std::unordered_set<uint64_t> seen;
    std::vector<uint64_t> ids;
    while (ids.size() < count) {
      const uint64_t id = 1 + rng() % range;
      if (seen.insert(id).second) ids.push_back(id);
    }
    return ids;
  };
  const auto users = draw_ids(c.num_users, c.user_id_range);
  const auto movies = draw_ids(c.num_movies, c.movie_id_range);

  auto factors = [&](uint64_t n) {
    std::vector<double> f(n * c.latent_dim);
    for (auto& x : f) x = c.factor_std * normal(rng);
    return f;
  };
  std::vector<double> user_bias(c.num_users), movie_bias(c.num_movies);
  for (auto& b : user_bias) b = c.bias_std * normal(rng);
  for (auto& b : movie_bias) b = c.bias_std * normal(rng);
  const auto pu = factors(c.num_users);
  const auto qm = factors(c.num_movies);

  // Lognormal user activity; Zipf movie popularity.
  std::vector<double> activity(c.num_users);
  double total = 0;
  for (auto& a : activity) total += (a = std::exp(normal(rng)));
  std::vector<double> user_cdf(c.num_users);
  double acc = 0;
  for (uint64_t u = 0; u < c.num_users; ++u) user_cdf[u] = (acc += activity[u] / total);
  const ZipfSampler movie_rank(c.num_movies, c.movie_zipf);

  std::vector<RawRating> out;
  out.reserve(c.num_ratings);
  Timestamp ts = 1'000'000'000;
  for (size_t i = 0; i < c.num_ratings; ++i) {
    const uint64_t u = std::min<uint64_t>(
        static_cast<uint64_t>(std::upper_bound(user_cdf.begin(), user_cdf.end(), unit_uniform(rng)) -
                              user_cdf.begin()),
        c.num_users - 1);
    const uint64_t m = movie_rank(unit_uniform(rng)) - 1;
    double score = 3.4 + user_bias[u] + movie_bias[m] + c.noise_std * normal(rng);
    for (uint32_t k = 0; k < c.latent_dim; ++k)
      score += pu[u * c.latent_dim + k] * qm[m * c.latent_dim + k];
    const double rating = std::clamp(std::round(score * 2.0) / 2.0, 0.5, 5.0);
    ts += static_cast<Timestamp>(rng() % 120);
    out.push_back({users[u], movies[m], rating, ts});
  }
  return out;
}

// --- Criteo -----------------------------------------------------------------

uint64_t tokenize(uint64_t seed, uint32_t slot, std::string_view token) noexcept {
  const auto bytes = std::as_bytes(std::span(token.data(), token.size()));
  const uint64_t h = fnv1a64({reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size()});
  return mix64(h ^ mix64(seed + (uint64_t{slot} << 32)));
}

LoadedDataset load_criteo(const fs::path& path, uint64_t seed) {
  auto in = open_input(path);
  LoadedDataset out;
  std::string line;
  Timestamp index = 0;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    ++out.stats.rows;
    const auto f = split_view(line, '\t');
    int label = 0;
    if (f.size() != 1 + kCriteoSlots || !parse_field(f[0], label) || (label != 0 && label != 1)) {
      ++out.stats.malformed;
      continue;
    }
    Example ex{{}, label, index++};
    ex.features.reserve(kCriteoSlots);
    bool ok = true;
    for (uint32_t slot = 0; slot < kCriteoSlots && ok; ++slot) {
      std::string_view field = f[1 + slot];
      std::string token;
      if (field.empty()) {
        token = "<missing>";
      } else if (slot < kCriteoIntegerColumns) {
        int64_t v = 0;
        ok = parse_field(field, v);
        token = v <= 0 ? std::to_string(v) : "b" + std::to_string(std::bit_width(uint64_t(v)));
      } else {
        token = field;
      }
      ex.features.push_back({slot, tokenize(seed, slot, token)});
    }
    if (!ok) {
      ++out.stats.malformed;
      --index;
      continue;
    }
    out.examples.push_back(std::move(ex));
  }
  out.stats.loaded = out.examples.size();
  return out;
}

// --- Hash collisions --------------------------------------------------------

double collision_rate(uint64_t before, uint64_t after) {
  if (after > before) throw ContractViolation("after-hash count exceeds distinct ids");
  if (before == 0) return 0.0;
  return static_cast<double>(before - after) / static_cast<double>(before);
}

uint64_t md5_reduce(uint64_t id, uint64_t space) {
  if (space == 0) throw ContractViolation("hash space must be >= 1");
  uint8_t in[8];
  for (int i = 0; i < 8; ++i) in[i] = static_cast<uint8_t>(id >> (8 * i));
  uint8_t digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(in, sizeof(in), digest, &len, EVP_md5(), nullptr) != 1 || len < 8) {
    throw std::runtime_error("MD5 digest failed");
  }
  uint64_t h = 0;
  for (int i = 0; i < 8; ++i) h |= uint64_t{digest[i]} << (8 * i);
  return h % space;
}

CollisionStats collision_stats(std::span<const uint64_t> ids,
                               const std::function<uint64_t(uint64_t)>& reducer) {
  std::unordered_set<uint64_t> before(ids.begin(), ids.end());
  std::unordered_set<uint64_t> after;
  after.reserve(before.size());
  for (uint64_t id : before) after.insert(reducer(id));
  return {before.size(), after.size(), collision_rate(before.size(), after.size())};
}

CollisionStats hash_collision_stats(std::span<const uint64_t> ids, uint64_t space) {
  if (space == 0) throw ContractViolation("hash space must be >= 1");
  return collision_stats(ids, [space](uint64_t id) { return md5_reduce(id, space); });
}

double expected_distinct(uint64_t n, uint64_t m) {
  if (m == 0) throw ContractViolation("bin count must be >= 1");
  const double md = static_cast<double>(m);
  return md * -std::expm1(static_cast<double>(n) * std::log1p(-1.0 / md));
}

// --- Sharding ---------------------------------------------------------------

std::vector<std::span<const Example>> split_shards(std::span<const Example> examples, size_t n) {
  if (n == 0) throw ContractViolation("split_shards: n must be >= 1");
  if (n > examples.size()) {
    throw ContractViolation("split_shards: " + std::to_string(n) + " shards for " +
                            std::to_string(examples.size()) + " examples");
  }
  for (size_t i = 1; i < examples.size(); ++i) {
    if (examples[i].ts < examples[i - 1].ts)
      throw ContractViolation("split_shards: examples not sorted by timestamp");
  }
  std::vector<std::span<const Example>> out;
  const size_t base = examples.size() / n, extra = examples.size() % n;
  size_t start = 0;
  for (size_t i = 0; i < n; ++i) {
    const size_t len = base + (i < extra ? 1 : 0);
    out.push_back(examples.subspan(start, len));
    start += len;
  }
  return out;
}

// --- Concept drift ----------------------------------------------------------

void DriftConfig::validate() const {
  if (num_ids == 0) throw ContractViolation("drift: num_ids must be >= 1");
  if (!(zipf_exponent > 0)) throw ContractViolation("drift: zipf_exponent must be > 0");
  if (drift_period <= 0) throw ContractViolation("drift: drift_period must be > 0");
  if (num_slots == 0) throw ContractViolation("drift: num_slots must be >= 1");
  if (num_slots > 1 && context_ids == 0) throw ContractViolation("drift: context_ids must be >= 1");
  if (drift_amplitude < 0 || context_effect < 0)
    throw ContractViolation("drift: amplitudes must be >= 0");
  const double spread = drift_amplitude + (num_slots - 1) * context_effect;
  if (!(base_ctr - spread > 0 && base_ctr + spread < 1)) {
    throw ContractViolation("drift: base_ctr +/- amplitudes must stay inside (0, 1)");
  }
}

double drift_probability(const DriftConfig& c, uint64_t id, Timestamp t) {
  const double phase =
      2 * std::numbers::pi * static_cast<double>(mix64(c.seed ^ mix64(id)) >> 11) * 0x1.0p-53;
  return c.base_ctr +
         c.drift_amplitude * std::sin(2 * std::numbers::pi * static_cast<double>(t) /
                                          static_cast<double>(c.drift_period) +
                                      phase);
}

ZipfSampler::ZipfSampler(uint64_t n, double exponent) {
  if (n == 0 || !(exponent > 0)) throw ContractViolation("zipf: need n >= 1 and exponent > 0");
  cdf_.resize(n);
  double acc = 0;
  for (uint64_t k = 1; k <= n; ++k) cdf_[k - 1] = (acc += std::pow(static_cast<double>(k), -exponent));
  for (auto& x : cdf_) x /= acc;
}

uint64_t ZipfSampler::operator()(double u) const {
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return std::min<uint64_t>(static_cast<uint64_t>(it - cdf_.begin()), cdf_.size() - 1) + 1;
}

double ZipfSampler::probability(uint64_t rank) const {
  if (rank == 0 || rank > cdf_.size()) return 0.0;
  return cdf_[rank - 1] - (rank > 1 ? cdf_[rank - 2] : 0.0);
}

std::vector<Example> gen_synthetic_drift(const DriftConfig& c) {
  c.validate();
  std::mt19937_64 rng(mix64(c.seed ^ 0x6472696674ULL));
  const ZipfSampler items(c.num_ids, c.zipf_exponent);

  // Per-slot context effects, centered so each slot averages to zero.
  std::vector<std::vector<double>> effects(c.num_slots);
  for (uint32_t s = 1; s < c.num_slots; ++s) {
    auto& e = effects[s];
    e.resize(c.context_ids);
    double mean = 0;
    for (auto& x : e) mean += (x = c.context_effect * (2 * unit_uniform(rng) - 1));
    mean /= static_cast<double>(e.size());
    for (auto& x : e) x -= mean;
    // Re-centering can push one value past the bound; rescale if so.
    double peak = 0;
    for (double x : e) peak = std::max(peak, std::abs(x));
    if (peak > c.context_effect) {
      for (auto& x : e) x *= c.context_effect / peak;
    }
  }

  std::vector<Example> out;
  out.reserve(c.num_examples);
  for (size_t i = 0; i < c.num_examples; ++i) {
    const auto t = static_cast<Timestamp>(i);
    Example ex{{}, 0, t};
    ex.features.reserve(c.num_slots);
    const uint64_t item = items(unit_uniform(rng));
    ex.features.push_back({0, item});
    double p = drift_probability(c, item, t);
    for (uint32_t s = 1; s < c.num_slots; ++s) {
      const uint64_t ctx = rng() % c.context_ids;
      ex.features.push_back({s, ctx + 1});
      p += effects[s][ctx];
    }
    ex.label = unit_uniform(rng) < p ? 1 : 0;
    out.push_back(std::move(ex));
  }
  return out;
}

// --- Example files ----------------------------------------------------------

void write_examples(const fs::path& path, std::span<const Example> examples) {
  std::ofstream out(path);
  if (!out) throw DataFileError("cannot write " + path.string());
  for (const auto& ex : examples) out << format_record(JoinedExample{ex.features, ex.label, ex.ts, false}) << '\n';
}

LoadedDataset read_examples(const fs::path& path) {
  auto in = open_input(path);
  LoadedDataset out;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    ++out.stats.rows;
    try {
      out.examples.push_back(std::get<JoinedExample>(parse_record(line)).to_example());
    } catch (const std::exception&) {
      ++out.stats.malformed;
    }
  }
  out.stats.loaded = out.examples.size();
  sort_by_time(out.examples);
  return out;
}

}  // namespace freshrec
