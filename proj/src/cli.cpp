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

#include "freshrec/cli.h"

#include <CLI11.hpp>
#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "freshrec/example_queue.h"

namespace freshrec::cli {
namespace {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;
using Json = nlohmann::ordered_json;

// --- Config parsing ---------------------------------------------------------

// Typed access to one ini file. Every key read is remembered so leftovers
// can be reported as unknown.
class IniReader {
 public:
  IniReader(pt::ptree tree, fs::path base) : tree_(std::move(tree)), base_(std::move(base)) {}

  template <typename T>
  void get(const std::string& section, const std::string& key, T& out) {
    const std::string field = section + "." + key;
    known_.insert(field);
    const auto* node = find(section, key);
    if (!node) return;
    out = parse<T>(field, trim(node->data()));
  }

  void get_path(const std::string& section, const std::string& key, fs::path& out) {
    std::string raw;
    get(section, key, raw);
    if (raw.empty()) return;
    fs::path p(raw);
    out = p.is_absolute() ? p : base_ / p;
  }

  template <typename T>
  void get_list(const std::string& section, const std::string& key, std::vector<T>& out) {
    std::string raw;
    get(section, key, raw);
    if (raw.empty()) return;
    out.clear();
    std::stringstream in(raw);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(parse<T>(section + "." + key, trim(item)));
  }

  bool has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
  }

  /// Throws on the first section or key that nothing asked for.
  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      if (body.empty()) throw ConfigError(section, "keys must live inside a [section]");
      for (const auto& [key, value] : body) {
        const std::string field = section + "." + key;
        if (!known_.contains(field)) throw ConfigError(field, "unknown key");
      }
    }
  }

 private:
  const pt::ptree* find(const std::string& section, const std::string& key) const {
    const auto s = tree_.find(section);
    if (s == tree_.not_found()) return nullptr;
    const auto k = s->second.find(key);
    return k == s->second.not_found() ? nullptr : &k->second;
  }

  static std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
  }

  template <typename T>
  static T parse(const std::string& field, const std::string& text) {
    if constexpr (std::is_same_v<T, std::string>) {
      return text;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw ConfigError(field, "expected true or false, got '" + text + "'");
    } else {
      T value{};
      const auto* end = text.data() + text.size();
      const auto [ptr, ec] = std::from_chars(text.data(), end, value);
      if (text.empty() || ec != std::errc() || ptr != end) {
        const char* what = std::is_floating_point_v<T> ? "a number"
                           : std::is_signed_v<T>        ? "an integer"
                                                        : "a non-negative integer";
        throw ConfigError(field, std::string("expected ") + what + ", got '" + text + "'");
      }
      return value;
    }
  }

  pt::ptree tree_;
  fs::path base_;
  std::set<std::string> known_;
};

DataSource parse_source(const std::string& s) {
  static const std::map<std::string, DataSource> names{{"drift", DataSource::kDrift},
                                                       {"ratings", DataSource::kRatings},
                                                       {"movielens", DataSource::kMovieLens},
                                                       {"criteo", DataSource::kCriteo},
                                                       {"examples", DataSource::kExamples}};
  const auto it = names.find(s);
  if (it == names.end()) {
    throw ConfigError("data.source",
                      "expected drift, ratings, movielens, criteo or examples, got '" + s + "'");
  }
  return it->second;
}

// Runs a library validate() and re-labels its ContractViolation.
template <typename Fn>
void check(const std::string& section, Fn&& fn) {
  try {
    fn();
  } catch (const ContractViolation& e) {
    std::string msg = e.what();
    const std::string prefix = section + ": ";
    if (msg.starts_with(prefix)) msg.erase(0, prefix.size());
    throw ConfigError(section, msg);
  }
}

}  // namespace

CliConfig load_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw DataFileError("config file not found: " + path.string());
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config", e.what());
  }
  IniReader r(std::move(tree), path.parent_path());
  CliConfig c;

  std::string source = "drift";
  r.get("data", "source", source);
  c.data.source = parse_source(source);
  r.get_path("data", "path", c.data.path);
  r.get("data", "subsample_keep", c.data.subsample.keep);
  r.get("data", "subsample_buckets", c.data.subsample.buckets);

  auto& d = c.data.drift;
  r.get("drift", "num_examples", d.num_examples);
  r.get("drift", "num_ids", d.num_ids);
  r.get("drift", "zipf_exponent", d.zipf_exponent);
  r.get("drift", "drift_period", d.drift_period);
  r.get("drift", "base_ctr", d.base_ctr);
  r.get("drift", "drift_amplitude", d.drift_amplitude);
  r.get("drift", "num_slots", d.num_slots);
  r.get("drift", "context_ids", d.context_ids);
  r.get("drift", "context_effect", d.context_effect);

  auto& g = c.data.ratings;
  r.get("ratings", "num_users", g.num_users);
  r.get("ratings", "num_movies", g.num_movies);
  r.get("ratings", "num_ratings", g.num_ratings);
  r.get("ratings", "latent_dim", g.latent_dim);
  r.get("ratings", "user_id_range", g.user_id_range);
  r.get("ratings", "movie_id_range", g.movie_id_range);
  r.get("ratings", "bias_std", g.bias_std);
  r.get("ratings", "factor_std", g.factor_std);
  r.get("ratings", "noise_std", g.noise_std);
  r.get("ratings", "movie_zipf", g.movie_zipf);

  auto& t = c.trainer;
  r.get("model", "dim", t.model.dim);
  r.get_list("model", "mlp_layers", t.model.mlp_layers);
  r.get("trainer", "ps_shards", t.ps_shards);
  r.get("trainer", "batch_size", t.batch_size);
  r.get("trainer", "sparse_lr", t.sparse_lr);
  r.get("trainer", "dense_lr", t.dense.learning_rate);
  std::string embedding = "collisionless";
  r.get("trainer", "embedding", embedding);
  if (embedding == "hashed") {
    t.embedding = EmbeddingMode::kHashed;
  } else if (embedding != "collisionless") {
    throw ConfigError("trainer.embedding", "expected collisionless or hashed, got '" + embedding + "'");
  }
  r.get("trainer", "hash_space", t.hash_space);
  r.get("trainer", "modulus", t.modulus);
  r.get("trainer", "admit_threshold", t.table.admit_threshold);
  r.get("trainer", "admit_probability", t.table.admit_probability);
  r.get("trainer", "ttl", t.table.ttl);
  r.get("trainer", "initial_capacity", t.table.initial_capacity);
  r.get("trainer", "exact_counts", t.table.exact_counts);
  r.get("trainer", "init_scale", t.table.init_scale);

  auto& e = c.experiment;
  r.get("experiment", "seed", e.seed);
  r.get_list("experiment", "seeds", e.seeds);
  r.get("experiment", "epochs", e.epochs);
  r.get("experiment", "test_fraction", e.test_fraction);
  r.get_list("experiment", "shard_counts", e.shard_counts);
  r.get("experiment", "num_shards", e.num_shards);
  r.get("experiment", "batch_fraction", e.batch_fraction);
  r.get("experiment", "sync_interval", e.schedule.sparse_interval);
  r.get("experiment", "dense_interval", e.schedule.dense_interval);
  r.get("experiment", "snapshot_every", e.snapshot_every);
  r.get("experiment", "final_fraction", e.final_fraction);
  if (r.has("experiment", "fail_shard") || r.has("experiment", "fail_at")) {
    if (!r.has("experiment", "fail_shard") || !r.has("experiment", "fail_at")) {
      throw ConfigError("experiment.fail_shard", "fail_shard and fail_at must be set together");
    }
    e.failure.emplace();
  }
  FailurePlan plan;
  r.get("experiment", "fail_shard", plan.shard);
  r.get("experiment", "fail_at", plan.at_step);
  if (e.failure) e.failure = plan;

  auto& j = c.joiner_sim;
  r.get("joiner", "memory_window", j.joiner.memory_window);
  r.get("joiner", "disk_ttl", j.joiner.disk_ttl);
  r.get("joiner", "action_wait", j.joiner.action_wait);
  r.get("joiner", "negative_rate", j.joiner.negative_rate);
  r.get("joiner", "compact_min_dead", j.joiner.compact_min_dead);
  std::string policy = "drop";
  r.get("joiner", "timeout_policy", policy);
  if (policy == "negative") {
    j.joiner.timeout_policy = TimeoutPolicy::kEmitNegative;
  } else if (policy != "drop") {
    throw ConfigError("joiner.timeout_policy", "expected drop or negative, got '" + policy + "'");
  }
  r.get_path("joiner", "stream", j.stream);
  r.get("joiner", "mean_delay", j.mean_delay);
  r.get("joiner", "late_fraction", j.late_fraction);
  r.get("joiner", "drop_fraction", j.drop_fraction);
  r.get("joiner", "arrival_jitter", j.arrival_jitter);
  r.get("joiner", "flush_every", j.flush_every);

  r.reject_unknown();
  validate(c);
  return c;
}

void validate(const CliConfig& c) {
  const bool file_source = c.data.source == DataSource::kMovieLens ||
                           c.data.source == DataSource::kCriteo ||
                           c.data.source == DataSource::kExamples;
  if (file_source && c.data.path.empty()) throw ConfigError("data.path", "required for this source");
  if (c.data.subsample.buckets == 0 || c.data.subsample.keep > c.data.subsample.buckets) {
    throw ConfigError("data.subsample_keep", "need 0 <= keep <= buckets and buckets >= 1");
  }
  if (c.data.source == DataSource::kDrift) check("drift", [&] { c.data.drift.validate(); });
  if (c.data.source == DataSource::kRatings) check("ratings", [&] { c.data.ratings.validate(); });
  check("trainer", [&] { c.trainer.validate(); });

  const auto& e = c.experiment;
  if (e.epochs == 0) throw ConfigError("experiment.epochs", "must be >= 1");
  if (!(e.test_fraction > 0 && e.test_fraction < 1))
    throw ConfigError("experiment.test_fraction", "must be in (0, 1)");
  if (!(e.batch_fraction >= 0 && e.batch_fraction < 1))
    throw ConfigError("experiment.batch_fraction", "must be in [0, 1)");
  if (!(e.final_fraction > 0 && e.final_fraction <= 1))
    throw ConfigError("experiment.final_fraction", "must be in (0, 1]");
  if (e.num_shards == 0) throw ConfigError("experiment.num_shards", "must be >= 1");
  if (e.shard_counts.empty()) throw ConfigError("experiment.shard_counts", "must not be empty");
  for (size_t n : e.shard_counts)
    if (n == 0) throw ConfigError("experiment.shard_counts", "entries must be >= 1");
  check("experiment.sync_interval", [&] { freshrec::validate(e.schedule); });
  if (e.failure && e.failure->shard >= c.trainer.ps_shards) {
    throw ConfigError("experiment.fail_shard", "shard " + std::to_string(e.failure->shard) +
                                                   " is outside " +
                                                   std::to_string(c.trainer.ps_shards) + " PS shards");
  }

  const auto& j = c.joiner_sim;
  check("joiner", [&] { freshrec::validate(j.joiner); });
  if (!(j.mean_delay >= 0)) throw ConfigError("joiner.mean_delay", "must be >= 0");
  if (!(j.late_fraction >= 0 && j.late_fraction <= 1))
    throw ConfigError("joiner.late_fraction", "must be in [0, 1]");
  if (!(j.drop_fraction >= 0 && j.drop_fraction <= 1))
    throw ConfigError("joiner.drop_fraction", "must be in [0, 1]");
  if (j.arrival_jitter < 0) throw ConfigError("joiner.arrival_jitter", "must be >= 0");
  if (j.flush_every == 0) throw ConfigError("joiner.flush_every", "must be >= 1");
}

LoadedDataset load_data(const DataSpec& spec, DeepFMConfig& model) {
  LoadedDataset data;
  switch (spec.source) {
    case DataSource::kDrift:
      data.examples = gen_synthetic_drift(spec.drift);
      data.stats.rows = data.stats.loaded = data.examples.size();
      break;
    case DataSource::kRatings:
      data = ratings_to_examples(gen_synthetic_ratings(spec.ratings), spec.subsample);
      break;
    case DataSource::kMovieLens:
      data = load_movielens(spec.path, spec.subsample);
      break;
    case DataSource::kCriteo:
      data = load_criteo(spec.path, spec.drift.seed);
      break;
    case DataSource::kExamples:
      data = read_examples(spec.path);
      break;
  }
  if (data.examples.empty()) throw std::runtime_error("data source produced no examples");
  model.num_slots = static_cast<int>(data.examples.front().features.size());
  for (const auto& ex : data.examples) {
    if (ex.features.size() != static_cast<size_t>(model.num_slots))
      throw std::runtime_error("examples disagree on the number of slots");
  }
  return data;
}

std::vector<StreamRecord> simulate_log_stream(std::span<const Example> examples,
                                              const JoinerSimSpec& spec, uint64_t seed) {
  std::vector<StreamRecord> out;
  if (!spec.stream.empty()) {
    std::ifstream in(spec.stream);
    if (!in) throw DataFileError("cannot open stream file " + spec.stream.string());
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      try {
        out.push_back(parse_record(line));
      } catch (const ContractViolation& e) {
        throw std::runtime_error(spec.stream.filename().string() + " line " +
                                 std::to_string(line_no) + ": " + e.what());
      }
    }
    return out;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> delay(spec.mean_delay > 0 ? 1.0 / spec.mean_delay : 1.0);
  std::uniform_int_distribution<Timestamp> jitter(0, spec.arrival_jitter);
  struct Pending {
    Timestamp arrival;
    size_t order;
    StreamRecord record;
  };
  std::vector<Pending> pending;
  pending.reserve(2 * examples.size());
  for (size_t i = 0; i < examples.size(); ++i) {
    const Example& ex = examples[i];
    const uint64_t key = mix64(seed ^ (i + 1));
    pending.push_back({ex.ts + jitter(rng), pending.size(), FeatureLog{key, ex.features, ex.ts}});
    if (unit(rng) < spec.drop_fraction) continue;
    Timestamp lag = spec.mean_delay > 0 ? static_cast<Timestamp>(delay(rng)) : 0;
    if (unit(rng) < spec.late_fraction) lag += spec.joiner.memory_window;
    const ActionKind kind = ex.label ? ActionKind::kPositive : ActionKind::kNegative;
    const Timestamp ts = ex.ts + lag;
    pending.push_back({ts + jitter(rng), pending.size(), ActionLog{key, kind, ts}});
  }
  std::sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
    return std::tie(a.arrival, a.order) < std::tie(b.arrival, b.order);
  });
  out.reserve(pending.size());
  for (auto& p : pending) out.push_back(std::move(p.record));
  return out;
}

namespace {

// --- Subcommands ------------------------------------------------------------

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

class Logger {
 public:
  Logger(std::ostream& err, int verbosity) : err_(err), verbosity_(verbosity) {}
  void info(const std::string& msg) const {
    if (verbosity_ >= 1) err_ << "freshrec: " << msg << '\n';
  }
  void debug(const std::string& msg) const {
    if (verbosity_ >= 2) err_ << "freshrec: " << msg << '\n';
  }

 private:
  std::ostream& err_;
  int verbosity_;
};

void write_json(const fs::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Json json_of(const LoadStats& s) {
  return {{"rows", s.rows},
          {"loaded", s.loaded},
          {"malformed", s.malformed},
          {"out_of_scale", s.out_of_scale},
          {"subsampled", s.subsampled}};
}

Json json_of(const Evaluation& e) {
  return {{"examples", e.examples}, {"positives", e.positives}, {"auc", e.auc}, {"log_loss", e.log_loss}};
}

Json json_of(const FailureReport& r) {
  return {{"shard", r.shard},
          {"restored", r.restored},
          {"version_before", r.version_before},
          {"version_after", r.version_after},
          {"lost_updates", r.lost_updates()},
          {"keys_before", r.keys_before},
          {"keys_after", r.keys_after}};
}

Json json_of(const JoinerCounters& c) {
  return {{"features", c.features},
          {"actions", c.actions},
          {"joins", c.joins},
          {"disk_hits", c.disk_hits},
          {"spilled", c.spilled},
          {"duplicate_features", c.duplicate_features},
          {"duplicate_actions", c.duplicate_actions},
          {"action_misses", c.action_misses},
          {"timeouts_dropped", c.timeouts_dropped},
          {"timeouts_negative", c.timeouts_negative},
          {"sampled_out", c.sampled_out},
          {"compactions", c.compactions}};
}

// Per-arm sums over metric rows.
Json row_counters(std::span<const MetricsRow> rows) {
  std::map<std::string, std::pair<uint64_t, size_t>> by_arm;  // bytes, rows
  size_t undefined = 0;
  for (const auto& r : rows) {
    auto& [bytes, n] = by_arm[r.arm];
    bytes += r.packet_bytes;
    ++n;
    if (r.auc != r.auc) ++undefined;
  }
  Json arms = Json::object();
  for (const auto& [arm, v] : by_arm) arms[arm] = {{"rows", v.second}, {"packet_bytes", v.first}};
  return {{"rows", rows.size()}, {"undefined_auc_rows", undefined}, {"arms", arms}};
}

struct Context {
  CliConfig config;
  fs::path out;
  Logger log;
};

void run_collision(Context& ctx, const LoadedDataset& data) {
  const auto start = Clock::now();
  std::vector<MetricsRow> rows;
  Json seeds = Json::array();
  Json collisions = Json::array();
  bool every_epoch = true;
  for (uint64_t seed : ctx.config.experiment.seed_list()) {
    CollisionConfig cc;
    cc.trainer = ctx.config.trainer;
    cc.trainer.seed = seed;
    cc.epochs = ctx.config.experiment.epochs;
    cc.test_fraction = ctx.config.experiment.test_fraction;
    const auto r = collision_experiment(data.examples, cc);
    Json epochs = Json::array();
    for (const auto& e : r.epochs) {
      ctx.log.debug("seed " + std::to_string(seed) + " epoch " + std::to_string(e.epoch) +
                    ": collisionless " + std::to_string(e.collisionless.auc) + ", hashed " +
                    std::to_string(e.hashed.auc));
      every_epoch = every_epoch && e.collisionless.auc >= e.hashed.auc;
      epochs.push_back({{"epoch", e.epoch},
                        {"collisionless", json_of(e.collisionless)},
                        {"hashed", json_of(e.hashed)}});
    }
    const auto& last = r.epochs.back();
    seeds.push_back({{"seed", seed},
                     {"final_gap", last.collisionless.auc - last.hashed.auc},
                     {"epochs", epochs}});
    if (collisions.empty()) {
      for (const auto& s : r.slot_collisions)
        collisions.push_back({{"before", s.before}, {"after", s.after}, {"rate", s.rate}});
    }
    rows.insert(rows.end(), r.rows.begin(), r.rows.end());
    ctx.log.info("seed " + std::to_string(seed) + " done, final gap " +
                 std::to_string(last.collisionless.auc - last.hashed.auc));
  }
  write_metrics_csv(ctx.out / "metrics.csv", rows);
  write_json(ctx.out / "summary.json", {{"command", "collision-exp"},
                                        {"hash_space", ctx.config.trainer.hash_space},
                                        {"modulus", ctx.config.trainer.modulus},
                                        {"slot_collisions", collisions},
                                        {"collisionless_ge_hashed_every_epoch", every_epoch},
                                        {"seeds", seeds},
                                        {"wall_seconds", seconds_since(start)}});
  write_json(ctx.out / "counters.json", {{"data", json_of(data.stats)}, {"metrics", row_counters(rows)}});
}

void run_online(Context& ctx, const LoadedDataset& data) {
  const auto start = Clock::now();
  const auto& e = ctx.config.experiment;
  std::vector<MetricsRow> rows;
  Json seeds = Json::array();
  for (uint64_t seed : e.seed_list()) {
    FreshnessConfig fc;
    fc.trainer = ctx.config.trainer;
    fc.trainer.seed = seed;
    fc.num_shards = e.num_shards;
    fc.batch_fraction = e.batch_fraction;
    fc.schedule = e.schedule;
    const auto r = online_vs_batch(data.examples, fc);
    rows.insert(rows.end(), r.rows.begin(), r.rows.end());
    seeds.push_back({{"seed", seed},
                     {"online_auc", r.online_auc},
                     {"frozen_auc", r.frozen_auc},
                     {"online_mean_auc", mean_defined(r.online_auc)},
                     {"frozen_mean_auc", mean_defined(r.frozen_auc)},
                     {"online_win_fraction", r.online_win_fraction},
                     {"mean_difference", r.mean_difference},
                     {"pooled_std", r.pooled_std}});
    ctx.log.info("seed " + std::to_string(seed) + ": online wins " +
                 std::to_string(r.online_win_fraction) + " of shards, mean difference " +
                 std::to_string(r.mean_difference));
  }
  write_metrics_csv(ctx.out / "metrics.csv", rows);
  write_json(ctx.out / "summary.json", {{"command", "online-exp"},
                                        {"num_shards", e.num_shards},
                                        {"sync_interval", e.schedule.sparse_interval},
                                        {"dense_interval", e.schedule.dense_interval},
                                        {"seeds", seeds},
                                        {"wall_seconds", seconds_since(start)}});
  write_json(ctx.out / "counters.json", {{"data", json_of(data.stats)}, {"metrics", row_counters(rows)}});
}

void run_sync_bench(Context& ctx, const LoadedDataset& data) {
  const auto start = Clock::now();
  const auto& e = ctx.config.experiment;
  SweepConfig sc;
  sc.trainer = ctx.config.trainer;
  sc.shard_counts = e.shard_counts;
  sc.seeds = e.seed_list();
  sc.batch_fraction = e.batch_fraction;
  sc.schedule = e.schedule;
  const auto r = sync_interval_sweep(data.examples, sc);
  Json points = Json::array();
  for (const auto& p : r.points) {
    uint64_t bytes = 0;
    for (const auto& row : r.rows)
      if (row.arm == "N=" + std::to_string(p.num_shards)) bytes += row.packet_bytes;
    points.push_back({{"num_shards", p.num_shards},
                      {"mean_auc", p.mean},
                      {"std", p.std},
                      {"seed_means", p.seed_means},
                      {"packet_bytes_per_seed", bytes / sc.seeds.size()}});
    ctx.log.info("N=" + std::to_string(p.num_shards) + ": mean AUC " + std::to_string(p.mean));
  }
  const int dim = ctx.config.trainer.model.dim;
  write_metrics_csv(ctx.out / "metrics.csv", r.rows);
  write_json(ctx.out / "summary.json",
             {{"command", "sync-bench"},
              {"points", points},
              {"pooled_std", r.pooled_std},
              {"bandwidth_estimate",
               {{"keys", 100000},
                {"dim", 1024},
                {"bytes", estimate_packet_bytes(100000, 1024, 4)},
                {"model_dim", dim}}},
              {"wall_seconds", seconds_since(start)}});
  write_json(ctx.out / "counters.json", {{"data", json_of(data.stats)}, {"metrics", row_counters(r.rows)}});
}

void run_reliability(Context& ctx, const LoadedDataset& data) {
  const auto start = Clock::now();
  const auto& e = ctx.config.experiment;
  std::vector<MetricsRow> rows;
  Json seeds = Json::array();
  for (uint64_t seed : e.seed_list()) {
    ReliabilityConfig rc;
    rc.trainer = ctx.config.trainer;
    rc.trainer.seed = seed;
    rc.num_shards = e.num_shards;
    rc.snapshot_every = e.snapshot_every;
    rc.failure = e.failure;
    rc.batch_fraction = e.batch_fraction;
    rc.final_fraction = e.final_fraction;
    rc.schedule = e.schedule;
    rc.snapshot_root = ctx.out / "snapshots" / ("seed_" + std::to_string(seed));
    const auto r = reliability_experiment(data.examples, rc);
    rows.insert(rows.end(), r.rows.begin(), r.rows.end());
    Json entry = {{"seed", seed},
                  {"baseline_auc", r.baseline_auc},
                  {"failure_auc", r.failure_auc},
                  {"degradation", r.degradation}};
    if (r.report) entry["failure"] = json_of(*r.report);
    seeds.push_back(entry);
    ctx.log.info("seed " + std::to_string(seed) + ": degradation " + std::to_string(r.degradation));
  }
  write_metrics_csv(ctx.out / "metrics.csv", rows);
  Json summary = {{"command", "reliability-exp"},
                  {"ps_shards", ctx.config.trainer.ps_shards},
                  {"num_shards", e.num_shards},
                  {"snapshot_every", e.snapshot_every}};
  if (e.failure) summary["failure_plan"] = {{"shard", e.failure->shard}, {"at_step", e.failure->at_step}};
  summary["seeds"] = seeds;
  summary["wall_seconds"] = seconds_since(start);
  write_json(ctx.out / "summary.json", summary);
  write_json(ctx.out / "counters.json", {{"data", json_of(data.stats)}, {"metrics", row_counters(rows)}});
}

void run_joiner(Context& ctx, std::span<const Example> examples, const LoadStats& stats) {
  const auto start = Clock::now();
  const auto& spec = ctx.config.joiner_sim;
  const uint64_t seed = ctx.config.experiment.seed;
  const auto records = simulate_log_stream(examples, spec, derive_seed(seed, "stream"));

  JoinerConfig jc = spec.joiner;
  jc.seed = derive_seed(seed, "joiner");
  jc.spill_path = ctx.out / "joiner.spill";
  const fs::path joined_path = ctx.out / "joined.txt";
  fs::remove(joined_path);
  Joiner joiner(jc);
  FileQueue queue(joined_path);
  size_t positives = 0, emitted = 0, processed = 0;
  Timestamp last = std::numeric_limits<Timestamp>::min();
  auto keep = [&](std::optional<JoinedExample> ex) {
    if (!ex) return;
    positives += static_cast<size_t>(ex->label);
    ++emitted;
    queue.append(*ex);
  };
  for (const auto& rec : records) {
    if (const auto* f = std::get_if<FeatureLog>(&rec)) {
      last = std::max(last, f->ts);
      keep(joiner.ingest_feature(*f));
    } else if (const auto* a = std::get_if<ActionLog>(&rec)) {
      last = std::max(last, a->ts);
      keep(joiner.ingest_action(*a, a->ts));
    } else {
      throw std::runtime_error("stream files hold only F and A records");
    }
    if (++processed % spec.flush_every == 0) {
      for (auto& ex : joiner.flush_expired(joiner.watermark())) keep(std::move(ex));
    }
  }
  // Drain: advance past every deadline.
  if (!records.empty()) {
    const Timestamp end = last + std::max(jc.disk_ttl, jc.action_wait) + jc.memory_window + 1;
    for (auto& ex : joiner.flush_expired(end)) keep(std::move(ex));
  }

  size_t source_positives = 0;
  for (const auto& ex : examples) source_positives += static_cast<size_t>(ex.label);
  const double observed = emitted ? static_cast<double>(positives) / static_cast<double>(emitted) : 0.0;
  Json summary = {{"command", "joiner-sim"},
                  {"records", records.size()},
                  {"joined", emitted},
                  {"positives", positives},
                  {"observed_positive_rate", observed},
                  {"negative_rate", jc.negative_rate},
                  {"corrected_positive_rate",
                   emitted ? log_odds_correct(observed, jc.negative_rate) : 0.0}};
  if (spec.stream.empty() && !examples.empty()) {
    summary["source_examples"] = examples.size();
    summary["source_positive_rate"] =
        static_cast<double>(source_positives) / static_cast<double>(examples.size());
  }
  summary["output"] = joined_path.filename().string();
  summary["wall_seconds"] = seconds_since(start);
  write_json(ctx.out / "summary.json", summary);
  Json counters = {{"joiner", json_of(joiner.counters())},
                   {"pending",
                    {{"memory", joiner.memory_pending()},
                     {"disk", joiner.disk_pending()},
                     {"actions", joiner.buffered_actions()}}}};
  if (spec.stream.empty()) counters["data"] = json_of(stats);
  write_json(ctx.out / "counters.json", counters);
  ctx.log.info("joined " + std::to_string(emitted) + " examples from " +
               std::to_string(records.size()) + " records");
}

int collision_stats_command(const fs::path& ids_path, uint64_t space, const fs::path& out_dir,
                            std::ostream& out) {
  std::ifstream in(ids_path);
  if (!in) throw DataFileError("cannot open id file " + ids_path.string());
  std::vector<uint64_t> ids;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    uint64_t id = 0;
    const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), id);
    if (ec != std::errc() || ptr != line.data() + line.size()) {
      throw std::runtime_error(ids_path.filename().string() + " line " + std::to_string(line_no) +
                               ": expected an unsigned integer id");
    }
    ids.push_back(id);
  }
  const auto s = hash_collision_stats(ids, space);
  char rate[32];
  std::snprintf(rate, sizeof(rate), "%.4f", 100.0 * s.rate);
  out << "before=" << s.before << " after=" << s.after << " rate=" << rate << "%\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_json(out_dir / "summary.json", {{"command", "collision-stats"},
                                          {"ids", ids.size()},
                                          {"space", space},
                                          {"before", s.before},
                                          {"after", s.after},
                                          {"rate", s.rate}});
  }
  return kExitOk;
}

// Flags shared by subcommands; unset optionals leave the config alone.
struct Flags {
  std::string config;
  std::string out;
  std::optional<uint64_t> seed;
  std::vector<size_t> shards;
  std::optional<uint64_t> sync_interval;
  std::optional<uint64_t> dense_interval;
  std::optional<size_t> snapshot_every;
  std::optional<uint32_t> fail_shard;
  std::optional<uint64_t> fail_at;
  std::string ids;
  uint64_t space = 0;
  int verbose = 0;
  bool quiet = false;
};

void apply_flags(const Flags& f, const std::string& command, CliConfig& c) {
  auto& e = c.experiment;
  if (f.seed) {
    e.seed = *f.seed;
    e.seeds.clear();
  }
  if (!f.shards.empty()) {
    if (command == "sync-bench") {
      e.shard_counts = f.shards;
    } else if (f.shards.size() == 1) {
      e.num_shards = f.shards.front();
    } else {
      throw ConfigError("--shards", "takes a single count for " + command);
    }
  }
  if (f.sync_interval) e.schedule.sparse_interval = *f.sync_interval;
  if (f.dense_interval) e.schedule.dense_interval = *f.dense_interval;
  if (f.sync_interval && *f.sync_interval > 0 && !f.dense_interval &&
      e.schedule.dense_interval % *f.sync_interval != 0) {
    e.schedule.dense_interval = *f.sync_interval;
  }
  if (f.snapshot_every) e.snapshot_every = *f.snapshot_every;
  if (f.fail_shard || f.fail_at) {
    if (!e.failure && !(f.fail_shard && f.fail_at)) {
      throw ConfigError("--fail-shard", "--fail-shard and --fail-at must be given together");
    }
    if (!e.failure) e.failure.emplace();
    if (f.fail_shard) e.failure->shard = *f.fail_shard;
    if (f.fail_at) e.failure->at_step = *f.fail_at;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"freshrec: collisionless embedding tables and online training experiments"};
  app.name("freshrec");
  app.require_subcommand(1);
  // Top-level help lists every subcommand with all of its flags.
  app.set_help_flag();
  app.set_help_all_flag("-h,--help", "Print help (every subcommand and flag) and exit");
  Flags f;

  struct Sub {
    const char* name;
    const char* help;
    bool online;       // --shards, --sync-interval, --dense-interval
    bool reliability;  // --snapshot-every, --fail-shard, --fail-at
  };
  const Sub subs[] = {
      {"collision-exp", "Collisionless vs hashed embedding tables, AUC per epoch", false, false},
      {"online-exp", "Online training vs a frozen batch model, AUC per shard", true, false},
      {"sync-bench", "Sweep the number of online shards (sync frequency)", true, false},
      {"reliability-exp", "Paired runs with one PS shard failure and snapshot restore", true, true},
      {"joiner-sim", "Join simulated feature and action logs into examples", false, false},
  };
  for (const auto& s : subs) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    cmd->add_option("--config", f.config, "Experiment config file (ini)")->check(CLI::ExistingFile);
    cmd->add_option("--out", f.out, "Output directory")->required();
    cmd->add_option("--seed", f.seed, "Root seed; replaces experiment.seed and experiment.seeds");
    if (s.online) {
      cmd->add_option("--shards", f.shards,
                      s.name == std::string("sync-bench") ? "Online shard counts to sweep"
                                                          : "Number of online data shards")
          ->delimiter(',');
      cmd->add_option("--sync-interval", f.sync_interval, "Sparse sync every k online shards");
      cmd->add_option("--dense-interval", f.dense_interval, "Dense sync every k online shards");
    }
    if (s.reliability) {
      cmd->add_option("--snapshot-every", f.snapshot_every, "Snapshot every k online shards (0: never)");
      cmd->add_option("--fail-shard", f.fail_shard, "PS shard to fail");
      cmd->add_option("--fail-at", f.fail_at, "Online shard index at which it fails");
    }
    cmd->add_flag("-v,--verbose", f.verbose, "More progress output (repeatable)");
    cmd->add_flag("-q,--quiet", f.quiet, "No progress output");
  }
  auto* stats = app.add_subcommand("collision-stats", "Hash-collision counts for an id file");
  stats->add_option("--ids", f.ids, "File with one integer id per line")->required();
  stats->add_option("--space", f.space, "Hash space size")->required()->check(CLI::PositiveNumber);
  stats->add_option("--out", f.out, "Optional directory for summary.json");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitBadConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  std::string stage = "config";
  try {
    if (command == "collision-stats") {
      stage = "collision-stats";
      return collision_stats_command(f.ids, f.space, f.out, out);
    }
    CliConfig config = f.config.empty() ? CliConfig{} : load_config(f.config);
    apply_flags(f, command, config);
    validate(config);
    if (command == "reliability-exp" && config.trainer.ps_shards < 2) {
      throw ConfigError("trainer.ps_shards", "reliability-exp needs at least 2 PS shards");
    }
    const uint64_t data_seed = derive_seed(config.experiment.seed, "data");
    config.data.drift.seed = data_seed;
    config.data.ratings.seed = data_seed;

    Context ctx{std::move(config), f.out, Logger(err, f.quiet ? 0 : 1 + f.verbose)};
    stage = "output";
    fs::create_directories(ctx.out);

    stage = "data";
    // joiner-sim with a stream file needs no examples.
    LoadedDataset data;
    if (command != "joiner-sim" || ctx.config.joiner_sim.stream.empty()) {
      data = load_data(ctx.config.data, ctx.config.trainer.model);
      ctx.log.info("loaded " + std::to_string(data.examples.size()) + " examples");
    }
    check("trainer", [&] { ctx.config.trainer.validate(); });

    stage = command;
    if (command == "collision-exp") run_collision(ctx, data);
    if (command == "online-exp") run_online(ctx, data);
    if (command == "sync-bench") run_sync_bench(ctx, data);
    if (command == "reliability-exp") run_reliability(ctx, data);
    if (command == "joiner-sim") run_joiner(ctx, data.examples, data.stats);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "freshrec: config error: " << e.what() << '\n';
    return kExitBadConfig;
  } catch (const DataFileError& e) {
    err << "freshrec: " << stage << ": " << e.what() << '\n';
    return kExitMissingData;
  } catch (const std::exception& e) {
    err << "freshrec: " << stage << " failed: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace freshrec::cli
