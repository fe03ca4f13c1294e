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

// Reduced-scale acceptance run. Prints one PASS/FAIL line per criterion on
// stdout (progress goes to stderr) and exits non-zero if any criterion fails.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "freshrec/datasets.h"
#include "freshrec/snapshot.h"
#include "freshrec/sync.h"
#include "freshrec/trainer.h"
#include "properties.h"

namespace freshrec::acceptance {
namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

void progress(const std::string& msg) { std::cerr << "  .. " << msg << std::endl; }

// Criterion 1: collisionless vs hashed embeddings on synthetic ratings.
Verdict collision() {
  RatingsConfig rc;
  rc.num_users = 2500;
  rc.num_movies = 1200;
  rc.num_ratings = 200000;
  const auto examples = ratings_to_examples(gen_synthetic_ratings(rc)).examples;
  CollisionConfig config;
  config.epochs = 10;
  config.trainer.hash_space = 16384;
  config.trainer.modulus = 128;

  bool every_epoch = true;
  double min_gap = 1.0;
  double rate = 0;
  std::ostringstream gaps;
  for (uint64_t seed : {1, 2, 3}) {
    config.trainer.seed = seed;
    const auto r = collision_experiment(examples, config);
    uint64_t before = 0, after = 0;
    for (const auto& s : r.slot_collisions) {
      before += s.before;
      after += s.after;
    }
    rate = collision_rate(before, after);
    for (const auto& e : r.epochs) every_epoch &= e.collisionless.auc >= e.hashed.auc;
    const auto& last = r.epochs.back();
    const double gap = last.collisionless.auc - last.hashed.auc;
    min_gap = std::min(min_gap, gap);
    gaps << fmt(" seed%lu=%.4f/%.4f", seed, last.collisionless.auc, last.hashed.auc);
    progress(fmt("collision seed %lu final gap %.4f", seed, gap));
  }
  return {every_epoch && min_gap > 0.002 && rate >= 0.05,
          fmt("%zu ratings, id collision rate %.2f%%, collisionless>=hashed every epoch: %s, "
              "min final gap %.4f (>0.002);",
              examples.size(), 100 * rate, every_epoch ? "yes" : "no", min_gap) +
              gaps.str()};
}

DriftConfig drift(double amplitude) {
  DriftConfig d;
  d.num_examples = 179200;
  d.drift_period = 100000;
  d.num_ids = 500;
  d.drift_amplitude = amplitude;
  return d;
}

TrainerConfig drift_trainer() {
  TrainerConfig t;
  t.model.mlp_layers = {32, 16, 1};
  return t;
}

// Criterion 2: online AUC against the number of online shards.
Verdict sweep() {
  const auto examples = gen_synthetic_drift(drift(0.2));
  SweepConfig config;
  config.trainer = drift_trainer();
  const auto r = sync_interval_sweep(examples, config);
  bool monotone = true;
  std::ostringstream means;
  for (size_t i = 0; i < r.points.size(); ++i) {
    if (i > 0) monotone &= r.points[i].mean >= r.points[i - 1].mean;
    means << fmt(" N=%zu:%.5f", r.points[i].num_shards, r.points[i].mean);
  }
  const double gain = r.points.back().mean - r.points.front().mean;
  return {monotone && gain > r.pooled_std,
          fmt("5 seeds, monotone: %s, mean(100)-mean(10)=%.5f vs pooled std %.5f;",
              monotone ? "yes" : "no", gain, r.pooled_std) +
              means.str()};
}

// Criterion 3: online arm vs frozen batch arm, with and without drift.
Verdict freshness() {
  FreshnessConfig config;
  config.trainer = drift_trainer();
  size_t wins = 0, shards = 0;
  double still_diff = 0, still_std = 0;
  const std::vector<uint64_t> seeds{1, 2, 3};
  const auto drifting = gen_synthetic_drift(drift(0.2));
  const auto stationary = gen_synthetic_drift(drift(0.0));
  for (uint64_t seed : seeds) {
    config.trainer.seed = seed;
    const auto a = online_vs_batch(drifting, config);
    for (size_t i = 0; i < a.online_auc.size(); ++i) wins += a.online_auc[i] > a.frozen_auc[i];
    shards += a.online_auc.size();
    const auto b = online_vs_batch(stationary, config);
    still_diff += b.mean_difference / seeds.size();
    still_std += b.pooled_std * b.pooled_std / seeds.size();
    progress(fmt("freshness seed %lu win %.2f, stationary diff %.5f", seed, a.online_win_fraction,
                 b.mean_difference));
  }
  still_std = std::sqrt(still_std);
  const double win = static_cast<double>(wins) / shards;
  return {win >= 0.8 && std::abs(still_diff) <= still_std,
          fmt("drift: online wins %zu/%zu shards (%.2f >= 0.80); stationary: mean diff %.5f "
              "within pooled std %.5f",
              wins, shards, win, still_diff, still_std)};
}

// Criterion 4.
Verdict bandwidth() {
  const auto bytes = estimate_packet_bytes(100000, 1024, 4);
  return {bytes >= 4.0e8 && bytes <= 4.1e8, fmt("estimate_packet_bytes(100000, 1024, 4) = %lu", bytes)};
}

// Criterion 5.
Verdict feedback_loss() {
  const auto f = expected_feedback_loss(1000, 1e-4, 15000000, 1);
  return {f.mean_days_between_failures == 10.0 && f.users_per_failure == 15000.0,
          fmt("mean days between failures %.17g, users per failure %.17g",
              f.mean_days_between_failures, f.users_per_failure)};
}

// Criterion 6.
Verdict collision_arithmetic() {
  const double a = 100 * collision_rate(162541, 149970);
  const double b = 100 * collision_rate(59047, 57361);
  return {std::abs(a - 7.73) <= 0.01 && std::abs(b - 2.86) <= 0.01,
          fmt("rate(162541, 149970) = %.4f%%, rate(59047, 57361) = %.4f%%", a, b)};
}

// Criterion 7.
Verdict properties() {
  constexpr int kCases = 1000;
  const std::vector<std::function<SuiteResult()>> suites{
      [] { return cuckoo_matches_shadow_map(kCases, 101); },
      [] { return snapshot_round_trip(kCases, 102); },
      [] { return sync_touched_set_exact(kCases, 103); },
      [] { return joiner_exactly_once(kCases, 104); },
      [] { return log_odds_calibration(kCases, 105); },
      [] { return deepfm_finite_differences(kCases, 106); },
      [] { return auc_matches_pair_counting(kCases, 107); },
  };
  bool all = true;
  std::ostringstream detail;
  for (const auto& run : suites) {
    const auto r = run();
    all &= r.failures == 0;
    progress(fmt("%s: %d/%d cases pass, worst %.3g", r.name.c_str(), r.cases - r.failures, r.cases,
                 r.worst));
    detail << (detail.tellp() ? "; " : "") << r.name << " " << r.cases - r.failures << "/" << r.cases;
    if (r.failures) detail << " [" << r.first_failure << "]";
  }
  return {all, detail.str()};
}

// Criterion 8: paired runs, 1 of 8 PS shards fails and is restored.
Verdict reliability() {
  const auto examples = gen_synthetic_drift(drift(0.2));
  ReliabilityConfig config;
  config.trainer = drift_trainer();
  config.trainer.ps_shards = 8;
  config.num_shards = 20;
  config.snapshot_every = 1;
  config.failure = FailurePlan{0, 14};
  double worst = -1;
  bool restored = true;
  std::ostringstream per_seed;
  for (uint64_t seed : {1, 2, 3}) {
    config.trainer.seed = seed;
    const auto r = reliability_experiment(examples, config);
    restored &= r.report && r.report->restored;
    worst = std::max(worst, r.degradation);
    per_seed << fmt(" seed%lu=%.5f", seed, r.degradation);
    progress(fmt("reliability seed %lu base %.5f failed %.5f", seed, r.baseline_auc, r.failure_auc));
  }
  return {restored && worst < 0.01,
          fmt("shard 0 of 8 fails at online shard 14, restored from snapshot: %s, worst "
              "degradation %.5f (<0.01);",
              restored ? "yes" : "no", worst) +
              per_seed.str()};
}

}  // namespace
}  // namespace freshrec::acceptance

int main(int argc, char** argv) {
  using namespace freshrec::acceptance;
  CLI::App app("freshrec acceptance run");
  std::vector<int> only;
  app.add_option("--only", only, "Run just these criteria (1-8)")->delimiter(',')->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"collision experiment", collision},
      {"online-training sweep", sweep},
      {"online vs batch", freshness},
      {"bandwidth calculation", bandwidth},
      {"reliability calculation", feedback_loss},
      {"collision arithmetic", collision_arithmetic},
      {"property suites", properties},
      {"reliability experiment", reliability},
  };
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first
              << ", " << fmt("%.1fs", secs) << "): " << v.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
