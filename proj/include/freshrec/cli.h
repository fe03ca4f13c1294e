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

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "freshrec/datasets.h"
#include "freshrec/joiner.h"
#include "freshrec/snapshot.h"
#include "freshrec/sync.h"
#include "freshrec/trainer.h"

namespace freshrec::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;     // a stage failed at run time
inline constexpr int kExitBadConfig = 2;   // config or flags did not validate
inline constexpr int kExitMissingData = 3; // an input file is missing or unreadable

/// A config field failed to parse or validate. `field` is "section.key".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

enum class DataSource { kDrift, kRatings, kMovieLens, kCriteo, kExamples };

struct DataSpec {
  DataSource source = DataSource::kDrift;
  std::filesystem::path path;  // movielens, criteo and examples sources
  DriftConfig drift;
  RatingsConfig ratings;
  UserSubsample subsample;
};

struct ExperimentSpec {
  uint64_t seed = 1;
  std::vector<uint64_t> seeds;  // empty: {seed}
  size_t epochs = 5;
  double test_fraction = 0.2;
  std::vector<size_t> shard_counts{10, 50, 100};
  size_t num_shards = 10;
  double batch_fraction = 5.0 / 7.0;
  SyncSchedule schedule;
  size_t snapshot_every = 1;
  std::optional<FailurePlan> failure;
  double final_fraction = 0.25;

  std::vector<uint64_t> seed_list() const { return seeds.empty() ? std::vector{seed} : seeds; }
};

/// Log-stream simulation for joiner-sim. Without a `stream` file, every
/// example of the data source becomes a feature log at its timestamp and an
/// action log `delay` later; records then arrive in order of event time
/// plus a uniform jitter.
struct JoinerSimSpec {
  JoinerConfig joiner;
  std::filesystem::path stream;  // F/A records in arrival order
  double mean_delay = 60;        // seconds, exponential
  double late_fraction = 0.05;   // actions pushed past the memory window
  double drop_fraction = 0.0;    // actions never sent
  Timestamp arrival_jitter = 30;
  size_t flush_every = 1000;     // records between flush_expired calls
};

struct CliConfig {
  DataSpec data;
  TrainerConfig trainer;
  ExperimentSpec experiment;
  JoinerSimSpec joiner_sim;
};

/// Reads a sectioned key = value file. Relative paths resolve against the
/// file's directory. Unknown sections or keys are errors. Throws ConfigError
/// (or DataFileError when the file itself cannot be read).
CliConfig load_config(const std::filesystem::path& path);

/// Validates everything that can be checked before data is loaded.
void validate(const CliConfig& config);

/// Loads or generates the configured examples; the model's slot count is set
/// from the data.
LoadedDataset load_data(const DataSpec& spec, DeepFMConfig& model);

/// Joiner-sim input: the configured stream file, or one simulated from
/// `examples`.
std::vector<StreamRecord> simulate_log_stream(std::span<const Example> examples,
                                              const JoinerSimSpec& spec, uint64_t seed);

/// Parses `args` (without the program name) and runs one subcommand.
/// Returns an exit code; diagnostics go to `err`, results to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace freshrec::cli
