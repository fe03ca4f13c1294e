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

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <vector>

#include "freshrec/joiner.h"

namespace freshrec {

/// Append-only log of joined examples with offset-based reads. Producers
/// append; each consumer tracks its own offset.
class ExampleQueue {
 public:
  virtual ~ExampleQueue() = default;
  virtual void append(const JoinedExample& example) = 0;
  /// Up to `max` examples starting at `offset`.
  virtual std::vector<JoinedExample> read(size_t offset, size_t max) = 0;
  virtual size_t size() const = 0;
};

class MemoryQueue final : public ExampleQueue {
 public:
  void append(const JoinedExample& example) override { log_.push_back(example); }
  std::vector<JoinedExample> read(size_t offset, size_t max) override;
  size_t size() const override { return log_.size(); }

 private:
  std::vector<JoinedExample> log_;
};

/// Stores one `E` record per line. Reopening an existing file resumes it.
class FileQueue final : public ExampleQueue {
 public:
  explicit FileQueue(std::filesystem::path path);
  void append(const JoinedExample& example) override;
  std::vector<JoinedExample> read(size_t offset, size_t max) override;
  size_t size() const override { return line_offsets_.size(); }
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::fstream file_;
  std::vector<std::streamoff> line_offsets_;
  std::streamoff end_ = 0;
};

}  // namespace freshrec
