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

#include "freshrec/example_queue.h"

#include <algorithm>
#include <string>

namespace freshrec {

std::vector<JoinedExample> MemoryQueue::read(size_t offset, size_t max) {
  if (offset >= log_.size()) return {};
  const size_t end = offset + std::min(max, log_.size() - offset);
  return {log_.begin() + static_cast<std::ptrdiff_t>(offset),
          log_.begin() + static_cast<std::ptrdiff_t>(end)};
}

FileQueue::FileQueue(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  { std::ofstream touch(path_, std::ios::app); }
  file_.open(path_, std::ios::in | std::ios::out | std::ios::binary);
  if (!file_) throw std::runtime_error("cannot open queue file " + path_.string());
  std::string line;
  std::streamoff pos = 0;
  while (std::getline(file_, line)) {
    if (!line.empty()) {
      parse_record(line);  // reject a corrupt log up front
      line_offsets_.push_back(pos);
    }
    pos += static_cast<std::streamoff>(line.size()) + 1;
  }
  end_ = pos;
}

void FileQueue::append(const JoinedExample& example) {
  const std::string line = format_record(example) + "\n";
  file_.clear();
  file_.seekp(end_);
  file_.write(line.data(), static_cast<std::streamsize>(line.size()));
  file_.flush();
  line_offsets_.push_back(end_);
  end_ += static_cast<std::streamoff>(line.size());
}

std::vector<JoinedExample> FileQueue::read(size_t offset, size_t max) {
  std::vector<JoinedExample> out;
  if (offset >= line_offsets_.size()) return out;
  file_.clear();
  file_.seekg(line_offsets_[offset]);
  std::string line;
  while (out.size() < max && offset + out.size() < line_offsets_.size() &&
         std::getline(file_, line)) {
    out.push_back(std::get<JoinedExample>(parse_record(line)));
  }
  return out;
}

}  // namespace freshrec
