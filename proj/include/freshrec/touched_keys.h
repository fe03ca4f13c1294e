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

#include <algorithm>
#include <mutex>
#include <unordered_set>
#include <vector>

#include "freshrec/core.h"

namespace freshrec {

/// Keys whose embeddings were trained since the last drain. Marking and
/// draining may race; drain swaps the set out under the lock, so a key is
/// reported by exactly one drain.
class TouchedKeys {
 public:
  void mark(const FeatureKey& key) {
    std::lock_guard lock(mu_);
    keys_.insert(key);
  }

  /// Empties the set and returns its former contents in ascending order.
  std::vector<FeatureKey> drain() {
    std::unordered_set<FeatureKey, FeatureKeyHash> taken;
    {
      std::lock_guard lock(mu_);
      taken.swap(keys_);
    }
    std::vector<FeatureKey> out(taken.begin(), taken.end());
    std::sort(out.begin(), out.end());
    return out;
  }

  size_t size() const {
    std::lock_guard lock(mu_);
    return keys_.size();
  }

 private:
  mutable std::mutex mu_;
  std::unordered_set<FeatureKey, FeatureKeyHash> keys_;
};

}  // namespace freshrec
