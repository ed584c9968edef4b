// Copyright (c) 2026 The ltr Authors. All Rights Reserved.
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
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace ltr {

// Flat key/value configuration with dotted keys. Files use INI-style
// sections ([scorer] + family = ... reads as scorer.family); overrides use
// dotted keys directly. Typed getters mark keys as consumed so unknown keys
// can be rejected after a command has read everything it understands.
class KvConfig {
 public:
  static KvConfig parse_file(const std::string& path);
  static KvConfig parse_stream(std::istream& in);

  void set(const std::string& key, const std::string& value);
  // "key=value" form used by command-line overrides.
  void set_override(const std::string& assignment);

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;
  std::vector<std::string> get_string_list(const std::string& key,
                                           std::vector<std::string> fallback) const;

  // Throws ConfigError naming every key no getter consumed.
  void reject_unknown_keys() const;

  // Sorted `key = value` lines; parseable back by parse_stream.
  std::string serialize() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
  mutable std::set<std::string> consumed_;
};

}  // namespace ltr
