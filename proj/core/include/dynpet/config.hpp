/*
 * dynpet : dynamic cardiac PET frame conversion and motion correction
 *
 * Copyright 2026 dynpet contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <map>
#include <string>

namespace dynpet {

/**
 * Line-oriented configuration: `key = value` pairs with `#` comments.
 * Keys are namespaced with dots (`phantom.noise`); an INI style
 * `[section]` header prefixes the keys that follow it.
 *
 * Readers consume keys through the typed getters; after a tool has read
 * everything it understands it calls check_consumed(), which rejects any
 * leftover key with its line number. Typos therefore fail loudly instead
 * of silently running with defaults.
 */
class Config {
 public:
  Config() = default;

  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text,
                             const std::string& origin);

  /// Inserts or overwrites a key (used for command line overrides).
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;

  double get_double(const std::string& key, double fallback);
  int get_int(const std::string& key, int fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::string get_string(const std::string& key, const std::string& fallback);

  /// Throws if any key was never consumed, naming each with its line.
  void check_consumed() const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
    bool consumed = false;
  };

  const std::string* lookup(const std::string& key);
  [[noreturn]] void value_error(const std::string& key,
                                const std::string& expected) const;

  std::map<std::string, Entry> entries_;
  std::string origin_ = "<config>";
};

}  // namespace dynpet
