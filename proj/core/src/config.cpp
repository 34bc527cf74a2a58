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

#include "dynpet/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dynpet {

namespace {

std::string trim(const std::string& s) {
  const auto from = s.find_first_not_of(" \t");
  if (from == std::string::npos) return "";
  const auto to = s.find_last_not_of(" \t");
  return s.substr(from, to - from + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool valid_key(const std::string& k) {
  if (k.empty() || k.front() == '.' || k.back() == '.') return false;
  for (char c : k)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.')
      return false;
  return true;
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path);
  std::ostringstream text;
  text << is.rdbuf();
  return parse_string(text.str(), path);
}

Config Config::parse_string(const std::string& text,
                            const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                                 ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!section.empty() && !valid_key(section))
        throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                                 ": invalid section name '" + section + "'");
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                               ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    if (!valid_key(key))
      throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                               ": invalid key '" + key + "'");
    auto [it, inserted] = cfg.entries_.emplace(key, Entry{value, line_no, false});
    if (!inserted)
      throw std::runtime_error(origin + ":" + std::to_string(line_no) +
                               ": duplicate key '" + key + "' (first set on line " +
                               std::to_string(it->second.line) + ")");
  }
  return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
  if (!valid_key(key))
    throw std::runtime_error("invalid config key '" + key + "'");
  entries_[key] = Entry{value, 0, false};
}

bool Config::has(const std::string& key) const {
  return entries_.count(key) != 0;
}

const std::string* Config::lookup(const std::string& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  it->second.consumed = true;
  return &it->second.value;
}

void Config::value_error(const std::string& key,
                         const std::string& expected) const {
  const auto it = entries_.find(key);
  const std::string where =
      it != entries_.end() && it->second.line > 0
          ? origin_ + ":" + std::to_string(it->second.line) + ": "
          : "";
  throw std::runtime_error(where + "key '" + key + "' expects " + expected +
                           (it != entries_.end()
                                ? ", got '" + it->second.value + "'"
                                : ""));
}

double Config::get_double(const std::string& key, double fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  char* end = nullptr;
  const double parsed = std::strtod(v->c_str(), &end);
  if (end == v->c_str() || *end != '\0') value_error(key, "a number");
  return parsed;
}

int Config::get_int(const std::string& key, int fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  char* end = nullptr;
  const long parsed = std::strtol(v->c_str(), &end, 10);
  if (end == v->c_str() || *end != '\0') value_error(key, "an integer");
  return static_cast<int>(parsed);
}

bool Config::get_bool(const std::string& key, bool fallback) {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  const std::string s = lower(*v);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  value_error(key, "a boolean");
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) {
  const std::string* v = lookup(key);
  return v ? *v : fallback;
}

void Config::check_consumed() const {
  std::string bad;
  for (const auto& [key, entry] : entries_) {
    if (entry.consumed) continue;
    if (!bad.empty()) bad += "; ";
    bad += "'" + key + "'";
    if (entry.line > 0) bad += " (" + origin_ + ":" + std::to_string(entry.line) + ")";
  }
  if (!bad.empty())
    throw std::runtime_error("unknown config key(s): " + bad);
}

}  // namespace dynpet
