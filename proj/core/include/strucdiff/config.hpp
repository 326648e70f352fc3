#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "strucdiff/model.hpp"
#include "strucdiff/training.hpp"

namespace strucdiff {

// Flat key=value settings with dotted keys ("model.dim = 64"). Blank lines
// and lines starting with '#' are ignored. Later assignments win.
class Settings {
 public:
  static Settings parse(std::string_view text);

  void set(const std::string& key, const std::string& value);
  // Parses "key=value".
  void set_assignment(std::string_view assignment);
  void merge(const Settings& overrides);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

// Keys under "model." and "train." that apply() understands.
const std::vector<std::string>& known_setting_keys();
std::vector<std::string> unknown_keys(const Settings& settings);

// Overlay the relevant keys onto a configuration. Throws
// std::invalid_argument on values that do not parse.
void apply(const Settings& settings, ModelConfig& config);
void apply(const Settings& settings, TrainConfig& config);

Settings to_settings(const ModelConfig& config);
Settings to_settings(const TrainConfig& config);

}  // namespace strucdiff
