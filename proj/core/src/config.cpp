#include "strucdiff/config.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <stdexcept>

#include "strucdiff/dataset_io.hpp"

namespace strucdiff {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_integral(const std::string& key, const std::string& v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("setting '" + key + "': not an integer: " + v);
  return out;
}

}  // namespace

Settings Settings::parse(std::string_view text) {
  Settings s;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    try {
      s.set_assignment(t);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return s;
}

void Settings::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw std::invalid_argument("empty setting key");
  values_[key] = value;
}

void Settings::set_assignment(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw std::invalid_argument("expected key=value, got '" + std::string(assignment) + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Settings::merge(const Settings& overrides) {
  for (const auto& [k, v] : overrides.values_) values_[k] = v;
}

std::string Settings::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Settings::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  double out = 0.0;
  const std::string& v = it->second;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("setting '" + key + "': not a number: " + v);
  return out;
}

int Settings::get_int(const std::string& key, int fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_integral<int>(key, it->second);
}

std::uint64_t Settings::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_integral<std::uint64_t>(key, it->second);
}

bool Settings::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw std::invalid_argument("setting '" + key + "': not a boolean: " + it->second);
}

std::string Settings::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

const std::vector<std::string>& known_setting_keys() {
  static const std::vector<std::string> keys{
      "model.dim",          "model.entity_layers",   "model.heads",       "model.property_layers", "model.gmm_components",
      "model.unit_scale",   "model.embedding",       "model.embedding_dim", "model.tie_numeric_embedding",
      "model.text_layers",  "model.init",            "model.mup_base_width", "model.dropout",
      "train.mode",         "train.mask_rate",       "train.batch_size",  "train.epochs",          "train.lr",
      "train.weight_decay", "train.beta1",           "train.beta2",       "train.eps",             "train.clip_norm",
      "train.pi_max",       "train.validation_fraction", "train.seed"};
  return keys;
}

std::vector<std::string> unknown_keys(const Settings& settings) {
  std::vector<std::string> out;
  const auto& known = known_setting_keys();
  for (const auto& [k, _] : settings.values())
    if (std::find(known.begin(), known.end(), k) == known.end()) out.push_back(k);
  return out;
}

void apply(const Settings& s, ModelConfig& c) {
  c.model_dim = s.get_int("model.dim", c.model_dim);
  c.entity_layers = s.get_int("model.entity_layers", c.entity_layers);
  c.heads = s.get_int("model.heads", c.heads);
  c.property_layers = s.get_int("model.property_layers", c.property_layers);
  c.gmm_components = s.get_int("model.gmm_components", c.gmm_components);
  c.unit_scale = s.get_bool("model.unit_scale", c.unit_scale);
  if (s.has("model.embedding")) {
    const std::string e = s.get("model.embedding", "");
    if (e == "periodic") {
      c.embedding = NumericEmbeddingKind::periodic;
    } else if (e == "dice") {
      c.embedding = NumericEmbeddingKind::dice;
    } else {
      throw std::invalid_argument("setting 'model.embedding': expected periodic or dice");
    }
  }
  c.embedding_dim = s.get_int("model.embedding_dim", c.embedding_dim);
  c.tie_numeric_embedding = s.get_bool("model.tie_numeric_embedding", c.tie_numeric_embedding);
  c.text_layers = s.get_int("model.text_layers", c.text_layers);
  if (s.has("model.init")) {
    const std::string e = s.get("model.init", "");
    if (e == "standard") {
      c.init = InitScheme::standard;
    } else if (e == "mup") {
      c.init = InitScheme::mup;
    } else {
      throw std::invalid_argument("setting 'model.init': expected standard or mup");
    }
  }
  c.mup_base_width = s.get_int("model.mup_base_width", c.mup_base_width);
  c.dropout = s.get_double("model.dropout", c.dropout);
}

void apply(const Settings& s, TrainConfig& c) {
  if (s.has("train.mode")) c.mode = parse_mask_mode(s.get("train.mode", ""));
  c.mask_rate = s.get_double("train.mask_rate", c.mask_rate);
  c.batch_size = s.get_int("train.batch_size", c.batch_size);
  c.epochs = s.get_int("train.epochs", c.epochs);
  c.lr = s.get_double("train.lr", c.lr);
  c.weight_decay = s.get_double("train.weight_decay", c.weight_decay);
  c.beta1 = s.get_double("train.beta1", c.beta1);
  c.beta2 = s.get_double("train.beta2", c.beta2);
  c.eps = s.get_double("train.eps", c.eps);
  c.clip_norm = s.get_double("train.clip_norm", c.clip_norm);
  c.pi_max = s.get_double("train.pi_max", c.pi_max);
  c.validation_fraction = s.get_double("train.validation_fraction", c.validation_fraction);
  c.seed = s.get_u64("train.seed", c.seed);
}

Settings to_settings(const ModelConfig& c) {
  Settings s;
  s.set("model.dim", std::to_string(c.model_dim));
  s.set("model.entity_layers", std::to_string(c.entity_layers));
  s.set("model.heads", std::to_string(c.heads));
  s.set("model.property_layers", std::to_string(c.property_layers));
  s.set("model.gmm_components", std::to_string(c.gmm_components));
  s.set("model.unit_scale", c.unit_scale ? "true" : "false");
  s.set("model.embedding", c.embedding == NumericEmbeddingKind::periodic ? "periodic" : "dice");
  s.set("model.embedding_dim", std::to_string(c.embedding_dim));
  s.set("model.tie_numeric_embedding", c.tie_numeric_embedding ? "true" : "false");
  s.set("model.text_layers", std::to_string(c.text_layers));
  s.set("model.init", c.init == InitScheme::standard ? "standard" : "mup");
  s.set("model.mup_base_width", std::to_string(c.mup_base_width));
  s.set("model.dropout", format_number(c.dropout));
  return s;
}

Settings to_settings(const TrainConfig& c) {
  Settings s;
  s.set("train.mode", std::string(to_string(c.mode)));
  s.set("train.mask_rate", format_number(c.mask_rate));
  s.set("train.batch_size", std::to_string(c.batch_size));
  s.set("train.epochs", std::to_string(c.epochs));
  s.set("train.lr", format_number(c.lr));
  s.set("train.weight_decay", format_number(c.weight_decay));
  s.set("train.beta1", format_number(c.beta1));
  s.set("train.beta2", format_number(c.beta2));
  s.set("train.eps", format_number(c.eps));
  s.set("train.clip_norm", format_number(c.clip_norm));
  s.set("train.pi_max", format_number(c.pi_max));
  s.set("train.validation_fraction", format_number(c.validation_fraction));
  s.set("train.seed", std::to_string(c.seed));
  return s;
}

}  // namespace strucdiff
