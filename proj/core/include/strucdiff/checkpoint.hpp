#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "strucdiff/model.hpp"
#include "strucdiff/schema.hpp"

namespace strucdiff {

// A trained model plus what evaluation needs next to it: the constant
// baseline fitted on the training rows (original units, one cell per leaf)
// and the training settings as key=value text.
struct Checkpoint {
  Model model;
  std::vector<Cell> baseline;
  std::string train_settings;
};

// Binary layout: 8-byte magic "SDFCKPT1", little-endian u64 header length,
// JSON header, then every parameter as raw little-endian doubles in header
// order. Round trips are bit-exact.
std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace strucdiff
