#pragma once

#include <string>
#include <vector>

#include "strucdiff/model.hpp"
#include "strucdiff/schema.hpp"
#include "strucdiff/training.hpp"

namespace strucdiff::testing {

// Flat all-categorical schema with leaves l0..l{d-1}, each with k labels.
inline EntitySchema categorical_schema(int d, int k) {
  std::string doc = R"({"kind":"composite","children":{)";
  for (int i = 0; i < d; ++i) {
    doc += (i ? "," : "") + std::string("\"l") + std::to_string(i) + R"(":{"kind":"categorical","categories":[)";
    for (int c = 0; c < k; ++c) doc += (c ? ",\"" : "\"") + std::string(1, static_cast<char>('a' + c)) + "\"";
    doc += "]}";
  }
  return load_schema(doc + "}}");
}

// One leaf of every kind, nested one level.
inline EntitySchema mixed_schema() {
  return load_schema(R"({"kind":"composite","children":{
    "price":{"kind":"numerical","normalizer":{"min":0,"max":10,"constant":false}},
    "launch":{"kind":"composite","children":{
      "day":{"kind":"numerical","normalizer":{"min":1,"max":31,"constant":false}},
      "status":{"kind":"categorical","categories":["announced","released","cancelled"]}}},
    "name":{"kind":"text","text":{"max_length":8,"vocab":"abcdefghij "}}}})");
}

inline ModelConfig tiny_config(int dim = 8) {
  ModelConfig c;
  c.model_dim = dim;
  c.entity_layers = 1;
  c.heads = 2;
  c.property_layers = 1;
  c.gmm_components = 3;
  c.text_layers = 1;
  c.dropout = 0.0;
  return c;
}

inline EntityInstance row(std::vector<Cell> cells) { return EntityInstance{std::move(cells)}; }

}  // namespace strucdiff::testing
