#include "strucdiff/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "strucdiff/errors.hpp"

namespace strucdiff {

namespace {

constexpr double kHeadGain = 0.1;
constexpr double kInitialScale = 0.1;

int text_encoder_length(const TextSpec& t) { return t.max_length + 2; }  // begin, chars, end
int text_decoder_length(const TextSpec& t) { return t.max_length + 1; }  // chars, end

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    out.push_back(path.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
    if (dot == std::string::npos) return out;
    start = dot + 1;
  }
}

std::string block_name(const std::string& prefix, int j) { return prefix + "/block" + std::to_string(j); }
std::string layer_name(const std::string& prefix, int j) { return prefix + "/layer" + std::to_string(j); }

// Decoder targets for one string: characters, end marker, then padding.
std::vector<int> text_targets(const TextSpec& spec, const std::string& s) {
  std::vector<int> out = encode_text(spec, s);
  if (static_cast<int>(out.size()) > spec.max_length) throw DataError("text longer than max_length");
  out.push_back(TextSpec::kEnd);
  out.resize(static_cast<std::size_t>(text_decoder_length(spec)), TextSpec::kPad);
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (model_dim < 1 || heads < 1 || model_dim % heads != 0) fail("model_dim must be a positive multiple of heads");
  if (entity_layers < 1 || property_layers < 1 || text_layers < 1) fail("all depths must be >= 1");
  if (gmm_components < 1) fail("gmm_components must be >= 1");
  if (unit_scale && gmm_components != 1) fail("unit_scale requires gmm_components = 1");
  if (embedding == NumericEmbeddingKind::periodic && (embedding_dim < 2 || embedding_dim % 2 != 0))
    fail("periodic embedding_dim must be even and >= 2");
  if (embedding == NumericEmbeddingKind::dice && embedding_dim < 2) fail("dice embedding_dim must be >= 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0,1)");
  if (mup_base_width < 1) fail("mup_base_width must be >= 1");
}

std::string leaf_param_prefix(const std::string& module, const PropertySpec& leaf) { return module + "/" + leaf.path; }

Model::Model(ModelConfig config, EntitySchema schema) : config_(std::move(config)), schema_(std::move(schema)) {
  config_.validate();
  if (schema_.size() == 0) throw SchemaError("model: schema has no leaves");
  std::vector<std::string> all;
  for (const auto& leaf : schema_.leaves())
    for (auto& s : split_path(leaf.path)) all.push_back(std::move(s));
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  segments_ = std::move(all);
  for (const auto& leaf : schema_.leaves()) {
    std::vector<int> ids;
    for (const auto& s : split_path(leaf.path))
      ids.push_back(static_cast<int>(std::lower_bound(segments_.begin(), segments_.end(), s) - segments_.begin()));
    leaf_segments_.push_back(std::move(ids));
  }
}

Model::Model(ModelConfig config, EntitySchema schema, Rng& rng) : Model(std::move(config), std::move(schema)) {
  build(&rng);
}

Model Model::from_parameters(ModelConfig config, EntitySchema schema, std::map<std::string, Parameter> params) {
  Model m(std::move(config), std::move(schema));
  m.build(nullptr);
  for (auto& [name, p] : m.params_) {
    auto it = params.find(name);
    if (it == params.end()) throw SchemaError("model: missing parameter '" + name + "'");
    if (!it->second.value.same_shape(p.value)) throw SchemaError("model: shape mismatch for parameter '" + name + "'");
    p.value = std::move(it->second.value);
    params.erase(it);
  }
  if (!params.empty()) throw SchemaError("model: unexpected parameter '" + params.begin()->first + "'");
  return m;
}

Model Model::rebind(const EntitySchema& schema) const {
  if (schema.size() != schema_.size()) throw SchemaError("rebind: leaf count differs");
  for (const auto& leaf : schema.leaves()) {
    const int i = schema_.index_of(leaf.path);
    if (i < 0) throw SchemaError("rebind: unknown leaf '" + leaf.path + "'");
    const PropertySpec& mine = schema_.leaf(i);
    if (mine.kind != leaf.kind || mine.categories != leaf.categories || mine.text.vocab != leaf.text.vocab ||
        mine.text.max_length != leaf.text.max_length)
      throw SchemaError("rebind: leaf '" + leaf.path + "' differs");
  }
  return from_parameters(config_, schema, params_);
}

Parameter& Model::add(const std::string& name, int rows, int cols, Rng* rng, double stddev, bool hidden) {
  Parameter p;
  p.name = name;
  p.value = Tensor(rows, cols);
  if (rng && stddev > 0.0)
    for (double& v : p.value.data) v = rng->normal(0.0, stddev);
  p.decay = rows > 1;
  if (hidden && config_.init == InitScheme::mup)
    p.lr_scale = std::min(1.0, static_cast<double>(config_.mup_base_width) / config_.model_dim);
  auto [it, inserted] = params_.emplace(name, std::move(p));
  if (!inserted) throw SchemaError("model: duplicate parameter name '" + name + "'");
  return it->second;
}

void Model::set_bias(const std::string& name, std::span<const double> values) {
  Parameter& b = params_.at(name);
  std::copy(values.begin(), values.end(), b.value.data.begin());
}

void Model::build(Rng* rng) {
  const int d = config_.model_dim;
  const bool mup = config_.init == InitScheme::mup;
  auto fan_in = [](int n) { return 1.0 / std::sqrt(static_cast<double>(n)); };

  auto add_linear = [&](const std::string& prefix, int in, int out, bool hidden) {
    add(prefix + "/w", in, out, rng, fan_in(in), hidden);
    add(prefix + "/b", 1, out, nullptr, 0.0, false);
  };
  auto add_norm = [&](const std::string& prefix) {
    Parameter& g = add(prefix + "_g", 1, d, nullptr, 0.0, false);
    g.value.fill(1.0);
    add(prefix + "_b", 1, d, nullptr, 0.0, false);
  };
  auto add_blocks = [&](const std::string& prefix) {
    for (int j = 0; j < config_.property_layers; ++j) {
      const std::string b = block_name(prefix, j);
      add_linear(b + "/in", d, 8 * d, true);
      add_linear(b + "/out", 4 * d, d, true);
      add_norm(b + "/ln");
    }
  };
  auto add_layer = [&](const std::string& prefix) {
    for (const char* n : {"/q", "/k", "/v", "/o"}) add_linear(prefix + n, d, d, true);
    add_norm(prefix + "/ln1");
    add_linear(prefix + "/ff1", d, 4 * d, true);
    add_linear(prefix + "/ff2", 4 * d, d, true);
    add_norm(prefix + "/ln2");
  };
  auto add_head = [&](const std::string& prefix, int out) {
    add(prefix + "/w", d, out, rng, mup ? 0.0 : kHeadGain * fan_in(d), false);
    add(prefix + "/b", 1, out, nullptr, 0.0, false);
  };

  add("keys/table", static_cast<int>(segments_.size()), d, rng, 1.0, false);
  add("rnn/wx", d, 3 * d, rng, fan_in(d), true);
  add("rnn/wh", d, 3 * d, rng, fan_in(d), true);
  add("rnn/bx", 1, 3 * d, nullptr, 0.0, false);
  add("rnn/bh", 1, 3 * d, nullptr, 0.0, false);

  const int half = config_.embedding_dim / 2;
  const bool periodic = config_.embedding == NumericEmbeddingKind::periodic;
  bool has_numeric = false;
  for (const auto& leaf : schema_.leaves()) has_numeric |= leaf.kind == PropertyKind::numerical;
  if (periodic && config_.tie_numeric_embedding && has_numeric)
    add("shared/numeric_freq", 1, half, rng, 2.0 * std::numbers::pi, false);

  for (const auto& leaf : schema_.leaves()) {
    const std::string enc = leaf_param_prefix("enc", leaf);
    const std::string dec = leaf_param_prefix("dec", leaf);
    switch (leaf.kind) {
      case PropertyKind::categorical:
        add(enc + "/table", static_cast<int>(leaf.categories.size()), d, rng, 1.0, false);
        add(enc + "/bias", 1, d, nullptr, 0.0, false);
        break;
      case PropertyKind::numerical:
        if (periodic && !config_.tie_numeric_embedding) add(enc + "/freq", 1, half, rng, 2.0 * std::numbers::pi, false);
        add_linear(enc + "/proj", periodic ? 2 * half : config_.embedding_dim, d, false);
        break;
      case PropertyKind::text: {
        const int vocab = leaf.text.token_count();
        add(enc + "/chars", vocab, d, rng, 1.0, false);
        add(enc + "/pos", text_encoder_length(leaf.text), d, rng, 1.0, false);
        for (int j = 0; j < config_.text_layers; ++j) add_layer(layer_name(enc, j));
        break;
      }
      case PropertyKind::composite: break;
    }
    add_blocks(enc);
    add_blocks(dec);
    switch (leaf.kind) {
      case PropertyKind::categorical: add_head(dec + "/head", static_cast<int>(leaf.categories.size())); break;
      case PropertyKind::numerical: {
        const int m = config_.gmm_components;
        if (config_.unit_scale) {
          add_head(dec + "/head", 1);
          const double mid = 0.5;
          set_bias(dec + "/head/b", std::span<const double>(&mid, 1));
          break;
        }
        add_head(dec + "/head", 3 * m);
        std::vector<double> bias(static_cast<std::size_t>(3 * m), 0.0);
        for (int k = 0; k < m; ++k) {
          bias[static_cast<std::size_t>(m + k)] = m == 1 ? 0.5 : static_cast<double>(k) / (m - 1);
          bias[static_cast<std::size_t>(2 * m + k)] = std::log(std::expm1(kInitialScale));
        }
        set_bias(dec + "/head/b", bias);
        break;
      }
      case PropertyKind::text: {
        const int vocab = leaf.text.token_count();
        add(dec + "/chars", vocab, d, rng, 1.0, false);
        add(dec + "/pos", text_decoder_length(leaf.text), d, rng, 1.0, false);
        add_linear(dec + "/prefix", d, d, true);
        for (int j = 0; j < config_.text_layers; ++j) add_layer(layer_name(dec, j));
        add_head(dec + "/head", vocab);
        break;
      }
      case PropertyKind::composite: break;
    }
  }
  for (int j = 0; j < config_.entity_layers; ++j) add_layer(layer_name("entity", j));
}

Parameter& Model::parameter(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("model: no parameter '" + name + "'");
  return it->second;
}

const Parameter& Model::parameter(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("model: no parameter '" + name + "'");
  return it->second;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

double Model::attention_scale() const {
  if (config_.init != InitScheme::mup) return 0.0;
  return static_cast<double>(config_.heads) / config_.model_dim;
}

Var Model::p(Tape& tape, const std::string& name) { return tape.param(parameter(name)); }

Var Model::linear(Tape& tape, Var x, const std::string& prefix) {
  return ad::add_bias(ad::matmul(x, p(tape, prefix + "/w")), p(tape, prefix + "/b"));
}

Var Model::residual_blocks(Tape& tape, Var x, const std::string& prefix) {
  for (int j = 0; j < config_.property_layers; ++j) {
    const std::string b = block_name(prefix, j);
    Var h = linear(tape, ad::glu(linear(tape, x, b + "/in")), b + "/out");
    x = ad::layer_norm(ad::add(x, h), p(tape, b + "/ln_g"), p(tape, b + "/ln_b"));
  }
  return x;
}

Var Model::transformer_layer(Tape& tape, Var x, const std::string& prefix, const AttentionLayout& layout, bool train,
                             std::uint64_t seed) {
  const double rate = train ? config_.dropout : 0.0;
  Var q = linear(tape, x, prefix + "/q");
  Var k = linear(tape, x, prefix + "/k");
  Var v = linear(tape, x, prefix + "/v");
  Var a = linear(tape, ad::attention(q, k, v, layout), prefix + "/o");
  a = ad::dropout(a, rate, mix_seed(seed));
  x = ad::layer_norm(ad::add(x, a), p(tape, prefix + "/ln1_g"), p(tape, prefix + "/ln1_b"));
  Var f = linear(tape, ad::relu(linear(tape, x, prefix + "/ff1")), prefix + "/ff2");
  f = ad::dropout(f, rate, mix_seed(seed + 1));
  return ad::layer_norm(ad::add(x, f), p(tape, prefix + "/ln2_g"), p(tape, prefix + "/ln2_b"));
}

Var Model::hierarchical_encodings(Tape& tape) {
  const int d = config_.model_dim;
  const int n = schema_.size();
  std::size_t depth = 0;
  for (const auto& ids : leaf_segments_) depth = std::max(depth, ids.size());

  Var table = p(tape, "keys/table");
  Var wx = p(tape, "rnn/wx"), wh = p(tape, "rnn/wh"), bx = p(tape, "rnn/bx"), bh = p(tape, "rnn/bh");
  Var h = tape.constant(Tensor(n, d));
  for (std::size_t t = 0; t < depth; ++t) {
    std::vector<int> ids(static_cast<std::size_t>(n), 0);
    Tensor active(n, d), idle(n, d);
    bool all_active = true;
    for (int i = 0; i < n; ++i) {
      const auto& path = leaf_segments_[static_cast<std::size_t>(i)];
      const bool on = t < path.size();
      all_active &= on;
      if (on) ids[static_cast<std::size_t>(i)] = path[t];
      std::fill(active.row(i).begin(), active.row(i).end(), on ? 1.0 : 0.0);
      std::fill(idle.row(i).begin(), idle.row(i).end(), on ? 0.0 : 1.0);
    }
    Var x = ad::gather_rows(table, std::move(ids));
    Var gx = ad::add_bias(ad::matmul(x, wx), bx);
    Var gh = ad::add_bias(ad::matmul(h, wh), bh);
    Var r = ad::sigmoid(ad::add(ad::slice_cols(gx, 0, d), ad::slice_cols(gh, 0, d)));
    Var z = ad::sigmoid(ad::add(ad::slice_cols(gx, d, d), ad::slice_cols(gh, d, d)));
    Var cand = ad::tanh(ad::add(ad::slice_cols(gx, 2 * d, d), ad::mul(r, ad::slice_cols(gh, 2 * d, d))));
    Var next = ad::add(cand, ad::mul(z, ad::sub(h, cand)));
    h = all_active ? next : ad::add(ad::mul_const(next, active), ad::mul_const(h, idle));
  }
  return h;
}

std::vector<double> Model::hierarchical_encoding(std::string_view path) const {
  const int i = schema_.index_of(path);
  if (i < 0) throw SchemaError("unknown path '" + std::string(path) + "'");
  Tape tape(false);
  // A non-recording tape never writes parameter gradients.
  Var h = const_cast<Model*>(this)->hierarchical_encodings(tape);
  auto row = h.value().row(i);
  return {row.begin(), row.end()};
}

Var Model::encode_values(Tape& tape, int leaf, std::span<const Cell* const> cells) {
  const PropertySpec& spec = schema_.leaf(leaf);
  const std::string enc = leaf_param_prefix("enc", spec);
  const int n = static_cast<int>(cells.size());
  Var x;
  switch (spec.kind) {
    case PropertyKind::categorical: {
      std::vector<int> idx;
      for (const Cell* c : cells) {
        if (!c->is_category()) throw DataError("'" + spec.path + "' expects a category");
        idx.push_back(c->category());
      }
      x = ad::add_bias(ad::gather_rows(p(tape, enc + "/table"), std::move(idx)), p(tape, enc + "/bias"));
      break;
    }
    case PropertyKind::numerical: {
      Tensor values(n, 1);
      for (int r = 0; r < n; ++r) {
        if (!cells[static_cast<std::size_t>(r)]->is_number()) throw DataError("'" + spec.path + "' expects a number");
        values(r, 0) = cells[static_cast<std::size_t>(r)]->number();
      }
      Var feats;
      if (config_.embedding == NumericEmbeddingKind::periodic) {
        Var freq = p(tape, config_.tie_numeric_embedding ? std::string("shared/numeric_freq") : enc + "/freq");
        Var phase = ad::matmul(tape.constant(std::move(values)), freq);
        feats = ad::concat_cols(ad::sin(phase), ad::cos(phase));
      } else {
        NumericEmbeddingConfig cfg;
        cfg.kind = NumericEmbeddingKind::dice;
        cfg.dim = config_.embedding_dim;
        Tensor e(n, cfg.dim);
        for (int r = 0; r < n; ++r) {
          auto row = embed_numeric(values(r, 0), cfg);
          std::copy(row.begin(), row.end(), e.row(r).begin());
        }
        feats = tape.constant(std::move(e));
      }
      x = linear(tape, feats, enc + "/proj");
      break;
    }
    case PropertyKind::text: {
      const int len = text_encoder_length(spec.text);
      std::vector<int> ids, pos;
      std::vector<std::uint8_t> valid;
      for (const Cell* c : cells) {
        if (!c->is_text()) throw DataError("'" + spec.path + "' expects text");
        std::vector<int> tok = encode_text(spec.text, c->text());
        if (static_cast<int>(tok.size()) > spec.text.max_length) throw DataError("text longer than max_length");
        tok.insert(tok.begin(), TextSpec::kBegin);
        tok.push_back(TextSpec::kEnd);
        tok.resize(static_cast<std::size_t>(len), TextSpec::kPad);
        for (int j = 0; j < len; ++j) {
          ids.push_back(tok[static_cast<std::size_t>(j)]);
          pos.push_back(j);
          valid.push_back(tok[static_cast<std::size_t>(j)] != TextSpec::kPad);
        }
      }
      Var seq = ad::add(ad::gather_rows(p(tape, enc + "/chars"), std::move(ids)), ad::gather_rows(p(tape, enc + "/pos"), std::move(pos)));
      AttentionLayout layout{len, config_.heads, false, attention_scale(), std::move(valid)};
      for (int j = 0; j < config_.text_layers; ++j) seq = transformer_layer(tape, seq, layer_name(enc, j), layout, false, 0);
      std::vector<int> first;
      for (int r = 0; r < n; ++r) first.push_back(r * len);
      x = ad::gather_rows(seq, std::move(first));
      break;
    }
    case PropertyKind::composite: throw SchemaError("composite nodes have no encoder");
  }
  return residual_blocks(tape, x, enc);
}

std::vector<double> Model::encode_property(int leaf, const Cell& value) const {
  if (!value.is_present()) throw DataError("encode_property: value must be Present");
  Tape tape(false);
  const Cell* cell = &value;
  Var v = const_cast<Model*>(this)->encode_values(tape, leaf, std::span<const Cell* const>(&cell, 1));
  auto row = v.value().row(0);
  return {row.begin(), row.end()};
}

ForwardOutput Model::forward(Tape& tape, std::span<const EntityInstance> batch, const ForwardOptions& options) {
  const int d = config_.model_dim;
  const int n_leaves = schema_.size();
  const int b_count = static_cast<int>(batch.size());
  for (const auto& e : batch) {
    if (static_cast<int>(e.values.size()) != n_leaves) throw DataError("forward: entity width does not match schema");
    if (e.effective_size() == 0) throw DataError("forward: every leaf is Missing");
  }

  ForwardOutput out;
  if (b_count == 0) return out;
  bool any_masked = false;
  for (const auto& e : batch) any_masked |= e.count_masked() > 0;
  if (!any_masked) return out;

  Var keys = hierarchical_encodings(tape);
  std::vector<int> tile;
  tile.reserve(static_cast<std::size_t>(b_count * n_leaves));
  for (int b = 0; b < b_count; ++b)
    for (int i = 0; i < n_leaves; ++i) tile.push_back(i);
  Var x = ad::gather_rows(keys, std::move(tile));

  std::vector<Var> sources;
  std::vector<std::vector<int>> rows;
  std::vector<std::uint8_t> key_valid(static_cast<std::size_t>(b_count * n_leaves), 0);
  for (int i = 0; i < n_leaves; ++i) {
    std::vector<const Cell*> cells;
    std::vector<int> at;
    for (int b = 0; b < b_count; ++b) {
      const Cell& c = batch[static_cast<std::size_t>(b)].values[static_cast<std::size_t>(i)];
      if (!c.is_present()) continue;
      cells.push_back(&c);
      at.push_back(b * n_leaves + i);
      key_valid[static_cast<std::size_t>(b * n_leaves + i)] = 1;
    }
    if (cells.empty()) continue;
    sources.push_back(encode_values(tape, i, cells));
    rows.push_back(std::move(at));
  }
  if (!sources.empty()) x = ad::add(x, ad::scatter_rows(sources, rows, b_count * n_leaves, d));

  AttentionLayout layout{n_leaves, config_.heads, false, attention_scale(), std::move(key_valid)};
  for (int j = 0; j < config_.entity_layers; ++j)
    x = transformer_layer(tape, x, layer_name("entity", j), layout, options.train, options.dropout_seed + 2 * static_cast<std::uint64_t>(j));

  for (int i = 0; i < n_leaves; ++i) {
    LeafOutput lo;
    lo.leaf = i;
    std::vector<int> at;
    for (int b = 0; b < b_count; ++b) {
      if (!batch[static_cast<std::size_t>(b)].values[static_cast<std::size_t>(i)].is_masked()) continue;
      lo.entities.push_back(b);
      at.push_back(b * n_leaves + i);
    }
    if (at.empty()) continue;
    const PropertySpec& spec = schema_.leaf(i);
    const std::string dec = leaf_param_prefix("dec", spec);
    lo.latent = residual_blocks(tape, ad::gather_rows(x, std::move(at)), dec);
    lo.head = spec.kind == PropertyKind::text ? lo.latent : linear(tape, lo.latent, dec + "/head");
    out.leaves.push_back(std::move(lo));
  }
  return out;
}

Var Model::text_logits(Tape& tape, int leaf, Var latent, std::span<const std::vector<int>> targets, int steps) {
  const PropertySpec& spec = schema_.leaf(leaf);
  const std::string dec = leaf_param_prefix("dec", spec);
  const int n = latent.rows();
  const int d = config_.model_dim;
  std::vector<int> first, rest, ids, pos;
  for (int r = 0; r < n; ++r) {
    first.push_back(r * steps);
    for (int j = 0; j < steps; ++j) {
      pos.push_back(j);
      if (j == 0) continue;
      rest.push_back(r * steps + j);
      ids.push_back(targets[static_cast<std::size_t>(r)][static_cast<std::size_t>(j - 1)]);
    }
  }
  std::vector<Var> sources{linear(tape, latent, dec + "/prefix")};
  std::vector<std::vector<int>> rows{std::move(first)};
  if (!ids.empty()) {
    sources.push_back(ad::gather_rows(p(tape, dec + "/chars"), std::move(ids)));
    rows.push_back(std::move(rest));
  }
  Var seq = ad::add(ad::scatter_rows(sources, rows, n * steps, d), ad::gather_rows(p(tape, dec + "/pos"), std::move(pos)));
  AttentionLayout layout{steps, config_.heads, true, attention_scale(), {}};
  for (int j = 0; j < config_.text_layers; ++j) seq = transformer_layer(tape, seq, layer_name(dec, j), layout, false, 0);
  return linear(tape, seq, dec + "/head");
}

Var Model::leaf_loss(Tape& tape, const LeafOutput& out, std::span<const EntityInstance> truths) {
  const PropertySpec& spec = schema_.leaf(out.leaf);
  auto truth = [&](int b) -> const Cell& {
    const Cell& c = truths[static_cast<std::size_t>(b)].values.at(static_cast<std::size_t>(out.leaf));
    if (!c.is_present()) throw DataError("leaf_loss: truth for '" + spec.path + "' is not Present");
    return c;
  };
  switch (spec.kind) {
    case PropertyKind::categorical: {
      std::vector<int> tgt;
      for (int b : out.entities) tgt.push_back(truth(b).category());
      return ad::cross_entropy_rows(out.head, tgt);
    }
    case PropertyKind::numerical: {
      std::vector<double> tgt;
      for (int b : out.entities) tgt.push_back(truth(b).number());
      return ad::gmm_nll_rows(out.head, tgt, config_.gmm_components, config_.unit_scale);
    }
    case PropertyKind::text: {
      const int steps = text_decoder_length(spec.text);
      std::vector<std::vector<int>> seqs;
      std::vector<int> flat;
      std::vector<std::uint8_t> valid;
      for (int b : out.entities) {
        seqs.push_back(text_targets(spec.text, truth(b).text()));
        for (int t : seqs.back()) {
          flat.push_back(t);
          valid.push_back(t != TextSpec::kPad);
        }
      }
      Var logits = text_logits(tape, out.leaf, out.latent, seqs, steps);
      return ad::sequence_cross_entropy(logits, flat, valid, steps);
    }
    case PropertyKind::composite: break;
  }
  throw SchemaError("leaf_loss: composite leaf");
}

std::vector<std::map<int, PropertyPrediction>> Model::predict(std::span<const EntityInstance> batch) const {
  std::vector<std::map<int, PropertyPrediction>> result(batch.size());
  Tape tape(false);
  const ForwardOutput out = const_cast<Model*>(this)->forward(tape, batch);
  for (const auto& lo : out.leaves) {
    const PropertySpec& spec = schema_.leaf(lo.leaf);
    const Tensor& head = lo.head.value();
    for (std::size_t r = 0; r < lo.entities.size(); ++r) {
      auto row = head.row(static_cast<int>(r));
      auto& slot = result[static_cast<std::size_t>(lo.entities[r])];
      switch (spec.kind) {
        case PropertyKind::categorical: slot.emplace(lo.leaf, CategoricalPrediction{{row.begin(), row.end()}}); break;
        case PropertyKind::numerical:
          slot.emplace(lo.leaf, NumericPrediction{gmm_params_from_head(row, config_.gmm_components, config_.unit_scale)});
          break;
        case PropertyKind::text: slot.emplace(lo.leaf, TextPrediction{{row.begin(), row.end()}}); break;
        case PropertyKind::composite: break;
      }
    }
  }
  return result;
}

std::map<int, PropertyPrediction> Model::predict(const EntityInstance& entity) const {
  return predict(std::span<const EntityInstance>(&entity, 1)).front();
}

std::string Model::decode_text(int leaf, std::span<const double> latent, double temperature, Rng* rng) const {
  const PropertySpec& spec = schema_.leaf(leaf);
  if (spec.kind != PropertyKind::text) throw SchemaError("decode_text: '" + spec.path + "' is not text");
  const int steps = text_decoder_length(spec.text);
  const int vocab = spec.text.token_count();
  Model& self = const_cast<Model&>(*this);
  std::vector<std::vector<int>> seq{std::vector<int>(static_cast<std::size_t>(steps), TextSpec::kPad)};
  for (int j = 0; j < steps; ++j) {
    Tape tape(false);
    Var lat = tape.constant(Tensor::row_vector(latent));
    Var logits = self.text_logits(tape, leaf, lat, seq, steps);
    auto row = logits.value().row(j);
    // Only characters and the end marker are emitted; the last slot must end.
    int pick = TextSpec::kEnd;
    if (j < steps - 1) {
      if (rng == nullptr || temperature <= 0.0) {
        double best = row[TextSpec::kEnd];
        for (int t = TextSpec::kFirstChar; t < vocab; ++t)
          if (row[static_cast<std::size_t>(t)] > best) best = row[static_cast<std::size_t>(pick = t)];
      } else {
        double top = row[TextSpec::kEnd];
        for (int t = TextSpec::kFirstChar; t < vocab; ++t) top = std::max(top, row[static_cast<std::size_t>(t)]);
        std::vector<double> w(static_cast<std::size_t>(vocab), 0.0);
        w[TextSpec::kEnd] = std::exp((row[TextSpec::kEnd] - top) / temperature);
        for (int t = TextSpec::kFirstChar; t < vocab; ++t)
          w[static_cast<std::size_t>(t)] = std::exp((row[static_cast<std::size_t>(t)] - top) / temperature);
        pick = rng->categorical(w);
      }
    }
    if (pick == TextSpec::kEnd) break;
    seq[0][static_cast<std::size_t>(j)] = pick;
  }
  return strucdiff::decode_text(spec.text, seq[0]);
}

double Model::text_nll(int leaf, std::span<const double> latent, const std::string& truth) const {
  const PropertySpec& spec = schema_.leaf(leaf);
  if (spec.kind != PropertyKind::text) throw SchemaError("text_nll: '" + spec.path + "' is not text");
  const int steps = text_decoder_length(spec.text);
  std::vector<std::vector<int>> seq{text_targets(spec.text, truth)};
  std::vector<std::uint8_t> valid;
  for (int t : seq[0]) valid.push_back(t != TextSpec::kPad);
  Tape tape(false);
  Var lat = tape.constant(Tensor::row_vector(latent));
  Var logits = const_cast<Model*>(this)->text_logits(tape, leaf, lat, seq, steps);
  return ad::sequence_cross_entropy(logits, seq[0], valid, steps).scalar();
}

}  // namespace strucdiff
