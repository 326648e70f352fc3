#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "strucdiff/autodiff.hpp"
#include "strucdiff/numeric.hpp"
#include "strucdiff/rng.hpp"
#include "strucdiff/schema.hpp"

namespace strucdiff {

enum class InitScheme { standard, mup };

struct ModelConfig {
  int model_dim = 64;
  int entity_layers = 2;
  int heads = 4;
  int property_layers = 2;  // residual blocks in each leaf encoder and decoder
  int gmm_components = 50;
  bool unit_scale = false;  // one component with the scale frozen at 1
  NumericEmbeddingKind embedding = NumericEmbeddingKind::periodic;
  int embedding_dim = 16;
  bool tie_numeric_embedding = false;
  int text_layers = 1;
  InitScheme init = InitScheme::standard;
  int mup_base_width = 32;
  double dropout = 0.1;

  // Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
};

struct CategoricalPrediction {
  std::vector<double> logits;
};
struct NumericPrediction {
  GmmParams gmm;  // normalized units
};
// Text is decoded autoregressively from the leaf's decoder output.
struct TextPrediction {
  std::vector<double> latent;
};
using PropertyPrediction = std::variant<CategoricalPrediction, NumericPrediction, TextPrediction>;

struct ForwardOptions {
  bool train = false;  // enables dropout
  std::uint64_t dropout_seed = 0;
};

// Decoder output for one masked leaf across the entities of a batch.
struct LeafOutput {
  int leaf = 0;
  std::vector<int> entities;  // batch positions, ascending
  Var latent;                 // [n x model_dim]
  Var head;                   // logits / mixture head; text: same as latent
};

struct ForwardOutput {
  std::vector<LeafOutput> leaves;  // ascending leaf index
};

// The denoising network. Entities passed in must already be normalized.
class Model {
 public:
  Model(ModelConfig config, EntitySchema schema, Rng& rng);

  const ModelConfig& config() const { return config_; }
  const EntitySchema& schema() const { return schema_; }
  std::uint64_t fingerprint() const { return schema_fingerprint(schema_); }

  std::map<std::string, Parameter>& parameters() { return params_; }
  const std::map<std::string, Parameter>& parameters() const { return params_; }
  Parameter& parameter(const std::string& name);
  const Parameter& parameter(const std::string& name) const;
  std::size_t parameter_count() const;

  // Same parameters bound to a schema holding the same leaves in another
  // order.
  Model rebind(const EntitySchema& schema) const;

  // Builds a model from stored tensors; every expected name must be present
  // with the right shape.
  static Model from_parameters(ModelConfig config, EntitySchema schema, std::map<std::string, Parameter> params);

  // Graph-building entry points. Parameters enter `tape` as trainable leaves
  // when it records; the const inference methods below use non-recording
  // tapes only.

  // Key-path encoding of every leaf, [D x model_dim].
  Var hierarchical_encodings(Tape& tape);
  std::vector<double> hierarchical_encoding(std::string_view path) const;

  // Encoder output for one Present value of `leaf`.
  std::vector<double> encode_property(int leaf, const Cell& value) const;

  ForwardOutput forward(Tape& tape, std::span<const EntityInstance> batch, const ForwardOptions& options = {});

  // Per-entity reconstruction loss of one leaf output, [n x 1].
  Var leaf_loss(Tape& tape, const LeafOutput& out, std::span<const EntityInstance> truths);

  // Inference: one map per entity from masked leaf index to prediction.
  std::vector<std::map<int, PropertyPrediction>> predict(std::span<const EntityInstance> batch) const;
  std::map<int, PropertyPrediction> predict(const EntityInstance& entity) const;

  // Text head: greedy when `rng` is null or temperature <= 0.
  std::string decode_text(int leaf, std::span<const double> latent, double temperature, Rng* rng) const;
  double text_nll(int leaf, std::span<const double> latent, const std::string& truth) const;

 private:
  Model(ModelConfig config, EntitySchema schema);

  void build(Rng* rng);
  Parameter& add(const std::string& name, int rows, int cols, Rng* rng, double stddev, bool hidden);
  void set_bias(const std::string& name, std::span<const double> values);
  void check_bound() const;

  Var p(Tape& tape, const std::string& name);
  Var linear(Tape& tape, Var x, const std::string& prefix);
  Var residual_blocks(Tape& tape, Var x, const std::string& prefix);
  Var transformer_layer(Tape& tape, Var x, const std::string& prefix, const AttentionLayout& layout, bool train,
                        std::uint64_t seed);
  Var encode_values(Tape& tape, int leaf, std::span<const Cell* const> cells);
  Var text_logits(Tape& tape, int leaf, Var latent, std::span<const std::vector<int>> inputs, int steps);
  double attention_scale() const;

  ModelConfig config_;
  EntitySchema schema_;
  std::map<std::string, Parameter> params_;
  std::vector<std::string> segments_;             // sorted unique key tokens
  std::vector<std::vector<int>> leaf_segments_;   // token ids per leaf path
};

std::string leaf_param_prefix(const std::string& module, const PropertySpec& leaf);

}  // namespace strucdiff
