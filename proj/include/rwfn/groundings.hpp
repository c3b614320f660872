#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rwfn/encoders.hpp"
#include "rwfn/knowledge_base.hpp"
#include "rwfn/numeric.hpp"
#include "rwfn/scene_data.hpp"

namespace rwfn {

// sigma(beta^T encode(v)); only beta (length 2B) is learnable.
class RwfnGrounding {
 public:
  RwfnGrounding(std::shared_ptr<const RandomEncoder> encoder, std::size_t arity);

  const RandomEncoder& encoder() const { return *encoder_; }
  const std::shared_ptr<const RandomEncoder>& shared_encoder() const { return encoder_; }
  std::size_t arity() const { return arity_; }
  std::size_t input_dim() const { return encoder_->input_dim(); }

  std::span<double> params() { return beta_; }
  std::span<const double> params() const { return beta_; }

  double score(std::span<const double> v) const;
  // Score from an already encoded input; gradient (if non-empty) receives
  // d score / d beta.
  static double score_encoded(std::span<const double> beta, std::span<const double> encoded,
                              std::span<double> gradient = {});

 private:
  std::shared_ptr<const RandomEncoder> encoder_;
  std::size_t arity_;
  Vector beta_;
};

// sigma(u^T tanh(v^T W[1:k] v + V v + b)) with full mn x mn slices.
// Parameter layout: [u (k) | W (k*mn*mn, slice-major, row-major) | V (k*mn) | b (k)].
class NtnGrounding {
 public:
  NtnGrounding(std::size_t input_dim, std::size_t slices, std::size_t arity);

  // Entries i.i.d. N(0, 1/input_dim).
  static NtnGrounding random(Rng& rng, std::size_t input_dim, std::size_t slices,
                             std::size_t arity);

  std::size_t arity() const { return arity_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t slices() const { return slices_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  std::span<double> u() { return params().subspan(0, slices_); }
  std::span<double> tensor_slice(std::size_t i) {
    return params().subspan(slices_ + i * input_dim_ * input_dim_, input_dim_ * input_dim_);
  }
  std::span<double> linear() {
    return params().subspan(slices_ + slices_ * input_dim_ * input_dim_, slices_ * input_dim_);
  }
  std::span<double> bias() { return params().subspan(params_.size() - slices_, slices_); }

  double score(std::span<const double> v) const;
  // Evaluates with an explicit parameter vector; gradient (if non-empty)
  // receives d score / d params.
  static double forward(std::span<const double> params, std::size_t input_dim, std::size_t slices,
                        std::span<const double> v, std::span<double> gradient = {});

  static std::size_t param_size(std::size_t input_dim, std::size_t slices) {
    return slices * (input_dim * input_dim + input_dim + 2);
  }

 private:
  std::size_t input_dim_;
  std::size_t slices_;
  std::size_t arity_;
  Vector params_;
};

using Grounding = std::variant<RwfnGrounding, NtnGrounding>;

std::size_t arity(const Grounding& g);
std::size_t input_dim(const Grounding& g);
std::span<double> params(Grounding& g);
std::span<const double> params(const Grounding& g);
double score(const Grounding& g, std::span<const double> v);

struct ParamCounts {
  std::size_t total = 0;
  std::size_t learnable = 0;

  friend bool operator==(const ParamCounts&, const ParamCounts&) = default;
};

// (mn^2 + mn + 2) k, all learnable.
ParamCounts ntn_param_counts(std::size_t input_dim, std::size_t slices);
// (2 mn + 3) B in total, 2B learnable.
ParamCounts rwfn_param_counts(std::size_t input_dim, std::size_t hidden);
ParamCounts param_counts(const Grounding& g);

enum class ModelKind { rwfn, rwfn_ws, ntn };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

struct ModelConfig {
  ModelKind kind = ModelKind::rwfn_ws;
  std::size_t hidden_unary = 500;
  std::size_t hidden_binary = 1000;
  std::size_t fan_in = kDefaultFanIn;
  std::size_t slices = 5;

  std::size_t hidden(std::size_t arity) const { return arity == 1 ? hidden_unary : hidden_binary; }
};

// Signature predicates paired with one grounding each.
class GroundedTheory {
 public:
  // Builds groundings for every predicate of the signature. Encoder seeds and
  // NTN initial values derive from seed. fan_in is capped at the input dim.
  static GroundedTheory create(const Signature& signature, const FeatureSchema& schema,
                               const ModelConfig& model, std::uint64_t seed);

  const Signature& signature() const { return signature_; }
  const FeatureSchema& schema() const { return schema_; }
  const ModelConfig& model() const { return model_; }
  std::uint64_t seed() const { return seed_; }

  std::size_t size() const { return groundings_.size(); }
  const Grounding& grounding(PredicateId id) const { return groundings_.at(id); }
  Grounding& grounding(PredicateId id) { return groundings_.at(id); }

  double score(PredicateId id, std::span<const double> v) const;

  // Learnable parameters of every grounding, concatenated in predicate order.
  std::size_t learnable_size() const;
  std::size_t param_offset(PredicateId id) const;
  std::vector<double> gather_params() const;
  void scatter_params(std::span<const double> theta);

  // Encoders referenced by the groundings, deduplicated by identity.
  std::vector<std::shared_ptr<const RandomEncoder>> distinct_encoders() const;

  bool trained() const { return trained_; }
  void mark_trained(bool trained = true) { trained_ = trained; }
  const std::string& config_hash() const { return config_hash_; }
  void set_config_hash(std::string hash) { config_hash_ = std::move(hash); }

 private:
  Signature signature_;
  FeatureSchema schema_;
  ModelConfig model_;
  std::uint64_t seed_ = 0;
  std::vector<Grounding> groundings_;
  std::shared_ptr<EncoderRegistry> registry_;
  bool trained_ = false;
  std::string config_hash_;

  friend GroundedTheory parse_checkpoint(const std::string& text);
};

// Stored parameter count of a theory. With shared = true, RWFN encoders are
// counted once per arity: (2 mn B + B) + 2B * (#predicates of that arity).
std::size_t theory_space(const GroundedTheory& theory, bool shared);

struct GroundingShape {
  ModelKind kind = ModelKind::rwfn;
  std::size_t input_dim = 0;
  std::size_t hidden_or_slices = 0;
  std::size_t count = 1;
};
// Same accounting without materialising encoders; one entry per arity.
std::size_t theory_space(std::span<const GroundingShape> shapes, bool shared);

// Checkpoint file (JSON, format "rwfn-checkpoint"): signature, model config,
// encoder keys, learnable parameters, training config hash.
std::string serialize_checkpoint(const GroundedTheory& theory);
GroundedTheory parse_checkpoint(const std::string& text);
void save_checkpoint(const GroundedTheory& theory, const std::filesystem::path& path);
GroundedTheory load_checkpoint(const std::filesystem::path& path);

}  // namespace rwfn
