#pragma once

// Sentence encoders. A model is an EncoderConfig plus a named parameter set;
// the same forward pass serves the frozen teacher and trainable students.
//
//   tokens --gather--> [attention blocks] --mean pool--> head --> embedding
//
// Parameter names: "embedding" [V,d], "head.weight" [out,d], "head.bias"
// [out] (MLP heads only), "block<k>.query|key|value" [d,d] (attention
// pooling), "projection" [teacher_dim,out] when the student and teacher
// output sizes differ.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "disco/adam.hpp"
#include "disco/autodiff.hpp"

namespace disco {

/// Hashing vocabulary: every token maps into [0, size) via salted FNV-1a,
/// so there is no out-of-vocabulary case.
struct Vocabulary {
  std::uint64_t scheme = 0;
  std::size_t size = 4096;

  std::size_t id(std::string_view token) const;
};

/// Lowercases ASCII and splits on whitespace and ASCII punctuation. Bytes
/// outside ASCII stay inside tokens.
std::vector<std::string> split_words(std::string_view text);

/// Token ids of a sentence. Throws std::invalid_argument when nothing is
/// left after trimming and splitting.
std::vector<std::size_t> tokenize(std::string_view sentence, const Vocabulary& vocab);

enum class Pooling { kMean, kMeanMlp, kAttention };

std::string_view pooling_name(Pooling pooling);
Pooling parse_pooling(std::string_view name);

struct EncoderConfig {
  Vocabulary vocab;
  std::size_t embed_dim = 32;
  Pooling pooling = Pooling::kMeanMlp;
  std::size_t blocks = 0;  // attention blocks; must be 0 unless pooling is kAttention
  std::size_t output_dim = 32;
  bool frozen = false;
  // Teacher output size the projection maps to; 0 when no projection is held.
  std::size_t projection_dim = 0;

  void validate() const;
};

struct Model {
  EncoderConfig config;
  ParamSet params;

  /// Throws ShapeError if a parameter is missing, misshapen or non-finite.
  void validate() const;
  bool has_projection() const { return config.projection_dim != 0; }
};

inline constexpr std::string_view kEmbeddingParam = "embedding";
inline constexpr std::string_view kHeadWeightParam = "head.weight";
inline constexpr std::string_view kHeadBiasParam = "head.bias";
inline constexpr std::string_view kProjectionParam = "projection";

/// Forward pass on `tape`. Parameters are registered under `scope` + name;
/// for a frozen model they are cut off from the gradient (their gradients
/// come back as zeros). Returns [batch.size(), output_dim].
Var encode(Tape& tape, std::span<const std::string> batch, const Model& model, std::string_view scope = "");

/// Gradient-free forward pass.
Tensor encode(std::span<const std::string> batch, const Model& model);

/// Maps rows of `h` [n,k] through `m` [t,k] to [n,t].
Var project(const Var& h, const Var& m);
Tensor project(const Tensor& h, const Tensor& m);

/// Latent structure baked into the synthetic teacher's embedding table.
/// A token id falls in bucket id % (concepts + 1); bucket 0 holds filler
/// words, bucket c + 1 holds the surface forms of concept c.
struct LatentLayout {
  std::size_t concepts = 48;
  double concept_noise = 1.0;
  double filler_scale = 0.1;

  std::size_t buckets() const { return concepts + 1; }
  std::size_t bucket(std::size_t token_id) const { return token_id % buckets(); }
};

/// Frozen teacher: concept-structured random embedding table, mean pooling
/// and a fixed random linear head. Deterministic in `seed`.
Model make_synthetic_teacher(std::uint64_t seed, const Vocabulary& vocab, std::size_t output_dim,
                             const LatentLayout& layout = {});

/// Randomly initialised trainable model for `config`. A projection to
/// `teacher_dim` is added iff it differs from config.output_dim.
Model init_student(std::uint64_t seed, EncoderConfig config, std::size_t teacher_dim);

std::size_t parameter_count(const Model& model);

}  // namespace disco
