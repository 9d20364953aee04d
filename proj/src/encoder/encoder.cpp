#include "disco/encoder.hpp"

#include <cctype>
#include <cmath>
#include <random>
#include <stdexcept>

#include "disco/ops.hpp"

namespace disco {

std::size_t Vocabulary::id(std::string_view token) const {
  constexpr std::uint64_t kOffset = 14695981039346656037ull;
  constexpr std::uint64_t kPrime = 1099511628211ull;
  std::uint64_t h = kOffset;
  for (int i = 0; i < 8; ++i) {
    h ^= (scheme >> (8 * i)) & 0xffu;
    h *= kPrime;
  }
  for (unsigned char c : token) {
    h ^= c;
    h *= kPrime;
  }
  return static_cast<std::size_t>(h % size);
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (unsigned char c : text) {
    const bool ascii = c < 0x80;
    if (ascii && (std::isspace(c) || std::ispunct(c))) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(ascii ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

std::vector<std::size_t> tokenize(std::string_view sentence, const Vocabulary& vocab) {
  const auto words = split_words(sentence);
  if (words.empty()) throw std::invalid_argument("sentence has no tokens after trimming: \"" + std::string(sentence) + "\"");
  std::vector<std::size_t> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(vocab.id(w));
  return ids;
}

std::string_view pooling_name(Pooling pooling) {
  switch (pooling) {
    case Pooling::kMean:
      return "mean";
    case Pooling::kMeanMlp:
      return "mean_mlp";
    case Pooling::kAttention:
      return "attention";
  }
  return "unknown";
}

Pooling parse_pooling(std::string_view name) {
  if (name == "mean") return Pooling::kMean;
  if (name == "mean_mlp") return Pooling::kMeanMlp;
  if (name == "attention") return Pooling::kAttention;
  throw std::invalid_argument("unknown pooling kind '" + std::string(name) + "' (mean|mean_mlp|attention)");
}

void EncoderConfig::validate() const {
  if (vocab.size == 0) throw std::invalid_argument("vocabulary size must be positive");
  if (embed_dim == 0) throw std::invalid_argument("embedding dimension must be positive");
  if (output_dim == 0) throw std::invalid_argument("output dimension must be positive");
  if (pooling == Pooling::kAttention && blocks == 0) throw std::invalid_argument("attention pooling needs at least one block");
  if (pooling != Pooling::kAttention && blocks != 0) {
    throw std::invalid_argument("blocks > 0 requires attention pooling, got " + std::string(pooling_name(pooling)));
  }
  if (projection_dim == output_dim) throw std::invalid_argument("projection to the same dimension is redundant");
}

namespace {

std::string block_param(std::size_t block, std::string_view role) {
  return "block" + std::to_string(block) + "." + std::string(role);
}

std::vector<std::pair<std::string, Shape>> expected_params(const EncoderConfig& c) {
  std::vector<std::pair<std::string, Shape>> out;
  out.emplace_back(std::string(kEmbeddingParam), Shape{c.vocab.size, c.embed_dim});
  for (std::size_t b = 0; b < c.blocks; ++b) {
    for (auto role : {"query", "key", "value"}) out.emplace_back(block_param(b, role), Shape{c.embed_dim, c.embed_dim});
  }
  out.emplace_back(std::string(kHeadWeightParam), Shape{c.output_dim, c.embed_dim});
  if (c.pooling != Pooling::kMean) out.emplace_back(std::string(kHeadBiasParam), Shape{c.output_dim});
  if (c.projection_dim != 0) out.emplace_back(std::string(kProjectionParam), Shape{c.projection_dim, c.output_dim});
  return out;
}

Tensor gaussian(std::mt19937_64& rng, const Shape& shape, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(shape);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

Tensor uniform(std::mt19937_64& rng, const Shape& shape, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(shape);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace

void Model::validate() const {
  config.validate();
  const auto expected = expected_params(config);
  if (expected.size() != params.size()) {
    throw ShapeError("model holds " + std::to_string(params.size()) + " parameter arrays, config implies " +
                     std::to_string(expected.size()));
  }
  for (const auto& [name, shape] : expected) {
    auto it = params.find(name);
    if (it == params.end()) throw ShapeError("missing parameter '" + name + "'");
    if (it->second.shape() != shape) {
      throw ShapeError("parameter '" + name + "' has shape " + shape_to_string(it->second.shape()) + ", expected " +
                       shape_to_string(shape));
    }
    if (!it->second.all_finite()) throw NumericError("parameter '" + name + "' contains non-finite values");
  }
}

Var encode(Tape& tape, std::span<const std::string> batch, const Model& model, std::string_view scope) {
  if (batch.empty()) throw std::invalid_argument("encode: empty batch");
  const EncoderConfig& cfg = model.config;

  auto param = [&](const std::string& name) {
    auto it = model.params.find(name);
    if (it == model.params.end()) throw ShapeError("encode: missing parameter '" + name + "'");
    Var v = tape.parameter(std::string(scope) + name, it->second);
    return cfg.frozen ? ops::detach(v) : v;
  };

  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets{0};
  for (const auto& sentence : batch) {
    const auto tokens = tokenize(sentence, cfg.vocab);
    ids.insert(ids.end(), tokens.begin(), tokens.end());
    offsets.push_back(ids.size());
  }

  Var x = ops::gather_rows(param(std::string(kEmbeddingParam)), ids);
  if (x.shape()[1] != cfg.embed_dim) {
    throw ShapeError("encode: embedding table width " + std::to_string(x.shape()[1]) + " != configured " +
                     std::to_string(cfg.embed_dim));
  }
  const double score_scale = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    Var q = ops::matmul_nt(x, param(block_param(b, "query")));
    Var k = ops::matmul_nt(x, param(block_param(b, "key")));
    Var v = ops::matmul_nt(x, param(block_param(b, "value")));
    Var attn = ops::segment_softmax(ops::scale(ops::matmul_nt(q, k), score_scale), offsets);
    x = ops::add(x, ops::matmul(attn, v));
  }

  Var pooled = ops::segment_mean(x, offsets);
  Var h = ops::matmul_nt(pooled, param(std::string(kHeadWeightParam)));
  if (cfg.pooling != Pooling::kMean) h = ops::tanh(ops::add_rowvec(h, param(std::string(kHeadBiasParam))));
  if (h.shape()[1] != cfg.output_dim) {
    throw ShapeError("encode: head produces width " + std::to_string(h.shape()[1]) + ", configured output " +
                     std::to_string(cfg.output_dim));
  }
  return h;
}

Tensor encode(std::span<const std::string> batch, const Model& model) {
  Tape tape;
  return encode(tape, batch, model).value();
}

Var project(const Var& h, const Var& m) {
  if (m.value().rank() != 2 || h.value().cols() != m.shape()[1]) {
    throw ShapeError("project: embeddings " + shape_to_string(h.shape()) + " incompatible with projection " +
                     shape_to_string(m.shape()));
  }
  return ops::matmul_nt(h, m);
}

Tensor project(const Tensor& h, const Tensor& m) {
  Tape tape;
  return project(tape.constant(h), tape.constant(m)).value();
}

Model make_synthetic_teacher(std::uint64_t seed, const Vocabulary& vocab, std::size_t output_dim,
                             const LatentLayout& layout) {
  if (output_dim == 0) throw std::invalid_argument("teacher output dimension must be positive");
  if (layout.concepts == 0) throw std::invalid_argument("teacher layout needs at least one concept");

  Model teacher;
  teacher.config.vocab = vocab;
  teacher.config.embed_dim = output_dim;
  teacher.config.pooling = Pooling::kMean;
  teacher.config.output_dim = output_dim;
  teacher.config.frozen = true;
  teacher.config.validate();

  const std::size_t d = output_dim;
  std::mt19937_64 rng(seed);
  const double unit = 1.0 / std::sqrt(static_cast<double>(d));

  Tensor directions = gaussian(rng, {layout.concepts, d}, unit);
  Tensor table = gaussian(rng, {vocab.size, d}, unit);
  for (std::size_t id = 0; id < vocab.size; ++id) {
    auto row = table.row(id);
    const std::size_t bucket = layout.bucket(id);
    if (bucket == 0) {
      for (auto& v : row) v *= layout.filler_scale;
    } else {
      const auto dir = directions.row(bucket - 1);
      for (std::size_t c = 0; c < d; ++c) row[c] = dir[c] + layout.concept_noise * row[c];
    }
  }
  teacher.params.emplace(std::string(kEmbeddingParam), std::move(table));
  teacher.params.emplace(std::string(kHeadWeightParam), gaussian(rng, {d, d}, unit));
  teacher.validate();
  return teacher;
}

Model init_student(std::uint64_t seed, EncoderConfig config, std::size_t teacher_dim) {
  config.frozen = false;
  config.projection_dim = (teacher_dim != 0 && teacher_dim != config.output_dim) ? teacher_dim : 0;
  config.validate();

  Model student;
  student.config = config;
  std::mt19937_64 rng(seed);
  const std::size_t d = config.embed_dim;
  const double unit = 1.0 / std::sqrt(static_cast<double>(d));

  student.params.emplace(std::string(kEmbeddingParam), gaussian(rng, {config.vocab.size, d}, unit));
  for (std::size_t b = 0; b < config.blocks; ++b) {
    for (auto role : {"query", "key", "value"}) student.params.emplace(block_param(b, role), gaussian(rng, {d, d}, unit));
  }
  student.params.emplace(std::string(kHeadWeightParam), uniform(rng, {config.output_dim, d}, std::sqrt(3.0) * unit));
  if (config.pooling != Pooling::kMean) student.params.emplace(std::string(kHeadBiasParam), Tensor({config.output_dim}));
  if (config.projection_dim != 0) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(config.output_dim));
    student.params.emplace(std::string(kProjectionParam), uniform(rng, {config.projection_dim, config.output_dim}, bound));
  }
  student.validate();
  return student;
}

std::size_t parameter_count(const Model& model) {
  std::size_t n = 0;
  for (const auto& [name, t] : model.params) n += t.size();
  return n;
}

}  // namespace disco
