#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disco/encoder.hpp"

namespace disco {

struct StsPair {
  std::string first;
  std::string second;
  double gold = 0.0;
};

struct EvalReport {
  std::string dataset;
  std::optional<double> spearman;  // empty when ranks have no variance
  std::size_t pairs = 0;
  std::optional<double> alignment;
  std::optional<double> uniformity;
  std::string diagnostic;
};

/// Pearson correlation of average ranks. Throws on length mismatch or fewer
/// than two values; returns nullopt when either input is constant.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

/// Average (fractional) 1-based ranks.
std::vector<double> average_ranks(std::span<const double> values);

/// Maps a batch of sentences to [n, dim] embeddings.
using SentenceEncoder = std::function<Tensor(std::span<const std::string>)>;

SentenceEncoder model_encoder(const Model& model);

/// Cosine similarity of each pair's embeddings.
std::vector<double> predicted_similarities(std::span<const StsPair> pairs, const SentenceEncoder& encoder);

EvalReport sts_evaluate(std::span<const StsPair> pairs, const SentenceEncoder& encoder, std::string dataset = "sts");

/// Mean squared distance between L2-normalised rows of `a` and `b`.
double alignment_loss(const Tensor& a, const Tensor& b);
/// log of the mean over distinct row pairs of exp(-2 |u - v|^2) on
/// L2-normalised rows.
double uniformity_loss(const Tensor& embeddings);

/// Adds alignment over pairs with gold >= threshold and uniformity over all
/// distinct sentences of the set.
void add_diagnostics(EvalReport& report, std::span<const StsPair> pairs, const SentenceEncoder& encoder,
                     double positive_threshold = 4.0);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
void write_report_table(std::ostream& out, std::span<const EvalReport> reports);
/// Tab-separated: dataset, rho, pairs, align, uniform; absent values are empty.
void write_report_tsv(std::ostream& out, std::span<const EvalReport> reports);

}  // namespace disco
