#include "disco/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <stdexcept>

#include "disco/kernels.hpp"
#include "disco/losses.hpp"

namespace disco {

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // Ties share the mean of the 1-based positions i+1 .. j.
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("spearman: length mismatch " + std::to_string(x.size()) + " vs " +
                                std::to_string(y.size()));
  }
  if (x.size() < 2) throw std::invalid_argument("spearman: needs at least two observations");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw std::invalid_argument("spearman: non-finite input");
  }
  auto rx = average_ranks(x);
  auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;  // ranks always average to this
  for (auto& r : rx) r -= mean;
  for (auto& r : ry) r -= mean;
  const double sxx = kernels::sum_squares(rx);
  const double syy = kernels::sum_squares(ry);
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(kernels::dot(rx, ry) / std::sqrt(sxx * syy), -1.0, 1.0);
}

SentenceEncoder model_encoder(const Model& model) {
  return [&model](std::span<const std::string> batch) { return encode(batch, model); };
}

namespace {

constexpr std::size_t kEvalChunk = 256;

Tensor encode_all(std::span<const std::string> sentences, const SentenceEncoder& encoder) {
  std::vector<double> values;
  std::size_t dim = 0;
  for (std::size_t begin = 0; begin < sentences.size(); begin += kEvalChunk) {
    const auto chunk = sentences.subspan(begin, std::min(kEvalChunk, sentences.size() - begin));
    const Tensor part = encoder(chunk);
    if (part.rows() != chunk.size()) throw ShapeError("encoder returned " + shape_to_string(part.shape()) + " for " +
                                                      std::to_string(chunk.size()) + " sentences");
    dim = part.cols();
    values.insert(values.end(), part.data().begin(), part.data().end());
  }
  return Tensor({sentences.size(), dim}, std::move(values));
}

Tensor normalized(const Tensor& t) {
  Tensor out = t;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double norm = std::sqrt(kernels::sum_squares(row));
    if (!(norm > 0.0)) throw NumericError("zero-norm embedding in row " + std::to_string(r));
    for (auto& v : row) v /= norm;
  }
  return out;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
  return total;
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string optional_cell(const std::optional<double>& v) { return v ? fixed(*v) : std::string(); }

}  // namespace

std::vector<double> predicted_similarities(std::span<const StsPair> pairs, const SentenceEncoder& encoder) {
  std::vector<std::string> sentences;
  sentences.reserve(2 * pairs.size());
  for (const auto& p : pairs) sentences.push_back(p.first);
  for (const auto& p : pairs) sentences.push_back(p.second);
  const Tensor emb = encode_all(sentences, encoder);
  std::vector<double> sims(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) sims[i] = cosine(emb.row(i), emb.row(pairs.size() + i));
  return sims;
}

EvalReport sts_evaluate(std::span<const StsPair> pairs, const SentenceEncoder& encoder, std::string dataset) {
  if (pairs.size() < 2) throw std::invalid_argument("sts_evaluate: need at least two pairs");
  EvalReport report;
  report.dataset = std::move(dataset);
  report.pairs = pairs.size();
  const auto predicted = predicted_similarities(pairs, encoder);
  std::vector<double> gold(pairs.size());
  std::transform(pairs.begin(), pairs.end(), gold.begin(), [](const StsPair& p) { return p.gold; });
  report.spearman = spearman(predicted, gold);
  if (!report.spearman) {
    report.diagnostic = std::all_of(predicted.begin(), predicted.end(), [&](double v) { return v == predicted[0]; })
                            ? "all predicted similarities are equal"
                            : "all gold scores are equal";
  }
  return report;
}

double alignment_loss(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "alignment_loss");
  const Tensor na = normalized(a);
  const Tensor nb = normalized(b);
  double total = 0.0;
  for (std::size_t r = 0; r < na.rows(); ++r) total += squared_distance(na.row(r), nb.row(r));
  return total / static_cast<double>(na.rows());
}

double uniformity_loss(const Tensor& embeddings) {
  if (embeddings.rank() != 2 || embeddings.rows() < 2) {
    throw std::invalid_argument("uniformity_loss: needs at least two embeddings, got " +
                                shape_to_string(embeddings.shape()));
  }
  const Tensor n = normalized(embeddings);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n.rows(); ++i) {
    for (std::size_t j = i + 1; j < n.rows(); ++j) {
      total += std::exp(-2.0 * squared_distance(n.row(i), n.row(j)));
      ++count;
    }
  }
  return std::log(total / static_cast<double>(count));
}

void add_diagnostics(EvalReport& report, std::span<const StsPair> pairs, const SentenceEncoder& encoder,
                     double positive_threshold) {
  std::vector<std::string> firsts, seconds;
  for (const auto& p : pairs) {
    if (p.gold >= positive_threshold) {
      firsts.push_back(p.first);
      seconds.push_back(p.second);
    }
  }
  if (!firsts.empty()) {
    report.alignment = alignment_loss(encode_all(firsts, encoder), encode_all(seconds, encoder));
  } else {
    report.alignment.reset();
  }

  std::set<std::string> unique;
  for (const auto& p : pairs) {
    unique.insert(p.first);
    unique.insert(p.second);
  }
  const std::vector<std::string> sentences(unique.begin(), unique.end());
  if (sentences.size() >= 2) {
    report.uniformity = uniformity_loss(encode_all(sentences, encoder));
  } else {
    report.uniformity.reset();
  }
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j = {{"dataset", r.dataset}, {"pairs", r.pairs}};
  j["rho"] = r.spearman ? nlohmann::json(*r.spearman) : nlohmann::json(nullptr);
  if (r.alignment) j["align"] = *r.alignment;
  if (r.uniformity) j["uniform"] = *r.uniformity;
  if (!r.diagnostic.empty()) j["diagnostic"] = r.diagnostic;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.dataset = j.at("dataset").get<std::string>();
  r.pairs = j.at("pairs").get<std::size_t>();
  if (j.contains("rho") && !j.at("rho").is_null()) r.spearman = j.at("rho").get<double>();
  if (j.contains("align")) r.alignment = j.at("align").get<double>();
  if (j.contains("uniform")) r.uniformity = j.at("uniform").get<double>();
  r.diagnostic = j.value("diagnostic", "");
  return r;
}

void write_report_table(std::ostream& out, std::span<const EvalReport> reports) {
  char line[256];
  std::snprintf(line, sizeof(line), "%-24s %10s %8s %10s %10s\n", "dataset", "spearman", "pairs", "align", "uniform");
  out << line;
  for (const auto& r : reports) {
    auto cell = [](const std::optional<double>& v) { return v ? fixed(*v, 4) : std::string("-"); };
    std::snprintf(line, sizeof(line), "%-24s %10s %8zu %10s %10s\n", r.dataset.c_str(), cell(r.spearman).c_str(),
                  r.pairs, cell(r.alignment).c_str(), cell(r.uniformity).c_str());
    out << line;
  }
}

void write_report_tsv(std::ostream& out, std::span<const EvalReport> reports) {
  out << "dataset\trho\tpairs\talign\tuniform\n";
  for (const auto& r : reports) {
    out << r.dataset << '\t' << optional_cell(r.spearman) << '\t' << r.pairs << '\t' << optional_cell(r.alignment)
        << '\t' << optional_cell(r.uniformity) << '\n';
  }
}

}  // namespace disco
