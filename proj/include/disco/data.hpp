#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "disco/encoder.hpp"
#include "disco/eval.hpp"

namespace disco {

/// Malformed or unreadable input. `line()` is 1-based, 0 when the error is
/// not tied to a line.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::size_t line = 0) : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct Triplet {
  std::string anchor;
  std::string positive;
  std::string negative;
};

struct UnlabeledCorpus {
  std::vector<std::string> sentences;
  std::string source;
};

struct StsPairSet {
  std::string name;
  std::vector<StsPair> pairs;
};

// Plain text, one sentence per line; blank lines are skipped.
UnlabeledCorpus load_unlabeled(const std::filesystem::path& path);
// TSV: anchor, positive, negative.
std::vector<Triplet> load_triplets(const std::filesystem::path& path);
// TSV: sentence A, sentence B, decimal gold score.
StsPairSet load_sts(const std::filesystem::path& path, std::string name);

void write_unlabeled(const std::filesystem::path& path, const std::vector<std::string>& sentences);
void write_triplets(const std::filesystem::path& path, const std::vector<Triplet>& triplets);
void write_sts(const std::filesystem::path& path, const std::vector<StsPair>& pairs);

struct SynthSizes {
  std::size_t corpus = 2000;
  std::size_t triplets = 500;
  std::size_t dev_pairs = 200;
  std::size_t test_pairs = 200;
};

/// Knobs of the latent topic model behind synthetic sentences. `layout`
/// and `vocab` must match the synthetic teacher's for its geometry to line
/// up with the generated gold scores.
struct SynthOptions {
  Vocabulary vocab;
  LatentLayout layout;
  std::size_t topics = 12;
  std::size_t synonyms = 4;
  std::size_t fillers = 24;
  std::size_t content_tokens = 4;
  std::size_t max_filler_tokens = 3;
  double resample_synonym = 0.5;  // per-token chance a positive swaps the surface form
  std::size_t negative_overlap = 1;  // max anchor concepts a negative may keep
};

struct TripletTopics {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

struct SynthData {
  UnlabeledCorpus corpus;
  std::vector<Triplet> triplets;
  std::vector<TripletTopics> triplet_topics;  // generating topic of each triplet member
  StsPairSet dev;
  StsPairSet test;
};

/// Deterministic in `seed`. Sentences mix concept words from one topic with
/// filler words. Positives keep the anchor's concepts with perturbed surface
/// forms; negatives come from another topic. STS gold is 5 * (shared
/// concepts / content tokens).
SynthData synth_generate(std::uint64_t seed, const SynthSizes& sizes, const SynthOptions& options = {});

}  // namespace disco
