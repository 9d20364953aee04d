#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <unordered_set>

#include "disco/data.hpp"

namespace disco {
namespace {

constexpr std::string_view kSyllables[] = {"ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pa", "do", "fi",
                                           "gu", "he", "ji", "ko", "ma", "nu", "po", "ri", "se", "tu", "ve", "wa"};

std::string pseudo_word(std::size_t index) {
  constexpr std::size_t base = std::size(kSyllables);
  std::string word;
  std::size_t k = index;
  for (int i = 0; i < 3; ++i) {
    word += kSyllables[k % base];
    k /= base;
  }
  if (k > 0) word += std::to_string(k);
  return word;
}

// Surface forms for every concept and for filler words, chosen so the
// hashed ids land in the bucket the teacher assigns to that concept.
struct Lexicon {
  std::vector<std::vector<std::string>> concept_words;
  std::vector<std::string> fillers;
};

Lexicon build_lexicon(const SynthOptions& opt) {
  const auto& layout = opt.layout;
  Lexicon lex;
  lex.concept_words.resize(layout.concepts);
  std::unordered_set<std::size_t> used_ids;
  std::size_t missing = layout.concepts * opt.synonyms + opt.fillers;
  const std::size_t limit = 1000 * (missing + 1) * layout.buckets();
  for (std::size_t k = 0; missing > 0; ++k) {
    if (k > limit) throw std::invalid_argument("synth: vocabulary too small for the requested lexicon");
    std::string word = pseudo_word(k);
    const std::size_t id = opt.vocab.id(word);
    if (used_ids.count(id)) continue;
    const std::size_t bucket = layout.bucket(id);
    auto& slot = bucket == 0 ? lex.fillers : lex.concept_words[bucket - 1];
    const std::size_t want = bucket == 0 ? opt.fillers : opt.synonyms;
    if (slot.size() >= want) continue;
    slot.push_back(std::move(word));
    used_ids.insert(id);
    --missing;
  }
  return lex;
}

class Generator {
 public:
  Generator(std::uint64_t seed, const SynthOptions& opt) : opt_(opt), lex_(build_lexicon(opt)), rng_(seed) {
    topic_concepts_.resize(opt.topics);
    for (std::size_t c = 0; c < opt.layout.concepts; ++c) topic_concepts_[c % opt.topics].push_back(c);
  }

  std::size_t random_topic() { return uniform(opt_.topics); }

  std::size_t other_topic(std::size_t topic) {
    const std::size_t t = uniform(opt_.topics - 1);
    return t >= topic ? t + 1 : t;
  }

  std::vector<std::size_t> draw_concepts(std::size_t topic) {
    const auto& pool = topic_concepts_[topic];
    std::vector<std::size_t> out(opt_.content_tokens);
    for (auto& c : out) c = pool[uniform(pool.size())];
    return out;
  }

  // Fresh surface form for every concept.
  std::vector<std::size_t> draw_forms(std::size_t n) {
    std::vector<std::size_t> forms(n);
    for (auto& f : forms) f = uniform(opt_.synonyms);
    return forms;
  }

  std::string render(const std::vector<std::size_t>& concepts, const std::vector<std::size_t>& forms) {
    std::vector<std::string> words;
    for (std::size_t i = 0; i < concepts.size(); ++i) words.push_back(lex_.concept_words[concepts[i]][forms[i]]);
    const std::size_t fillers = 1 + uniform(opt_.max_filler_tokens);
    for (std::size_t i = 0; i < fillers; ++i) words.push_back(lex_.fillers[uniform(lex_.fillers.size())]);
    std::shuffle(words.begin(), words.end(), rng_);
    std::string out;
    for (const auto& w : words) {
      if (!out.empty()) out += ' ';
      out += w;
    }
    out[0] = static_cast<char>(out[0] - 'a' + 'A');
    return out + ".";
  }

  std::string sentence(std::size_t topic) {
    const auto concepts = draw_concepts(topic);
    return render(concepts, draw_forms(concepts.size()));
  }

  Triplet triplet(TripletTopics& topics) {
    const std::size_t topic = random_topic();
    const auto concepts = draw_concepts(topic);
    const auto forms = draw_forms(concepts.size());
    auto perturbed = forms;
    for (auto& f : perturbed) {
      if (bernoulli(opt_.resample_synonym)) f = uniform(opt_.synonyms);
    }
    // Hard negative: keeps up to `negative_overlap` of the anchor's concepts,
    // the rest come from one other topic.
    const std::size_t negative_topic = other_topic(topic);
    auto negative = draw_concepts(negative_topic);
    const std::size_t keep = uniform(std::min(opt_.negative_overlap, concepts.size() - 1) + 1);
    for (std::size_t i = 0; i < keep; ++i) negative[i] = concepts[i];
    topics = TripletTopics{topic, topic, negative_topic};
    return Triplet{render(concepts, forms), render(concepts, perturbed), render(negative, draw_forms(negative.size()))};
  }

  StsPair sts_pair() {
    const std::size_t topic = random_topic();
    const auto concepts = draw_concepts(topic);
    const auto forms = draw_forms(concepts.size());
    StsPair pair;
    pair.first = render(concepts, forms);
    if (bernoulli(0.05)) {
      pair.second = pair.first;
      pair.gold = 5.0;
      return pair;
    }
    // Keep `shared` of the anchor's concepts, each under a different surface
    // form; the remaining slots come from other topics.
    const std::size_t m = concepts.size();
    const std::size_t shared = uniform(m + 1);
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng_);
    std::vector<std::size_t> second_concepts, second_forms;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t pos = order[i];
      if (i < shared) {
        second_concepts.push_back(concepts[pos]);
        second_forms.push_back(opt_.synonyms > 1 ? (forms[pos] + 1 + uniform(opt_.synonyms - 1)) % opt_.synonyms
                                                 : forms[pos]);
      } else {
        const auto& pool = topic_concepts_[other_topic(topic)];
        second_concepts.push_back(pool[uniform(pool.size())]);
        second_forms.push_back(uniform(opt_.synonyms));
      }
    }
    pair.second = render(second_concepts, second_forms);
    pair.gold = 5.0 * static_cast<double>(shared) / static_cast<double>(m);
    return pair;
  }

 private:
  std::size_t uniform(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  bool bernoulli(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }

  const SynthOptions& opt_;
  Lexicon lex_;
  std::mt19937_64 rng_;
  std::vector<std::vector<std::size_t>> topic_concepts_;
};

void validate(const SynthSizes& sizes, const SynthOptions& opt) {
  if (sizes.corpus == 0 || sizes.triplets == 0 || sizes.dev_pairs < 2 || sizes.test_pairs < 2) {
    throw std::invalid_argument("synth: sizes must be positive (at least two STS pairs per split)");
  }
  if (opt.topics < 2 || opt.layout.concepts < opt.topics) {
    throw std::invalid_argument("synth: need at least two topics and one concept per topic");
  }
  if (opt.synonyms == 0 || opt.fillers == 0 || opt.content_tokens == 0 || opt.max_filler_tokens == 0) {
    throw std::invalid_argument("synth: lexicon and sentence sizes must be positive");
  }
}

}  // namespace

SynthData synth_generate(std::uint64_t seed, const SynthSizes& sizes, const SynthOptions& options) {
  validate(sizes, options);
  Generator gen(seed, options);
  SynthData data;
  data.corpus.source = "synthetic:" + std::to_string(seed);
  for (std::size_t i = 0; i < sizes.corpus; ++i) data.corpus.sentences.push_back(gen.sentence(gen.random_topic()));
  data.triplet_topics.resize(sizes.triplets);
  for (std::size_t i = 0; i < sizes.triplets; ++i) data.triplets.push_back(gen.triplet(data.triplet_topics[i]));

  data.dev.name = "synthetic-dev";
  data.test.name = "synthetic-test";
  std::set<std::string> dev_anchors;
  for (std::size_t i = 0; i < sizes.dev_pairs; ++i) {
    data.dev.pairs.push_back(gen.sts_pair());
    dev_anchors.insert(data.dev.pairs.back().first);
  }
  while (data.test.pairs.size() < sizes.test_pairs) {
    StsPair pair = gen.sts_pair();
    if (dev_anchors.count(pair.first)) continue;
    data.test.pairs.push_back(std::move(pair));
  }
  return data;
}

}  // namespace disco
