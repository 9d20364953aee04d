#include <cmath>
#include <sstream>

#include "disco/eval.hpp"
#include "doctest.h"

using namespace disco;

TEST_CASE("spearman examples") {
  const std::vector<double> a{1, 2, 3}, b{10, 20, 30}, c{3, 2, 1};
  CHECK(*spearman(a, b) == 1.0);
  CHECK(*spearman(a, c) == -1.0);
  const std::vector<double> d{1, 2, 3, 4}, e{2, 1, 4, 3};
  CHECK(*spearman(d, e) == doctest::Approx(0.6).epsilon(1e-15));
  const std::vector<double> flat{2, 2, 2};
  CHECK_FALSE(spearman(a, flat).has_value());
  CHECK_THROWS(spearman(a, d));
  const std::vector<double> one{1};
  CHECK_THROWS(spearman(one, one));
}

TEST_CASE("average ranks share ties") {
  const std::vector<double> v{10, 20, 10, 30, 20, 10};
  CHECK(average_ranks(v) == std::vector<double>{2, 4.5, 2, 6, 4.5, 2});
}

TEST_CASE("sts_evaluate: degenerate and ordering cases") {
  const std::vector<StsPair> pairs{{"same words", "same words", 5.0}, {"left side", "right hand", 0.0}};
  const SentenceEncoder constant = [](std::span<const std::string> batch) {
    return Tensor::filled({batch.size(), 3}, 1.0);
  };
  const EvalReport flat = sts_evaluate(pairs, constant, "toy");
  CHECK_FALSE(flat.spearman.has_value());
  CHECK(flat.pairs == 2);
  CHECK_FALSE(flat.diagnostic.empty());

  const Model teacher = make_synthetic_teacher(3, Vocabulary{}, 8);
  const EvalReport ordered = sts_evaluate(pairs, model_encoder(teacher), "toy");
  REQUIRE(ordered.spearman.has_value());
  CHECK(*ordered.spearman == 1.0);
}

TEST_CASE("teacher scored against its own cosines is perfectly ranked") {
  const Model teacher = make_synthetic_teacher(5, Vocabulary{}, 8);
  std::vector<StsPair> pairs{{"a b c", "c d e", 0},
                             {"the quick fox", "a slow dog", 0},
                             {"blue sky", "blue sea", 0},
                             {"one", "two three", 0},
                             {"x y", "y x z", 0}};
  const auto encoder = model_encoder(teacher);
  const auto sims = predicted_similarities(pairs, encoder);
  for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i].gold = sims[i];
  CHECK(*sts_evaluate(pairs, encoder).spearman == 1.0);
}

TEST_CASE("alignment examples") {
  const Tensor a = Tensor::matrix({{1, 0}, {0.6, 0.8}});
  CHECK(alignment_loss(a, a) == 0.0);
  CHECK(alignment_loss(Tensor::matrix({{1, 0}}), Tensor::matrix({{0, 1}})) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(alignment_loss(Tensor::matrix({{1, 0}}), Tensor::matrix({{-1, 0}})) == 4.0);
}

TEST_CASE("uniformity examples") {
  CHECK(uniformity_loss(Tensor::matrix({{1, 0}, {1, 0}})) == 0.0);
  CHECK(uniformity_loss(Tensor::matrix({{1, 0}, {0, 1}})) == doctest::Approx(-4.0).epsilon(1e-15));
  CHECK_THROWS(uniformity_loss(Tensor::matrix({{1, 0}})));
}

TEST_CASE("diagnostics use only positive pairs for alignment") {
  const std::vector<StsPair> pairs{{"x", "x", 5.0}, {"x", "y", 1.0}};
  const SentenceEncoder enc = [](std::span<const std::string> batch) {
    Tensor t({batch.size(), 2});
    for (std::size_t i = 0; i < batch.size(); ++i) t.at(i, batch[i] == "x" ? 0 : 1) = 1.0;
    return t;
  };
  EvalReport r = sts_evaluate(pairs, enc, "toy");
  add_diagnostics(r, pairs, enc, 4.0);
  REQUIRE(r.alignment.has_value());
  CHECK(*r.alignment == 0.0);
  REQUIRE(r.uniformity.has_value());
  CHECK(*r.uniformity == doctest::Approx(-4.0).epsilon(1e-15));  // two distinct sentences
}

TEST_CASE("report serialization") {
  EvalReport r;
  r.dataset = "sts-b";
  r.spearman = 0.75;
  r.pairs = 10;
  r.alignment = 0.5;
  const auto back = report_from_json(report_to_json(r));
  CHECK(back.dataset == r.dataset);
  CHECK(back.spearman == r.spearman);
  CHECK(back.alignment == r.alignment);
  CHECK_FALSE(back.uniformity.has_value());

  std::ostringstream tsv;
  const std::vector<EvalReport> reports{r};
  write_report_tsv(tsv, reports);
  CHECK(tsv.str() == "dataset\trho\tpairs\talign\tuniform\nsts-b\t0.750000\t10\t0.500000\t\n");
}
