#include <doctest.h>

#include <set>

#include "perspectra/disagreement.hpp"
#include "perspectra/error.hpp"
#include "perspectra/synth.hpp"

using namespace perspectra;

namespace {

ErrorCode code_of(const auto& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::Io;
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.n_comments = 200;
  s.n_annotators = 40;
  return s;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("generation is a pure function of its settings") {
  const SyntheticSpec s = small_spec();
  CHECK(generate_corpus(s).corpus.fingerprint() == generate_corpus(s).corpus.fingerprint());
  SyntheticSpec other = s;
  other.seed = 2;
  CHECK(generate_corpus(other).corpus.fingerprint() != generate_corpus(s).corpus.fingerprint());
  const SyntheticCorpus g = generate_corpus(s);
  CHECK(g.corpus.annotations().size() == s.n_comments * s.annotators_per_comment);
  CHECK_NOTHROW(g.corpus.validate());
}

TEST_CASE("without a demographic effect labels ignore demographics") {
  SyntheticSpec s = small_spec();
  s.beta_demo = 0.0;
  s.annotator_bias = 0.0;
  s.noise = 0.0;
  const SyntheticCorpus g = generate_corpus(s);
  for (std::size_t c = 0; c < g.corpus.comments().size(); ++c) {
    const auto& idx = g.corpus.annotations_of_comment(c);
    for (std::size_t i : idx) CHECK(g.truth.annotation_logit[i] == g.truth.annotation_logit[idx.front()]);
  }
}

TEST_CASE("conditional effects concentrate the group gap on ambiguous comments") {
  SyntheticSpec s;
  s.n_comments = 3000;
  s.n_annotators = 200;
  s.annotator_bias = 0.0;
  const SyntheticCorpus g = generate_corpus(s);
  // Mean label of positive-offset minus negative-offset annotators.
  double sum[2][2] = {{0, 0}, {0, 0}};
  double count[2][2] = {{0, 0}, {0, 0}};
  for (const Annotation& a : g.corpus.annotations()) {
    const int amb = g.truth.ambiguous[a.comment];
    const int side = g.truth.annotator_offset[a.annotator] > 0 ? 1 : 0;
    sum[amb][side] += a.label;
    count[amb][side] += 1;
  }
  const double gap_clear = sum[0][1] / count[0][1] - sum[0][0] / count[0][0];
  const double gap_amb = sum[1][1] / count[1][1] - sum[1][0] / count[1][0];
  CHECK(gap_amb > 0.2);
  CHECK(gap_amb > gap_clear + 0.15);
}

TEST_CASE("zero difficulty gives near-unanimous labels") {
  SyntheticSpec s = small_spec();
  s.ambiguity.ambiguous_fraction = 0.0;
  s.ambiguity.low_max = 0.0;
  const SyntheticCorpus g = generate_corpus(s);
  double mean = 0.0;
  const auto scores = comment_disagreements(g.corpus);
  for (const auto& d : scores) mean += d.value;
  CHECK(mean / static_cast<double>(scores.size()) < 0.1);
}

TEST_CASE("infeasible specs are rejected") {
  SyntheticSpec s = small_spec();
  s.annotators_per_comment = 50;
  CHECK(code_of([&] { generate_corpus(s); }) == ErrorCode::SpecInfeasible);
  s = small_spec();
  s.effect_weights = {1.0};
  CHECK(code_of([&] { generate_corpus(s); }) == ErrorCode::SpecInfeasible);
  s = small_spec();
  s.ambiguity.low_min = 0.5;
  CHECK(code_of([&] { generate_corpus(s); }) == ErrorCode::SpecInfeasible);

  PartitionedSpec p;
  p.overlap = 1.5;
  CHECK(code_of([&] { generate_partitioned(p); }) == ErrorCode::SpecInfeasible);
  p = PartitionedSpec{};
  p.train.careless_fraction = -0.1;
  CHECK(code_of([&] { generate_partitioned(p); }) == ErrorCode::SpecInfeasible);
  p = PartitionedSpec{};
  p.holdout_categories = 8;
  CHECK(code_of([&] { generate_partitioned(p); }) == ErrorCode::SpecInfeasible);
}

TEST_CASE("partitioned corpora have disjoint pools and reserved categories") {
  PartitionedSpec p;
  p.train = {200, 60, 0.2};
  p.val = {50, 30, 0.9};
  p.test = {50, 30, 0.9};
  p.overlap = 0.0;
  const SyntheticCorpus g = generate_partitioned(p);
  REQUIRE(g.split.has_value());
  CHECK_NOTHROW(check_split(g.corpus, *g.split));
  CHECK(g.split->dropped.empty());
  std::set<std::string> train_ann;
  for (const auto& id : partition_annotator_ids(g.corpus, g.split->train)) train_ann.insert(id);
  for (const auto& id : partition_annotator_ids(g.corpus, g.split->test)) CHECK(train_ann.count(id) == 0);

  const std::size_t m = p.base.schema[p.holdout_attribute].categories;
  for (std::size_t i : g.split->test) {
    const int k = g.truth.annotator_categories[g.corpus.annotations()[i].annotator][p.holdout_attribute];
    CHECK(static_cast<std::size_t>(k) >= m - p.holdout_categories);
  }
  for (std::size_t i : g.split->train) {
    const int k = g.truth.annotator_categories[g.corpus.annotations()[i].annotator][p.holdout_attribute];
    CHECK(static_cast<std::size_t>(k) < m - p.holdout_categories);
  }
}

TEST_CASE("careless annotators flip fair coins") {
  PartitionedSpec p;
  p.train = {400, 60, 0.0, 1.0};
  p.val = {20, 30, 0.0};
  p.test = {20, 30, 0.0};
  const SyntheticCorpus g = generate_partitioned(p);
  double positives = 0.0;
  for (std::size_t i : g.split->train) positives += g.corpus.annotations()[i].label;
  const double rate = positives / static_cast<double>(g.split->train.size());
  CHECK(rate == doctest::Approx(0.5).epsilon(0.1));
  // Clear comments are easy for attentive annotators, so careless ones add disagreement.
  const AmbiguitySummary careless = summarize_annotations(g.corpus, g.split->train);
  const AmbiguitySummary attentive = summarize_annotations(g.corpus, g.split->val);
  CHECK(careless.mean_disagreement > attentive.mean_disagreement + 0.3);
}

TEST_CASE("sweep summaries") {
  std::vector<SweepRow> rows(4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].train_index = i % 2;
    rows[i].train_careless = 0.25 * static_cast<double>(i % 2);
    rows[i].gain.delta_auc = static_cast<double>(i);
  }
  const auto cells = summarize_sweep(rows);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].n == 2);
  CHECK(cells[0].mean_delta == doctest::Approx(1.0));
  CHECK(cells[1].mean_delta == doctest::Approx(2.0));
  const std::string csv = sweep_to_csv(rows);
  CHECK(csv.find("train_careless") != std::string::npos);
}

}  // TEST_SUITE
