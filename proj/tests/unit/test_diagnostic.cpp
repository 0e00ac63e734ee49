#include <doctest.h>

#include <algorithm>

#include "perspectra/diagnostic.hpp"
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

SyntheticCorpus small_partitioned() {
  PartitionedSpec p;
  p.train = {200, 40, 0.5};
  p.val = {60, 30, 0.9};
  p.test = {60, 30, 0.9};
  return generate_partitioned(p);
}

DiagnosticConfig fast_probe() {
  DiagnosticConfig c;
  c.hidden = 16;
  c.max_epochs = 6;
  c.patience = 2;
  return c;
}

}  // namespace

TEST_SUITE("diagnostic") {

TEST_CASE("shuffling permutes demographics within the chosen annotators") {
  const SyntheticCorpus g = small_partitioned();
  const Split& split = *g.split;
  const Corpus shuffled = shuffle_demographics(g.corpus, split.train, 7);
  REQUIRE(shuffled.annotators().size() == g.corpus.annotators().size());
  CHECK(shuffled.annotations().size() == g.corpus.annotations().size());
  std::vector<std::string> before, after;
  bool moved = false;
  for (std::size_t a = 0; a < g.corpus.annotators().size(); ++a) {
    const bool in_train = g.corpus.annotators()[a].id.rfind("tr-", 0) == 0;
    const std::string x = g.corpus.demographic_combination(a), y = shuffled.demographic_combination(a);
    if (in_train) {
      before.push_back(x);
      after.push_back(y);
      moved = moved || x != y;
    } else {
      CHECK(x == y);
    }
  }
  std::sort(before.begin(), before.end());
  std::sort(after.begin(), after.end());
  CHECK(before == after);
  CHECK(moved);
  CHECK(shuffle_demographics(g.corpus, split.train, 7).fingerprint() == shuffled.fingerprint());

  const Corpus all = shuffle_split_demographics(g.corpus, split, 3);
  CHECK(all.fingerprint() != g.corpus.fingerprint());
}

TEST_CASE("pooled demographics have the pooled width") {
  const SyntheticCorpus g = small_partitioned();
  std::vector<std::vector<std::string>> cats;
  for (std::size_t j = 0; j < g.corpus.schema().size(); ++j) cats.push_back(g.corpus.categories(j));
  nn::DemographicEmbedding table(cats, {}, 1);
  CHECK(static_cast<std::size_t>(pool_demographics(table, g.corpus.annotators()[0].demographics).size()) ==
        table.pooled_dim());
}

TEST_CASE("probe trains deterministically and beats chance") {
  const SyntheticCorpus g = small_partitioned();
  const HashingEncoder enc(32);
  const EncodingCache cache(enc, g.corpus);
  const ProbeRun a = train_probe(g.corpus, *g.split, cache, true, 4, fast_probe());
  const ProbeRun b = train_probe(g.corpus, *g.split, cache, true, 4, fast_probe());
  CHECK(a.test_auc == b.test_auc);
  CHECK(a.test_auc > 0.6);
  CHECK(a.test_probs.size() == 2 * g.split->test.size());
  CHECK(a.best_epoch >= 1);
  CHECK(a.epochs_run <= 6);
}

TEST_CASE("probe rejects unusable weight decay") {
  const SyntheticCorpus g = small_partitioned();
  const HashingEncoder enc(16);
  const EncodingCache cache(enc, g.corpus);
  DiagnosticConfig c = fast_probe();
  c.demographic_weight_decay = -1.0;
  CHECK(code_of([&] { train_probe(g.corpus, *g.split, cache, true, 1, c); }) == ErrorCode::BadConfig);
  c.demographic_weight_decay = 1000.0;
  CHECK(code_of([&] { train_probe(g.corpus, *g.split, cache, true, 1, c); }) == ErrorCode::BadConfig);
}

TEST_CASE("gain measurement records per-split failures and round-trips through CSV") {
  const SyntheticCorpus g = small_partitioned();
  const HashingEncoder enc(16);
  const EncodingCache cache(enc, g.corpus);
  Split broken = *g.split;
  broken.test.clear();
  GainOptions opts;
  opts.seeds = {1};
  opts.probe = fast_probe();
  const auto gains = measure_gain(g.corpus, {*g.split, broken}, cache, opts);
  REQUIRE(gains.size() == 2);
  CHECK(gains[0].error.empty());
  CHECK(gains[0].delta_auc == doctest::Approx(gains[0].auc_text_demo - gains[0].auc_text));
  REQUIRE(gains[0].auc_shuffled.has_value());
  CHECK(!gains[1].error.empty());

  const auto back = gains_from_csv(gains_to_csv(gains));
  REQUIRE(back.size() == 2);
  CHECK(back[0].auc_text == doctest::Approx(gains[0].auc_text).epsilon(1e-12));
  CHECK(back[0].descriptor.train_records == gains[0].descriptor.train_records);
  CHECK(!back[1].error.empty());
}

}  // TEST_SUITE
