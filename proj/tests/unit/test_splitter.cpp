#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "perspectra/error.hpp"
#include "perspectra/splitter.hpp"
#include "perspectra/synth.hpp"

using namespace perspectra;

namespace {

Corpus wide_corpus() {
  SyntheticSpec spec;
  spec.n_comments = 200;
  spec.n_annotators = 300;
  spec.seed = 5;
  return generate_corpus(spec).corpus;
}

}  // namespace

TEST_SUITE("splitter") {

TEST_CASE("same seed gives the same split") {
  Corpus c = wide_corpus();
  Split a = sample_split(c, {}, SplitPolicy::UnseenCommentsAndAnnotators, 3);
  Split b = sample_split(c, {}, SplitPolicy::UnseenCommentsAndAnnotators, 3);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);
  CHECK(a.dropped == b.dropped);
  Split other = sample_split(c, {}, SplitPolicy::UnseenCommentsAndAnnotators, 4);
  CHECK(other.train != a.train);
}

TEST_CASE("strict split is disjoint in comments and annotators") {
  Corpus c = wide_corpus();
  Split s = sample_split(c, {}, SplitPolicy::UnseenCommentsAndAnnotators, 11);
  CHECK_NOTHROW(check_split(c, s));
  std::set<std::size_t> train_annotators;
  for (std::size_t a : s.train) train_annotators.insert(c.annotations()[a].annotator);
  for (std::size_t a : s.test) CHECK_FALSE(train_annotators.count(c.annotations()[a].annotator));
  CHECK(s.train.size() + s.val.size() + s.test.size() + s.dropped.size() == c.annotations().size());
}

TEST_CASE("comments-only policy on ten comments") {
  std::vector<std::vector<int>> labels(10, {0, 1});
  Corpus c = testing_helpers::labelled_corpus(labels);
  Split s = sample_split(c, {0.8, 0.1, 0.1}, SplitPolicy::UnseenCommentsOnly, 1);
  CHECK(partition_comment_ids(c, s.train).size() == 8);
  CHECK(partition_comment_ids(c, s.val).size() == 1);
  CHECK(partition_comment_ids(c, s.test).size() == 1);
  CHECK(s.dropped.empty());
}

TEST_CASE("one annotator on every comment makes the strict policy infeasible") {
  std::vector<std::vector<int>> labels(10, {1});
  Corpus c = testing_helpers::labelled_corpus(labels);
  try {
    sample_split(c, {}, SplitPolicy::UnseenCommentsAndAnnotators, 1);
    FAIL("expected InfeasibleSplit");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InfeasibleSplit);
  }
}

TEST_CASE("bad fractions") {
  Corpus c = wide_corpus();
  try {
    sample_split(c, {0.5, 0.5, 0.5}, SplitPolicy::UnseenCommentsOnly, 1);
    FAIL("expected BadFractions");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadFractions);
  }
}

TEST_CASE("demographic overlap counts shared test combinations") {
  Corpus c({"gender", "age"}, 2);
  c.add_annotator("t1", std::vector<std::string>{"F", "young"});
  c.add_annotator("t2", std::vector<std::string>{"M", "old"});
  c.add_annotator("s1", std::vector<std::string>{"M", "old"});
  c.add_annotator("s2", std::vector<std::string>{"M", "young"});
  for (int i = 0; i < 4; ++i) c.add_comment("c" + std::to_string(i), "t");
  c.add_annotation(std::size_t{0}, 0, 0);
  c.add_annotation(std::size_t{1}, 1, 0);
  c.add_annotation(std::size_t{2}, 2, 1);
  c.add_annotation(std::size_t{3}, 3, 1);
  Split s;
  s.train = {0, 1};
  s.test = {2, 3};
  SplitDescriptor d = describe_split(c, s);
  CHECK(d.test_demo_overlap == 1);
  CHECK(d.test_demo_combinations == 2);
  CHECK(d.test_disagreement_mean == 0.0);
  CHECK(d.test_hd_frac == 0.0);
  CHECK(d.train_records == 2);
  CHECK(d.train_unique_comments == 2);
}

TEST_CASE("manifest round trip") {
  Corpus c = wide_corpus();
  Split s = sample_split(c, {}, SplitPolicy::UnseenCommentsAndAnnotators, 2);
  Split back = split_from_json(c, split_to_json(c, s));
  CHECK(back.seed == s.seed);
  CHECK(back.train == s.train);
  CHECK(back.val == s.val);
  CHECK(back.test == s.test);
  CHECK(back.dropped.size() == s.dropped.size());
}

}
