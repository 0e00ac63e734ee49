#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "perspectra/disagreement.hpp"
#include "perspectra/error.hpp"

using namespace perspectra;

TEST_SUITE("disagreement") {

TEST_CASE("normalized entropy of label counts") {
  CHECK(normalized_disagreement(std::vector<long>{3, 0}) == 0.0);
  CHECK(normalized_disagreement(std::vector<long>{1, 1, 1}) == doctest::Approx(1.0).epsilon(1e-15));
  const double e3 = -(2.0 / 3 * std::log(2.0 / 3) + 1.0 / 3 * std::log(1.0 / 3));
  CHECK(normalized_disagreement(std::vector<long>{2, 1, 0}) == doctest::Approx(e3 / std::log(3.0)));
  CHECK(normalized_disagreement(std::vector<long>{2, 1, 0}) == doctest::Approx(0.5794).epsilon(1e-4));
  CHECK(normalized_disagreement(std::vector<long>{2, 1}) == doctest::Approx(0.9183).epsilon(1e-4));
}

TEST_CASE("degenerate inputs") {
  CHECK_THROWS_AS(normalized_disagreement(std::vector<long>{0, 0}), Error);
  CHECK_THROWS_AS(normalized_disagreement(std::vector<long>{4}), Error);
  try {
    normalized_disagreement(std::vector<long>{0, 0, 0});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyAnnotationSet);
  }
}

TEST_CASE("high disagreement is strict") {
  CHECK_FALSE(is_high_disagreement(0.60));
  CHECK(is_high_disagreement(0.61));
  CHECK(is_high_disagreement(1.0));
}

TEST_CASE("per-comment scores and split summary") {
  Corpus c = testing_helpers::labelled_corpus({{0, 0}, {0, 1}});
  auto scores = comment_disagreements(c);
  REQUIRE(scores.size() == 2);
  CHECK(scores[0].comment_id == "c0");
  CHECK(scores[0].value == 0.0);
  CHECK(scores[1].value == doctest::Approx(1.0));
  AmbiguitySummary s = split_ambiguity_summary(c, {"c0", "c1"});
  CHECK(s.mean_disagreement == doctest::Approx(0.5));
  CHECK(s.high_disagreement_fraction == doctest::Approx(0.5));
  CHECK_FALSE(s.uncertain_label_fraction.has_value());
}

TEST_CASE("uncertain-label fraction on a 3-class view") {
  Corpus c = testing_helpers::labelled_corpus({{1, 1, 1}}, 3);
  AmbiguitySummary s = split_ambiguity_summary(c, {"c0"});
  REQUIRE(s.uncertain_label_fraction.has_value());
  CHECK(*s.uncertain_label_fraction == 1.0);
}

}
