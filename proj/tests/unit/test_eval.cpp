#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "perspectra/error.hpp"
#include "perspectra/eval.hpp"

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

double pair_count_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      den += 1.0;
      num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return num / den;
}

EvalItem item(const std::string& comment, double disagreement, int label, double p_text1, double p_gated1,
              double alpha) {
  return {comment, disagreement, label, {1 - p_text1, p_text1}, {1 - p_gated1, p_gated1}, alpha};
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("midrank AUC agrees with pair counting") {
  CHECK(roc_auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}) == 0.75);
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<int> coarse(0, 4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(30);
    std::vector<int> y(30);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = coarse(gen) * 0.25;
      y[i] = static_cast<int>(i % 3 == 0);
    }
    CHECK(roc_auc(s, y) == doctest::Approx(pair_count_auc(s, y)).epsilon(1e-12));
  }
}

TEST_CASE("AUC errors") {
  CHECK(code_of([] { roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}); }) == ErrorCode::SingleClass);
  CHECK(code_of([] { macro_auc(std::vector<double>{1, 0, 1, 0, 1, 0}, std::vector<int>{0, 0, 0}, 2); }) ==
        ErrorCode::SingleClass);
  CHECK(code_of([] { macro_auc(std::vector<double>{1, 0, 1}, std::vector<int>{0, 1}, 2); }) == ErrorCode::EmptyInput);
}

TEST_CASE("macro AUC averages one-vs-rest over present classes") {
  // Three classes, perfectly ranked for each.
  const std::vector<double> p{0.8, 0.1, 0.1, 0.1, 0.8, 0.1, 0.1, 0.1, 0.8, 0.7, 0.2, 0.1};
  const std::vector<int> y{0, 1, 2, 0};
  CHECK(macro_auc(p, y, 3) == doctest::Approx(1.0));
}

TEST_CASE("macro metrics") {
  const std::vector<int> pred{1, 1, 0, 0};
  const std::vector<int> y{1, 0, 0, 0};
  const MacroMetrics m = macro_metrics(pred, y, 2);
  CHECK(m.accuracy == doctest::Approx(0.75));
  // class 0: p=1 r=2/3 ; class 1: p=1/2 r=1
  CHECK(m.precision == doctest::Approx(0.75));
  CHECK(m.recall == doctest::Approx((2.0 / 3.0 + 1.0) / 2.0));
  CHECK(m.f1 == doctest::Approx((0.8 + 2.0 / 3.0) / 2.0));
  CHECK(code_of([] { macro_metrics(std::vector<int>{}, std::vector<int>{}, 2); }) == ErrorCode::EmptyInput);
  CHECK(code_of([] { macro_metrics(std::vector<int>{2}, std::vector<int>{0}, 2); }) == ErrorCode::LabelOutOfRange);
}

TEST_CASE("disagreement buckets partition items and keep comments together") {
  std::vector<EvalItem> items;
  for (int c = 0; c < 40; ++c) {
    const double d = c < 10 ? 0.0 : 0.01 * c;
    for (int a = 0; a < 3; ++a) items.push_back(item("c" + std::to_string(c), d, a % 2, 0.6, 0.6, 0.5));
  }
  std::vector<std::string> warnings;
  const auto buckets = make_buckets(items, BucketMode::Disagreement, 10, &warnings);
  CHECK(warnings.empty());
  REQUIRE(buckets.size() == 4);
  CHECK(buckets[0].name == "zero");
  CHECK(buckets[0].items.size() == 30);
  std::vector<int> seen(items.size(), 0);
  for (const Bucket& b : buckets) {
    std::set<std::string> comments;
    for (std::size_t i : b.items) {
      ++seen[i];
      comments.insert(items[i].comment_id);
    }
    for (const std::string& c : comments) {
      for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].comment_id == c) CHECK(std::count(b.items.begin(), b.items.end(), i) == 1);
      }
    }
  }
  for (int s : seen) CHECK(s == 1);
  CHECK(buckets[1].upper <= buckets[2].lower);
  CHECK(buckets[2].upper <= buckets[3].lower);
}

TEST_CASE("small buckets merge with a warning") {
  std::vector<EvalItem> items;
  for (int c = 0; c < 12; ++c) items.push_back(item("c" + std::to_string(c), 0.1 + 0.01 * c, 0, 0.4, 0.4, 0.1));
  items.push_back(item("z", 0.0, 1, 0.4, 0.6, 0.1));
  std::vector<std::string> warnings;
  const auto buckets = make_buckets(items, BucketMode::Disagreement, 10, &warnings);
  REQUIRE(!warnings.empty());
  CHECK(warnings.front().rfind("InsufficientBucketPopulation", 0) == 0);
  std::size_t total = 0;
  for (const Bucket& b : buckets) {
    CHECK(b.items.size() >= 10);
    total += b.items.size();
  }
  CHECK(total == items.size());
}

TEST_CASE("confidence buckets order by margin") {
  std::vector<EvalItem> items;
  for (int i = 0; i < 30; ++i) items.push_back(item("c" + std::to_string(i), 0.2, 1, 0.5 + 0.015 * i, 0.9, 0.3));
  const auto buckets = make_buckets(items, BucketMode::Confidence, 10);
  REQUIRE(buckets.size() == 3);
  CHECK(buckets[0].name == "low");
  CHECK(buckets[0].upper <= buckets[1].lower);
  CHECK(buckets[1].upper <= buckets[2].lower);
  for (const Bucket& b : buckets) CHECK(b.items.size() == 10);
}

TEST_CASE("bucket gains and gate selectivity") {
  std::vector<EvalItem> items;
  // The gated model fixes every high-disagreement item; alpha tracks disagreement.
  for (int c = 0; c < 30; ++c) {
    const double d = 0.1 + 0.02 * c;
    items.push_back(item("c" + std::to_string(c), d, 1, 0.4, c >= 20 ? 0.7 : 0.4, d));
  }
  const auto gains = bucket_gains(items, BucketMode::Disagreement, 2, 10);
  REQUIRE(gains.size() == 3);
  CHECK(gains[0].delta_accuracy == doctest::Approx(0.0));
  CHECK(gains[2].delta_accuracy == doctest::Approx(1.0));
  CHECK(gains[2].accuracy_text == doctest::Approx(0.0));
  const auto alpha = gate_selectivity(items, BucketMode::Disagreement, 10);
  REQUIRE(alpha.size() == 3);
  CHECK(alpha[0].mean_alpha < alpha[1].mean_alpha);
  CHECK(alpha[1].mean_alpha < alpha[2].mean_alpha);
  CHECK(alpha[2].mean_alpha == doctest::Approx(gains[2].mean_alpha));
}

TEST_CASE("within-comment pairwise accuracy") {
  const std::vector<PairwiseItem> items{
      {"a", 1, 0.9}, {"a", 0, 0.1}, {"a", 0, 0.9},  // one win, one tie
      {"b", 1, 0.2}, {"b", 0, 0.3},                 // one loss
      {"c", 1, 0.5}, {"c", 1, 0.4},                 // no opposite pair
  };
  const PairwiseResult r = within_comment_pairwise_accuracy(items);
  CHECK(r.pairs == 3);
  CHECK(r.comments == 2);
  CHECK(r.accuracy == doctest::Approx(1.5 / 3.0));
  CHECK(code_of([] { within_comment_pairwise_accuracy(std::vector<PairwiseItem>{{"a", 1, 0.1}, {"a", 1, 0.2}}); }) ==
        ErrorCode::NoDisagreedComments);
  CHECK(code_of([] { within_comment_pairwise_accuracy(std::vector<PairwiseItem>{{"a", 2, 0.1}}); }) ==
        ErrorCode::WrongLabelSpace);
}

}  // TEST_SUITE
