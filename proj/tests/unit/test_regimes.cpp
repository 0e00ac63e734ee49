#include <doctest.h>

#include <cmath>
#include <random>

#include "perspectra/error.hpp"
#include "perspectra/regimes.hpp"

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

// Gains driven by test disagreement and against train disagreement.
std::vector<GainRecord> synthetic_gains(std::size_t n) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<GainRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    GainRecord g;
    g.split_seed = i;
    SplitDescriptor& d = g.descriptor;
    d.train_disagreement_mean = u(gen);
    d.test_disagreement_mean = u(gen);
    d.train_hd_frac = d.train_disagreement_mean * 0.5;
    d.test_hd_frac = d.test_disagreement_mean * 0.5 + 0.1 * u(gen);
    d.train_records = 1000 + static_cast<std::size_t>(500 * u(gen));
    d.train_unique_comments = d.train_records / 3;
    d.test_demo_overlap = static_cast<std::size_t>(20 * u(gen));
    d.test_demo_combinations = 30;
    g.auc_text = 0.7;
    g.delta_auc = 0.05 * d.test_disagreement_mean - 0.03 * d.train_disagreement_mean + noise(gen);
    g.auc_text_demo = g.auc_text + g.delta_auc;
    g.auc_shuffled = g.auc_text + noise(gen);
    out.push_back(g);
  }
  return out;
}

}  // namespace

TEST_SUITE("regimes") {

TEST_CASE("pearson and spearman on known data") {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 4, 6, 8, 10}, z{5, 4, 3, 2, 1};
  CHECK(pearson(x, y).r == doctest::Approx(1.0));
  CHECK(spearman(x, z).r == doctest::Approx(-1.0));
  CHECK(midranks(std::vector<double>{3, 1, 3, 2}) == std::vector<double>{3.5, 1, 3.5, 2});
  const Correlation c = pearson(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4});
  CHECK(c.r == doctest::Approx(0.8));
  CHECK(c.n == 4);
  CHECK(code_of([] { pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}); }) ==
        ErrorCode::DegenerateVariance);
  CHECK(code_of([] { pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2}); }) == ErrorCode::InsufficientData);
}

TEST_CASE("exact permutation p-value for tiny samples") {
  SpearmanOptions opts;
  opts.permutation_test = true;
  // Perfect monotone order of 5 points: one of 120 permutations each way.
  const Correlation c = spearman(std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>{1, 2, 3, 4, 5}, opts);
  CHECK(c.p_value == doctest::Approx(2.0 / 120.0));
}

TEST_CASE("OLS recovers coefficients and flags collinearity") {
  Eigen::MatrixXd X(6, 2);
  X << 1, 0, 2, 1, 3, 0, 4, 1, 5, 0, 6, 1;
  Eigen::VectorXd y = 1.0 + 2.0 * X.col(0).array() - 3.0 * X.col(1).array();
  const RegressionResult r = ols_regression(X, y, {"a", "b"});
  CHECK(r.intercept == doctest::Approx(1.0));
  CHECK(r.coefficients[0] == doctest::Approx(2.0));
  CHECK(r.coefficients[1] == doctest::Approx(-3.0));
  CHECK(r.r_squared == doctest::Approx(1.0));
  Eigen::MatrixXd collinear(6, 2);
  collinear.col(0) = X.col(0);
  collinear.col(1) = 2.0 * X.col(0);
  CHECK(code_of([&] { ols_regression(collinear, y); }) == ErrorCode::RankDeficient);
  CHECK(code_of([&] { z_standardize(Eigen::MatrixXd::Ones(4, 1)); }) == ErrorCode::DegenerateVariance);
}

TEST_CASE("regime report finds the planted directions") {
  const RegimeReport report = regime_report(synthetic_gains(60));
  CHECK(report.splits == 60);
  REQUIRE(report.mean_delta_shuffled.has_value());
  auto row = [&](const std::string& key) -> const MeasureCorrelation& {
    for (const auto& m : report.correlations) {
      if (m.key == key) return m;
    }
    FAIL("missing row " << key);
    return report.correlations.front();
  };
  CHECK(row("test_disagreement_mean").pearson->r > 0.5);
  CHECK(row("train_disagreement_mean").pearson->r < -0.3);
  CHECK(row("test_uncertain_label_frac").note == "not available");
  REQUIRE(report.regression.has_value());
  CHECK(report.regression->coefficients[1] > 0.5);
  CHECK(report.regression->coefficients[0] < 0.0);
  CHECK(regime_report_markdown(report).find("Mean test disagreement") != std::string::npos);
}

TEST_CASE("regime report CSV round trip") {
  const RegimeReport report = regime_report(synthetic_gains(40));
  const RegimeReport back = regime_report_from_csv(regime_report_csv(report));
  CHECK(back.splits == report.splits);
  CHECK(back.mean_delta_auc == doctest::Approx(report.mean_delta_auc).epsilon(1e-12));
  REQUIRE(back.correlations.size() == report.correlations.size());
  for (std::size_t i = 0; i < back.correlations.size(); ++i) {
    CHECK(back.correlations[i].key == report.correlations[i].key);
    CHECK(back.correlations[i].pearson.has_value() == report.correlations[i].pearson.has_value());
    if (back.correlations[i].pearson) {
      CHECK(back.correlations[i].pearson->r == doctest::Approx(report.correlations[i].pearson->r).epsilon(1e-12));
    }
  }
  REQUIRE(back.regression.has_value());
  CHECK(back.regression->coefficients == report.regression->coefficients);
  CHECK(code_of([] { regime_report_from_csv("nonsense\n"); }) == ErrorCode::MalformedRecord);
}

TEST_CASE("too few splits") {
  auto gains = synthetic_gains(4);
  gains[0].error = "InfeasibleSplit: x";
  gains[1].error = "InfeasibleSplit: y";
  CHECK(code_of([&] { regime_report(gains); }) == ErrorCode::InsufficientData);
  CHECK(code_of([&] { descriptor_value(gains[2], "bogus"); }) == ErrorCode::BadFlag);
}

}  // TEST_SUITE
