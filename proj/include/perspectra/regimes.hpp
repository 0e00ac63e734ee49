#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "perspectra/diagnostic.hpp"

namespace perspectra {

struct Correlation {
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

// Sample Pearson correlation, two-sided p from t = r sqrt((n-2)/(1-r^2)).
Correlation pearson(std::span<const double> x, std::span<const double> y);

// Average ranks (1-based) with ties sharing their mean rank.
std::vector<double> midranks(std::span<const double> x);

struct SpearmanOptions {
  // For n below `permutation_below`, replace the t approximation with a
  // permutation p-value: exact enumeration up to 8 points, otherwise
  // `permutations` random relabelings.
  bool permutation_test = false;
  std::size_t permutation_below = 30;
  std::size_t permutations = 20000;
  std::uint64_t seed = 0;
};

Correlation spearman(std::span<const double> x, std::span<const double> y, const SpearmanOptions& options = {});

// Column-wise (x - mean) / sample sd.
Eigen::MatrixXd z_standardize(const Eigen::MatrixXd& columns);

struct RegressionResult {
  std::vector<std::string> names;
  double intercept = 0.0;
  std::vector<double> coefficients;
  std::vector<double> std_errors;
  std::vector<double> t_values;
  std::vector<double> p_values;
  std::vector<double> vif;
  double r_squared = 0.0;
  std::size_t n = 0;
  double condition_number = 0.0;
};

// OLS with an intercept. Coefficients and p-values: t-test with n - p - 1
// degrees of freedom. Condition number of the design above 1e10 is
// RankDeficient.
RegressionResult ols_regression(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                std::vector<std::string> names = {});

struct MeasureCorrelation {
  std::string key;
  std::string label;
  std::string group;
  std::optional<Correlation> pearson;
  std::optional<Correlation> spearman;
  std::string note;  // why the row is empty, when it is
};

struct RegimeReport {
  std::size_t splits = 0;
  std::size_t failed_splits = 0;
  double mean_delta_auc = 0.0;
  std::optional<double> mean_delta_shuffled;
  std::vector<MeasureCorrelation> correlations;
  std::optional<RegressionResult> regression;
  std::string regression_note;
  double alpha = 0.05;
};

RegimeReport regime_report(const std::vector<GainRecord>& gains, double significance = 0.05);

std::string regime_report_csv(const RegimeReport& report);
std::string regime_report_markdown(const RegimeReport& report);
// Inverse of regime_report_csv.
RegimeReport regime_report_from_csv(const std::string& content);

// Measure values for one descriptor key across gain records.
std::optional<double> descriptor_value(const GainRecord& g, const std::string& key);

}  // namespace perspectra
