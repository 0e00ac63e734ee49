#include "perspectra/regimes.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "perspectra/error.hpp"
#include "perspectra/rng.hpp"

namespace perspectra {

namespace {

double two_sided_t(double t, double df) {
  if (!std::isfinite(t)) return 0.0;
  boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

void require_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::InsufficientData, "correlation inputs differ in length");
  if (x.size() < 3) throw Error(ErrorCode::InsufficientData, "correlation needs at least 3 points");
}

double correlation_p(double r, std::size_t n) {
  if (std::abs(r) >= 1.0) return 0.0;
  const double df = static_cast<double>(n) - 2.0;
  return two_sided_t(r * std::sqrt(df / (1.0 - r * r)), df);
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::DegenerateVariance, "correlation input has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  require_pair(x, y);
  Correlation c;
  c.n = x.size();
  c.r = pearson_r(x, y);
  c.p_value = correlation_p(c.r, c.n);
  return c;
}

std::vector<double> midranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && x[order[j]] == x[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

Correlation spearman(std::span<const double> x, std::span<const double> y, const SpearmanOptions& options) {
  require_pair(x, y);
  const std::vector<double> rx = midranks(x);
  const std::vector<double> ry = midranks(y);
  Correlation c;
  c.n = x.size();
  c.r = pearson_r(rx, ry);
  c.p_value = correlation_p(c.r, c.n);
  if (options.permutation_test && c.n < options.permutation_below) {
    const double observed = std::abs(c.r) - 1e-12;
    std::vector<double> perm = ry;
    std::size_t extreme = 0;
    std::size_t total = 0;
    if (c.n <= 8) {
      std::sort(perm.begin(), perm.end());
      do {
        ++total;
        if (std::abs(pearson_r(rx, perm)) >= observed) ++extreme;
      } while (std::next_permutation(perm.begin(), perm.end()));
      c.p_value = static_cast<double>(extreme) / static_cast<double>(total);
    } else {
      Rng rng(options.seed);
      for (std::size_t b = 0; b < options.permutations; ++b) {
        rng.shuffle(perm);
        if (std::abs(pearson_r(rx, perm)) >= observed) ++extreme;
      }
      c.p_value = static_cast<double>(extreme + 1) / static_cast<double>(options.permutations + 1);
    }
  }
  return c;
}

Eigen::MatrixXd z_standardize(const Eigen::MatrixXd& columns) {
  const Eigen::Index n = columns.rows();
  if (n < 2) throw Error(ErrorCode::InsufficientData, "standardization needs at least 2 rows");
  Eigen::MatrixXd out(n, columns.cols());
  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    const double mean = columns.col(j).mean();
    const Eigen::VectorXd centered = columns.col(j).array() - mean;
    const double sd = std::sqrt(centered.squaredNorm() / static_cast<double>(n - 1));
    if (!(sd > 0.0)) throw Error(ErrorCode::DegenerateVariance, "column " + std::to_string(j) + " is constant");
    out.col(j) = centered / sd;
  }
  return out;
}

namespace {

struct Fit {
  Eigen::VectorXd beta;  // intercept first
  Eigen::VectorXd residuals;
  double r_squared = 0.0;
  double condition = 0.0;
};

Fit fit_with_intercept(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd A(n, X.cols() + 1);
  A.col(0).setOnes();
  A.rightCols(X.cols()) = X;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  Fit fit;
  fit.condition = smin > 0.0 ? sv(0) / smin : std::numeric_limits<double>::infinity();
  if (!(fit.condition <= 1e10)) {
    throw Error(ErrorCode::RankDeficient, "design matrix is rank deficient (condition number above 1e10)");
  }
  fit.beta = A.colPivHouseholderQr().solve(y);
  fit.residuals = y - A * fit.beta;
  const double sst = (y.array() - y.mean()).square().sum();
  const double sse = fit.residuals.squaredNorm();
  fit.r_squared = sst > 0.0 ? std::clamp(1.0 - sse / sst, 0.0, 1.0) : 1.0;
  return fit;
}

}  // namespace

RegressionResult ols_regression(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::vector<std::string> names) {
  const auto n = static_cast<std::size_t>(X.rows());
  const auto p = static_cast<std::size_t>(X.cols());
  if (static_cast<std::size_t>(y.size()) != n) throw Error(ErrorCode::InsufficientData, "response length mismatch");
  if (p == 0 || n <= p + 1) throw Error(ErrorCode::InsufficientData, "regression needs n > p + 1");
  if (names.empty()) {
    for (std::size_t j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  }
  const Fit fit = fit_with_intercept(X, y);

  RegressionResult result;
  result.names = std::move(names);
  result.n = n;
  result.r_squared = fit.r_squared;
  result.condition_number = fit.condition;
  result.intercept = fit.beta(0);

  const double df = static_cast<double>(n - p - 1);
  const double sigma2 = fit.residuals.squaredNorm() / df;
  Eigen::MatrixXd A(X.rows(), X.cols() + 1);
  A.col(0).setOnes();
  A.rightCols(X.cols()) = X;
  const Eigen::MatrixXd gram = A.transpose() * A;
  const Eigen::MatrixXd cov = sigma2 * gram.ldlt().solve(Eigen::MatrixXd::Identity(gram.rows(), gram.cols()));
  for (std::size_t j = 0; j < p; ++j) {
    const auto idx = static_cast<Eigen::Index>(j + 1);
    const double b = fit.beta(idx);
    const double se = std::sqrt(std::max(cov(idx, idx), 0.0));
    const double t = se > 0.0 ? b / se : std::copysign(std::numeric_limits<double>::infinity(), b);
    result.coefficients.push_back(b);
    result.std_errors.push_back(se);
    result.t_values.push_back(t);
    result.p_values.push_back(se > 0.0 ? two_sided_t(t, df) : 0.0);
  }

  for (std::size_t j = 0; j < p; ++j) {
    if (p == 1) {
      result.vif.push_back(1.0);
      continue;
    }
    Eigen::MatrixXd others(X.rows(), X.cols() - 1);
    Eigen::Index c = 0;
    for (std::size_t k = 0; k < p; ++k) {
      if (k != j) others.col(c++) = X.col(static_cast<Eigen::Index>(k));
    }
    const Fit aux = fit_with_intercept(others, X.col(static_cast<Eigen::Index>(j)));
    result.vif.push_back(1.0 / std::max(1.0 - aux.r_squared, 1e-300));
  }
  return result;
}

namespace {

struct MeasureSpec {
  const char* key;
  const char* label;
  const char* group;
};

constexpr MeasureSpec kMeasures[] = {
    {"train_hd_frac", "Train high-disagreement frac.", "1. Less ambiguity in training, more in testing"},
    {"train_disagreement_mean", "Mean train disagreement", "1. Less ambiguity in training, more in testing"},
    {"test_disagreement_mean", "Mean test disagreement", "1. Less ambiguity in training, more in testing"},
    {"test_hd_frac", "Test high-disagreement frac.", "1. Less ambiguity in training, more in testing"},
    {"test_uncertain_label_frac", "Test uncertain-label frac.", "2. More granular measurements"},
    {"train_unique_comments", "Training unique comments", "3. More training data"},
    {"train_records", "Training records", "3. More training data"},
    {"test_demo_overlap", "Test demographic overlap", "4. More demographic overlap"},
};

struct PredictorSpec {
  const char* key;
  const char* label;
};

constexpr PredictorSpec kPredictors[] = {
    {"train_disagreement_mean", "Train disagreement mean"},
    {"test_disagreement_mean", "Test disagreement mean"},
    {"train_records", "Train records"},
    {"test_demo_overlap", "Test demographic overlap count"},
};

}  // namespace

std::optional<double> descriptor_value(const GainRecord& g, const std::string& key) {
  const SplitDescriptor& d = g.descriptor;
  if (key == "train_hd_frac") return d.train_hd_frac;
  if (key == "train_disagreement_mean") return d.train_disagreement_mean;
  if (key == "test_disagreement_mean") return d.test_disagreement_mean;
  if (key == "test_hd_frac") return d.test_hd_frac;
  if (key == "test_uncertain_label_frac") return d.test_uncertain_label_frac;
  if (key == "train_unique_comments") return static_cast<double>(d.train_unique_comments);
  if (key == "train_records") return static_cast<double>(d.train_records);
  if (key == "test_demo_overlap") return static_cast<double>(d.test_demo_overlap);
  if (key == "delta_auc") return g.delta_auc;
  throw Error(ErrorCode::BadFlag, "unknown descriptor '" + key + "'");
}

RegimeReport regime_report(const std::vector<GainRecord>& gains, double significance) {
  RegimeReport report;
  report.alpha = significance;
  std::vector<const GainRecord*> ok;
  for (const GainRecord& g : gains) {
    if (g.error.empty()) ok.push_back(&g);
  }
  report.splits = ok.size();
  report.failed_splits = gains.size() - ok.size();
  if (ok.size() < 3) throw Error(ErrorCode::InsufficientData, "regime report needs at least 3 successful splits");

  std::vector<double> delta;
  double shuffled_sum = 0.0;
  std::size_t shuffled_n = 0;
  for (const GainRecord* g : ok) {
    delta.push_back(g->delta_auc);
    if (auto s = g->delta_shuffled()) {
      shuffled_sum += *s;
      ++shuffled_n;
    }
  }
  report.mean_delta_auc = std::accumulate(delta.begin(), delta.end(), 0.0) / static_cast<double>(delta.size());
  if (shuffled_n > 0) report.mean_delta_shuffled = shuffled_sum / static_cast<double>(shuffled_n);

  for (const MeasureSpec& m : kMeasures) {
    MeasureCorrelation row;
    row.key = m.key;
    row.label = m.label;
    row.group = m.group;
    std::vector<double> x, y;
    for (const GainRecord* g : ok) {
      if (auto v = descriptor_value(*g, m.key)) {
        x.push_back(*v);
        y.push_back(g->delta_auc);
      }
    }
    if (x.size() < 3) {
      row.note = "not available";
    } else {
      try {
        row.pearson = pearson(x, y);
        row.spearman = spearman(x, y);
      } catch (const Error& e) {
        row.note = e.code() == ErrorCode::DegenerateVariance ? "constant across splits" : e.what();
        row.pearson.reset();
        row.spearman.reset();
      }
    }
    report.correlations.push_back(std::move(row));
  }

  const std::size_t p = std::size(kPredictors);
  if (ok.size() <= p + 1) {
    report.regression_note = "too few splits for the regression";
    return report;
  }
  Eigen::MatrixXd table(static_cast<Eigen::Index>(ok.size()), static_cast<Eigen::Index>(p + 1));
  for (std::size_t i = 0; i < ok.size(); ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *descriptor_value(*ok[i], kPredictors[j].key);
    }
    table(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) = ok[i]->delta_auc;
  }
  try {
    const Eigen::MatrixXd z = z_standardize(table);
    std::vector<std::string> names;
    for (const PredictorSpec& s : kPredictors) names.emplace_back(s.label);
    report.regression = ols_regression(z.leftCols(static_cast<Eigen::Index>(p)), z.col(static_cast<Eigen::Index>(p)), names);
  } catch (const Error& e) {
    report.regression_note = e.what();
  }
  return report;
}

namespace {

std::string fmt(double v, int digits = 6) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

std::string fixed(double v, int digits = 3) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  std::string out = s.str();
  if (out == "-0.000") out = "0.000";
  return out;
}

std::string starred(const Correlation& c, double alpha) {
  return fixed(c.r) + (c.p_value < alpha ? "*" : "");
}

std::string p_text(double p) {
  if (p < 0.001) return "<.001";
  return fixed(p);
}

}  // namespace

namespace {

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += (c == '\n' || c == '\r') ? ' ' : c;
  }
  return out + "\"";
}

std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

constexpr const char* kRegimeCsvHeader =
    "section,key,label,group,pearson_r,pearson_p,spearman_rho,spearman_p,n,value,std_error,p_value,vif,note";

}  // namespace

std::string regime_report_csv(const RegimeReport& report) {
  std::ostringstream out;
  out << kRegimeCsvHeader << '\n';
  for (const auto& row : report.correlations) {
    out << "correlation," << row.key << ',' << csv_quote(row.label) << ',' << csv_quote(row.group) << ',';
    if (row.pearson && row.spearman) {
      out << fmt(row.pearson->r, 17) << ',' << fmt(row.pearson->p_value, 17) << ',' << fmt(row.spearman->r, 17) << ','
          << fmt(row.spearman->p_value, 17) << ',' << row.pearson->n;
    } else {
      out << ",,,,";
    }
    out << ",,,,," << csv_quote(row.note) << '\n';
  }
  if (report.regression) {
    const RegressionResult& r = *report.regression;
    for (std::size_t j = 0; j < r.coefficients.size(); ++j) {
      out << "regression," << kPredictors[j].key << ',' << csv_quote(r.names[j]) << ",,,,,," << r.n << ','
          << fmt(r.coefficients[j], 17) << ',' << fmt(r.std_errors[j], 17) << ',' << fmt(r.p_values[j], 17) << ','
          << fmt(r.vif[j], 17) << ",\n";
    }
    out << "regression,intercept,Intercept,,,,,," << r.n << ',' << fmt(r.intercept, 17) << ",,,,\n";
    out << "regression,r_squared,R squared,,,,,," << r.n << ',' << fmt(r.r_squared, 17) << ",,,,\n";
    out << "regression,condition_number,Condition number,,,,,," << r.n << ',' << fmt(r.condition_number, 17)
        << ",,,,\n";
  } else {
    out << "regression,none,,,,,,,,,,,," << csv_quote(report.regression_note) << '\n';
  }
  out << "summary,splits,Successful splits,,,,,," << report.splits << ",,,,,\n";
  out << "summary,failed_splits,Failed splits,,,,,," << report.failed_splits << ",,,,,\n";
  out << "summary,alpha,Significance level,,,,,,," << fmt(report.alpha, 17) << ",,,,\n";
  out << "summary,mean_delta_auc,Mean delta AUC,,,,,," << report.splits << ',' << fmt(report.mean_delta_auc, 17)
      << ",,,,\n";
  if (report.mean_delta_shuffled) {
    out << "summary,mean_delta_shuffled,Mean shuffled delta AUC,,,,,," << report.splits << ','
        << fmt(*report.mean_delta_shuffled, 17) << ",,,,\n";
  }
  return out.str();
}

RegimeReport regime_report_from_csv(const std::string& content) {
  std::istringstream in(content);
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRegimeCsvHeader)
    throw Error(ErrorCode::MalformedRecord, "regimes table has an unexpected header");
  RegimeReport report;
  RegressionResult reg;
  bool have_regression = false;
  std::size_t line_no = 1;
  auto num = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::MalformedRecord, "regimes line " + std::to_string(line_no) + ": unparsable number");
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = csv_fields(line);
    if (f.size() != 14) {
      throw Error(ErrorCode::MalformedRecord, "regimes line " + std::to_string(line_no) + ": wrong field count");
    }
    const std::string& section = f[0];
    const std::string& key = f[1];
    if (section == "correlation") {
      MeasureCorrelation row{key, f[2], f[3], std::nullopt, std::nullopt, f[13]};
      if (!f[4].empty()) {
        auto n = static_cast<std::size_t>(num(f[8]));
        row.pearson = Correlation{num(f[4]), num(f[5]), n};
        row.spearman = Correlation{num(f[6]), num(f[7]), n};
      }
      report.correlations.push_back(std::move(row));
    } else if (section == "regression") {
      if (key == "none") {
        report.regression_note = f[13];
      } else if (key == "intercept") {
        reg.intercept = num(f[9]);
      } else if (key == "r_squared") {
        reg.r_squared = num(f[9]);
      } else if (key == "condition_number") {
        reg.condition_number = num(f[9]);
      } else {
        have_regression = true;
        reg.n = static_cast<std::size_t>(num(f[8]));
        reg.names.push_back(f[2]);
        reg.coefficients.push_back(num(f[9]));
        reg.std_errors.push_back(num(f[10]));
        reg.t_values.push_back(reg.coefficients.back() / reg.std_errors.back());
        reg.p_values.push_back(num(f[11]));
        reg.vif.push_back(num(f[12]));
      }
    } else if (section == "summary") {
      if (key == "splits") report.splits = static_cast<std::size_t>(num(f[8]));
      else if (key == "failed_splits") report.failed_splits = static_cast<std::size_t>(num(f[8]));
      else if (key == "alpha") report.alpha = num(f[9]);
      else if (key == "mean_delta_auc") report.mean_delta_auc = num(f[9]);
      else if (key == "mean_delta_shuffled") report.mean_delta_shuffled = num(f[9]);
      else throw Error(ErrorCode::MalformedRecord, "regimes line " + std::to_string(line_no) + ": unknown key " + key);
    } else {
      throw Error(ErrorCode::MalformedRecord, "regimes line " + std::to_string(line_no) + ": unknown section " + section);
    }
  }
  if (have_regression) report.regression = std::move(reg);
  return report;
}

std::string regime_report_markdown(const RegimeReport& report) {
  std::ostringstream out;
  out << "## Correlations with demographic gain\n\n";
  out << "| Regime | Measure | r | rho | n |\n";
  out << "|---|---|---:|---:|---:|\n";
  std::string last_group;
  for (const auto& row : report.correlations) {
    out << "| " << (row.group != last_group ? row.group : "") << " | " << row.label << " | ";
    if (row.pearson && row.spearman) {
      out << starred(*row.pearson, report.alpha) << " | " << starred(*row.spearman, report.alpha) << " | "
          << row.pearson->n << " |\n";
    } else {
      out << "-- | -- | " << row.note << " |\n";
    }
    last_group = row.group;
  }
  out << "\n\\* two-sided p < " << fixed(report.alpha, 2)
      << " (Pearson: t approximation; Spearman: t approximation on ranks).\n\n";

  out << "## Multivariate regression on delta AUC\n\n";
  if (report.regression) {
    const RegressionResult& r = *report.regression;
    out << "| Predictor | Std. Coef. | p-value | VIF |\n";
    out << "|---|---:|---:|---:|\n";
    for (std::size_t j = 0; j < r.coefficients.size(); ++j) {
      out << "| " << r.names[j] << " | " << fixed(r.coefficients[j]) << " | " << p_text(r.p_values[j]) << " | "
          << fixed(r.vif[j], 2) << " |\n";
    }
    out << "\nAll variables z-standardized. R^2 = " << fixed(r.r_squared) << " over " << r.n << " splits.\n";
  } else {
    out << "Not fitted: " << report.regression_note << "\n";
  }
  out << "\nSplits: " << report.splits << " successful";
  if (report.failed_splits > 0) out << ", " << report.failed_splits << " failed";
  out << ". Mean delta AUC " << fixed(report.mean_delta_auc, 4);
  if (report.mean_delta_shuffled) out << "; shuffled control " << fixed(*report.mean_delta_shuffled, 4);
  out << ".\n";
  return out.str();
}

}  // namespace perspectra
