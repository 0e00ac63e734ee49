#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "perspectra/corpus.hpp"

namespace perspectra {

inline constexpr double kHighDisagreementThreshold = 0.6;

struct DisagreementScore {
  std::string comment_id;
  double value = 0.0;
};

// Normalized annotation entropy -sum p log p / log C of a label-count
// vector; zero-count classes contribute nothing.
double normalized_disagreement(std::span<const long> label_counts);

// Strict inequality: a score equal to the threshold is not high.
inline bool is_high_disagreement(double score, double threshold = kHighDisagreementThreshold) {
  return score > threshold;
}

std::vector<DisagreementScore> comment_disagreements(const Corpus& corpus);

struct AmbiguitySummary {
  std::size_t comments = 0;
  double mean_disagreement = 0.0;
  double high_disagreement_fraction = 0.0;
  // Fraction of original 3-class annotations carrying the intermediate label;
  // absent when no 3-class view exists.
  std::optional<double> uncertain_label_fraction;
  // True when disagreement was computed from the original 3-class view.
  bool from_original_view = false;
};

// Summary over all annotations of the given comments. When `original_view`
// is supplied, disagreement and the uncertain-label fraction come from that
// corpus's annotations of the same comment ids; a 3-class corpus without a
// separate view serves as its own view for the uncertain-label fraction.
AmbiguitySummary split_ambiguity_summary(const Corpus& corpus,
                                         const std::vector<std::string>& comment_ids,
                                         const Corpus* original_view = nullptr,
                                         double threshold = kHighDisagreementThreshold);

// Same summary restricted to a subset of annotations (a split partition):
// disagreement is computed per comment from the subset only.
AmbiguitySummary summarize_annotations(const Corpus& corpus, std::span<const std::size_t> annotations,
                                       const Corpus* original_view = nullptr,
                                       double threshold = kHighDisagreementThreshold);

}  // namespace perspectra
