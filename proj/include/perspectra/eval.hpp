#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace perspectra {

// Midrank AUC: ties between a positive and a negative count one half.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Macro one-vs-rest AUC over the classes present in `labels`. `probs` is
// row-major, n x K. Classes that do not occur (or are the only class) are
// skipped; fewer than two usable classes is SingleClass.
double macro_auc(std::span<const double> probs, std::span<const int> labels, int K);

struct MacroMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

MacroMetrics macro_metrics(std::span<const int> predictions, std::span<const int> labels, int K);

// One scored test item (an annotation) for the bucket analyses.
struct EvalItem {
  std::string comment_id;
  double disagreement = 0.0;  // of the item's comment
  int label = 0;
  std::vector<double> p_text;
  std::vector<double> p_gated;
  double alpha = 0.0;
};

enum class BucketMode { Disagreement, Confidence };

struct Bucket {
  std::string name;
  std::vector<std::size_t> items;
  double lower = 0.0;  // range of the bucket statistic
  double upper = 0.0;
};

// Disagreement mode: comments with zero disagreement form their own bucket
// and the rest split into equal-frequency low / medium / high by comment.
// Confidence mode: items split into low / medium / high by decision margin
// |p_text(1) - 0.5| (low margin first). Buckets under `min_population`
// items merge into a neighbour and a warning is appended.
std::vector<Bucket> make_buckets(std::span<const EvalItem> items, BucketMode mode, std::size_t min_population = 10,
                                 std::vector<std::string>* warnings = nullptr);

struct BucketGain {
  std::string name;
  std::size_t items = 0;
  double lower = 0.0;
  double upper = 0.0;
  double accuracy_text = 0.0;
  double accuracy_gated = 0.0;
  double f1_text = 0.0;
  double f1_gated = 0.0;
  double delta_accuracy = 0.0;
  double delta_f1 = 0.0;
  double mean_alpha = 0.0;
};

std::vector<BucketGain> bucket_gains(std::span<const EvalItem> items, BucketMode mode, int K,
                                     std::size_t min_population = 10, std::vector<std::string>* warnings = nullptr);

struct AlphaBucket {
  std::string name;
  std::size_t items = 0;
  double mean_alpha = 0.0;
};

std::vector<AlphaBucket> gate_selectivity(std::span<const EvalItem> items, BucketMode mode,
                                          std::size_t min_population = 10,
                                          std::vector<std::string>* warnings = nullptr);

// For each comment, every unordered pair of annotations with opposite binary
// labels; correct when the positive annotator gets the higher positive-class
// score, ties count one half. Items are grouped by `comment_id`.
struct PairwiseItem {
  std::string comment_id;
  int label = 0;
  double score = 0.0;
};

struct PairwiseResult {
  double accuracy = 0.0;
  std::size_t pairs = 0;
  std::size_t comments = 0;
};

PairwiseResult within_comment_pairwise_accuracy(std::span<const PairwiseItem> items);

}  // namespace perspectra
