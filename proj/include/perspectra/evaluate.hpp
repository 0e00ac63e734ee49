#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "perspectra/eval.hpp"
#include "perspectra/residual.hpp"

namespace perspectra {

// Test-partition evaluation of a trained text classifier and residual
// adapter. Item disagreement is computed from the test annotations of each
// comment.
struct ModelEvaluation {
  std::vector<EvalItem> items;
  double auc_text = 0.0;
  double auc_gated = 0.0;
  MacroMetrics metrics_text;
  MacroMetrics metrics_gated;
  std::vector<BucketGain> disagreement_buckets;
  std::vector<BucketGain> confidence_buckets;
  std::vector<AlphaBucket> selectivity;
  // Binary label spaces only.
  std::optional<PairwiseResult> pairwise_text;
  std::optional<PairwiseResult> pairwise_gated;
  // Gated model scored with test demographics permuted across annotators;
  // accuracy averaged over the shuffle repeats.
  std::optional<PairwiseResult> pairwise_shuffled;
  std::vector<std::string> warnings;
};

ModelEvaluation evaluate_model(const TextClassifierState& state, const ResidualAdapter& adapter,
                               const GateConfig& config, const Corpus& corpus, const Split& split,
                               const EncodingCache& encodings, std::uint64_t shuffle_seed = 1,
                               std::size_t shuffle_repeats = 20);

std::string evaluation_to_json(const ModelEvaluation& evaluation, int indent = 2);

}  // namespace perspectra
