#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "perspectra/corpus.hpp"
#include "perspectra/diagnostic.hpp"
#include "perspectra/splitter.hpp"

namespace perspectra {

struct AttributeSpec {
  std::string name;
  std::size_t categories = 2;
};

// Comment difficulty: a fraction of comments is ambiguous with difficulty
// drawn from [high_min, high_max], the rest from [low_min, low_max].
struct AmbiguityProfile {
  double ambiguous_fraction = 0.5;
  double low_min = 0.0;
  double low_max = 0.2;
  double high_min = 0.6;
  double high_max = 1.0;
};

// Binary labels from a logistic model per annotation:
//   logit = beta_text * s * (1 - d)
//         + beta_demo * sum_j w_j o_j(category_j) * (conditional ? d : 1)
//         + d * (b_annotator + noise * eps)
// where s is the comment's text score, d its difficulty, o_j planted offsets
// in [-1, 1] for attribute j's categories, w_j the
// attribute's effect weight, b an annotator-specific bias with sd
// `annotator_bias`, eps standard normal. The comment text is a bag of
// polarity tokens whose balance tracks s * (1 - d).
struct SyntheticSpec {
  std::size_t n_comments = 600;
  std::size_t annotators_per_comment = 3;
  std::size_t n_annotators = 60;
  std::vector<AttributeSpec> schema{{"group", 2}, {"age", 4}, {"cohort", 8}};
  std::vector<double> effect_weights{1.0, 0.0, 0.5};
  double beta_text = 4.0;
  double beta_demo = 2.5;
  double annotator_bias = 3.0;
  double noise = 1.0;
  AmbiguityProfile ambiguity;
  bool conditional = true;
  // |s| = score_min + score_spread * |N(0,1)|, random sign.
  double score_min = 0.75;
  double score_spread = 0.5;
  std::size_t tokens_per_comment = 12;
  std::size_t vocabulary = 24;
  std::uint64_t seed = 1;

  void validate() const;
  std::vector<std::string> attribute_names() const;
};

struct GroundTruth {
  std::vector<double> text_score;        // per comment
  std::vector<double> difficulty;        // per comment
  std::vector<char> ambiguous;           // per comment
  std::vector<std::vector<double>> offsets;  // per attribute, per category
  std::vector<double> annotator_offset;      // sum_j w_j o_j for each annotator
  std::vector<double> annotator_bias;        // per annotator
  std::vector<char> careless;                // per annotator
  std::vector<std::vector<int>> annotator_categories;
  std::vector<double> annotation_logit;  // per annotation
};

struct SyntheticCorpus {
  Corpus corpus;
  GroundTruth truth;
  std::optional<Split> split;  // set by generate_partitioned
};

SyntheticCorpus generate_corpus(const SyntheticSpec& spec);

// Train / validation / test drawn with their own ambiguity level and
// disjoint annotator pools, so the split is strict by construction.
struct PartitionSpec {
  std::size_t n_comments = 600;
  std::size_t n_annotators = 60;
  double ambiguous_fraction = 0.5;
  // Share of the pool labelling every comment by a fair coin flip.
  double careless_fraction = 0.0;
};

struct PartitionedSpec {
  SyntheticSpec base;
  PartitionSpec train{800, 60, 0.2};
  PartitionSpec val{150, 30, 0.9};
  PartitionSpec test{150, 30, 0.9};
  // Test annotators take a training-seen category of `holdout_attribute` with
  // probability `overlap`, otherwise one of its last `holdout_categories`
  // categories, which no train or validation annotator has.
  std::size_t holdout_attribute = 2;
  std::size_t holdout_categories = 2;
  double overlap = 1.0;

  void validate() const;
};

SyntheticCorpus generate_partitioned(const PartitionedSpec& spec);

// Training disagreement is varied through the careless share of the training
// pool, so that it dilutes the demographic association instead of carrying
// more of it. Train and validation ambiguity come from the base spec; test
// and validation ambiguity follow the test axis.
struct SweepGrid {
  std::vector<double> train_careless{0.0, 0.25, 0.5, 0.75};
  std::vector<double> test_ambiguity{0.05, 0.3, 0.6, 0.9};
  std::vector<std::size_t> train_sizes{250, 1000};
  std::vector<double> overlaps{0.0, 1.0};
  std::size_t replicates = 5;
};

struct SweepOptions {
  GainOptions gain;
  std::size_t encoder_dim = 64;
  std::size_t jobs = 1;
};

struct SweepRow {
  std::size_t train_index = 0;
  std::size_t test_index = 0;
  double train_careless = 0.0;
  double test_ambiguity = 0.0;
  std::size_t train_size = 0;
  double overlap = 1.0;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  GainRecord gain;
};

// Base corpus for regime sweeps: large disjoint pools, no per-annotator bias,
// half the training comments ambiguous, and a cohort effect as strong as the
// group effect so that unseen cohorts cost accuracy.
PartitionedSpec sweep_base_spec();

// Corpus for residual-model checks: twelve annotators per comment so that
// measured disagreement tracks latent difficulty, ambiguous difficulty spread
// over [0.3, 1], no per-annotator bias, and a large mostly ambiguous test
// partition.
PartitionedSpec residual_scenario_spec();

std::vector<SweepRow> regime_sweep(const PartitionedSpec& base, const SweepGrid& grid, const SweepOptions& options);

struct CellSummary {
  std::size_t train_index = 0;
  std::size_t test_index = 0;
  double train_careless = 0.0;
  double test_ambiguity = 0.0;
  std::size_t n = 0;
  double mean_delta = 0.0;
  double se_delta = 0.0;
  double mean_shuffled = 0.0;
  double se_shuffled = 0.0;
  double mean_train_disagreement = 0.0;
  double mean_test_disagreement = 0.0;
};

// Aggregates rows over (train ambiguity, test ambiguity) cells.
std::vector<CellSummary> summarize_sweep(const std::vector<SweepRow>& rows);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

}  // namespace perspectra
