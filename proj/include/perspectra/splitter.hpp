#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "perspectra/corpus.hpp"

namespace perspectra {

enum class SplitPolicy {
  UnseenCommentsAndAnnotators,  // strict
  UnseenCommentsOnly,
};

std::string to_string(SplitPolicy policy);
SplitPolicy parse_split_policy(const std::string& name);  // "strict" | "comments-only"

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

enum class Partition : int { Train = 0, Val = 1, Test = 2 };

// Disjoint annotation index sets over one corpus.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
  SplitPolicy policy = SplitPolicy::UnseenCommentsAndAnnotators;
  // Annotations whose comment and annotator fell into different partitions
  // (strict policy only).
  std::vector<std::size_t> dropped;

  const std::vector<std::size_t>& partition(Partition p) const;
  std::vector<std::size_t>& partition(Partition p);
};

struct SplitDescriptor {
  double train_disagreement_mean = 0.0;
  double train_hd_frac = 0.0;
  double test_disagreement_mean = 0.0;
  double test_hd_frac = 0.0;
  // Absent without a 3-class view.
  std::optional<double> test_uncertain_label_frac;
  std::size_t train_records = 0;
  std::size_t train_unique_comments = 0;
  std::size_t test_demo_overlap = 0;
  std::size_t test_demo_combinations = 0;
};

Split sample_split(const Corpus& corpus, const SplitFractions& fractions, SplitPolicy policy, std::uint64_t seed);

// Throws InfeasibleSplit when the split violates its policy's disjointness
// or references annotations outside the corpus.
void check_split(const Corpus& corpus, const Split& split);

SplitDescriptor describe_split(const Corpus& corpus, const Split& split, const Corpus* original_view = nullptr,
                               double high_threshold = 0.6);

// Distinct comment / annotator ids of one partition, in corpus order.
std::vector<std::string> partition_comment_ids(const Corpus& corpus, const std::vector<std::size_t>& annotations);
std::vector<std::string> partition_annotator_ids(const Corpus& corpus, const std::vector<std::size_t>& annotations);

// JSON manifest: seed, policy, per-partition comment and annotator id lists,
// dropped count. Annotation membership is reconstructed from the id lists.
std::string split_to_json(const Corpus& corpus, const Split& split);
Split split_from_json(const Corpus& corpus, const std::string& json_text);
void write_split(const Corpus& corpus, const Split& split, const std::string& path);
Split read_split(const Corpus& corpus, const std::string& path);

}  // namespace perspectra
