#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace perspectra {

// Reserved category for absent or empty demographic values.
inline constexpr std::string_view kUnknownCategory = "unknown";

struct Comment {
  std::string id;
  std::string text;
};

// Demographic values are stored in corpus schema order.
struct Annotator {
  std::string id;
  std::vector<std::string> demographics;
};

struct Annotation {
  std::size_t comment = 0;
  std::size_t annotator = 0;
  int label = 0;
};

struct SoftLabel {
  std::string comment_id;
  std::vector<double> distribution;
};

// Triple store of comments, annotators and annotations with referential
// integrity. Built once, then treated as immutable; transforms return a new
// corpus.
class Corpus {
 public:
  Corpus(std::vector<std::string> schema, int label_space_size);

  std::size_t add_comment(std::string id, std::string text);
  std::size_t add_annotator(std::string id, std::vector<std::string> demographics);
  std::size_t add_annotator(std::string id, const std::map<std::string, std::string>& demographics);
  std::size_t add_annotation(std::size_t comment, std::size_t annotator, int label);
  std::size_t add_annotation(std::string_view comment_id, std::string_view annotator_id, int label);

  const std::vector<Comment>& comments() const { return comments_; }
  const std::vector<Annotator>& annotators() const { return annotators_; }
  const std::vector<Annotation>& annotations() const { return annotations_; }
  const std::vector<std::string>& schema() const { return schema_; }
  int label_space_size() const { return label_space_size_; }

  std::optional<std::size_t> find_comment(std::string_view id) const;
  std::optional<std::size_t> find_annotator(std::string_view id) const;

  // Indices into annotations() for one comment / one annotator.
  const std::vector<std::size_t>& annotations_of_comment(std::size_t comment) const {
    return by_comment_[comment];
  }
  const std::vector<std::size_t>& annotations_of_annotator(std::size_t annotator) const {
    return by_annotator_[annotator];
  }

  std::vector<long> label_counts(std::size_t comment) const;
  std::vector<long> label_counts(std::size_t comment, std::span<const char> annotation_mask) const;

  std::map<std::string, std::string> demographics_map(std::size_t annotator) const;
  // Tuple of all schema attribute values joined with '|'.
  std::string demographic_combination(std::size_t annotator) const;
  // Sorted distinct values of one attribute over all annotators, always
  // including "unknown".
  std::vector<std::string> categories(std::size_t attribute) const;

  // Full scan of every invariant; throws Error on the first violation.
  void validate() const;

  // Content hash over schema, label space and all records in order.
  std::string fingerprint() const;

 private:
  std::vector<std::string> schema_;
  int label_space_size_;
  std::vector<Comment> comments_;
  std::vector<Annotator> annotators_;
  std::vector<Annotation> annotations_;
  std::unordered_map<std::string, std::size_t> comment_index_;
  std::unordered_map<std::string, std::size_t> annotator_index_;
  std::vector<std::vector<std::size_t>> by_comment_;
  std::vector<std::vector<std::size_t>> by_annotator_;
};

// Reads the JSONL record format (comment / annotator / annotation kinds).
// Attributes outside `schema` are ignored; each distinct ignored attribute
// and each dropped orphan record produces one entry in `warnings`.
Corpus ingest_corpus(const std::string& path, const std::vector<std::string>& schema,
                     int label_space_size, std::vector<std::string>* warnings = nullptr);
Corpus parse_corpus_jsonl(std::string_view content, const std::vector<std::string>& schema,
                          int label_space_size, std::vector<std::string>* warnings = nullptr);

void write_corpus_jsonl(const Corpus& corpus, const std::string& path);
std::string corpus_to_jsonl(const Corpus& corpus);

// Returns a corpus holding only the given annotations, keeping comments and
// annotators that still have at least one.
Corpus restrict_annotations(const Corpus& corpus, std::span<const std::size_t> annotation_indices);

// 3-class -> binary: drops the intermediate label, maps 2 -> 1.
Corpus binarize_mhs(const Corpus& corpus);
// 5-point ratings (encoded 0..4) -> binary: 0,1 -> 0 and 2,3,4 -> 1.
Corpus binarize_popquorn(const Corpus& corpus);

std::vector<SoftLabel> soft_labels(const Corpus& corpus, const std::vector<std::string>& comment_ids);
// Soft labels counted only over `annotation_subset`.
std::vector<SoftLabel> soft_labels(const Corpus& corpus, const std::vector<std::string>& comment_ids,
                                   std::span<const std::size_t> annotation_subset);

struct BinarizationEffect {
  std::size_t comments = 0;
  std::vector<std::string> comment_ids;
  std::vector<double> disagreement_before;
  std::vector<double> disagreement_after;
  double increased_fraction = 0.0;
  // Comments with original ratings on both sides of the binary boundary.
  double boundary_crossing_fraction = 0.0;
  // Among boundary-crossing comments: those holding both labels adjacent to
  // the boundary (ratings 2 and 3 for the 5-point scale; classes 0 and 2 for
  // the 3-class scale).
  double crossing_adjacent_fraction = 0.0;
  // Among originally disagreeing comments: those containing the removed
  // intermediate class (3-class source only, else 0).
  double disagreeing_with_intermediate_fraction = 0.0;
  double median_before = 0.0;
  double median_after = 0.0;
  // median_after / median_before over comments whose original disagreement
  // is positive; NaN when there are none.
  double median_ratio = 0.0;
};

BinarizationEffect binarization_effect_report(const Corpus& original, const Corpus& binarized);

}  // namespace perspectra
