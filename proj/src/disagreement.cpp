#include "perspectra/disagreement.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "perspectra/error.hpp"

namespace perspectra {

double normalized_disagreement(std::span<const long> label_counts) {
  if (label_counts.size() < 2) {
    throw Error(ErrorCode::DegenerateLabelSpace, "disagreement needs at least two classes");
  }
  long total = 0;
  std::size_t nonzero = 0;
  for (long n : label_counts) {
    if (n < 0) throw Error(ErrorCode::EmptyAnnotationSet, "negative label count");
    total += n;
    if (n > 0) ++nonzero;
  }
  if (total == 0) throw Error(ErrorCode::EmptyAnnotationSet, "no annotations to score");
  if (nonzero == 1) return 0.0;
  // Equal nonzero counts over all classes is exactly uniform.
  if (nonzero == label_counts.size()) {
    bool uniform = true;
    for (long n : label_counts) uniform = uniform && n == label_counts[0];
    if (uniform) return 1.0;
  }
  const double denom = static_cast<double>(total);
  double entropy = 0.0;
  for (long n : label_counts) {
    if (n == 0) continue;
    const double p = static_cast<double>(n) / denom;
    entropy -= p * std::log(p);
  }
  const double score = entropy / std::log(static_cast<double>(label_counts.size()));
  return std::clamp(score, 0.0, 1.0);
}

std::vector<DisagreementScore> comment_disagreements(const Corpus& corpus) {
  std::vector<DisagreementScore> out;
  out.reserve(corpus.comments().size());
  for (std::size_t c = 0; c < corpus.comments().size(); ++c) {
    out.push_back({corpus.comments()[c].id, normalized_disagreement(corpus.label_counts(c))});
  }
  return out;
}

namespace {

struct Accumulator {
  std::size_t comments = 0;
  double disagreement_sum = 0.0;
  std::size_t high = 0;
  std::size_t original_annotations = 0;
  std::size_t intermediate = 0;

  void add(double score, double threshold) {
    ++comments;
    disagreement_sum += score;
    if (is_high_disagreement(score, threshold)) ++high;
  }
};

void add_original(Accumulator& acc, const Corpus& view, std::size_t comment) {
  for (std::size_t i : view.annotations_of_comment(comment)) {
    ++acc.original_annotations;
    if (view.annotations()[i].label == 1) ++acc.intermediate;
  }
}

AmbiguitySummary finish(const Accumulator& acc, const Corpus* uncertain_view, bool from_original) {
  AmbiguitySummary s;
  s.comments = acc.comments;
  s.mean_disagreement = acc.disagreement_sum / static_cast<double>(acc.comments);
  s.high_disagreement_fraction = static_cast<double>(acc.high) / static_cast<double>(acc.comments);
  if (uncertain_view && acc.original_annotations > 0) {
    s.uncertain_label_fraction =
        static_cast<double>(acc.intermediate) / static_cast<double>(acc.original_annotations);
  }
  s.from_original_view = from_original;
  return s;
}

const Corpus* pick_uncertain_view(const Corpus& corpus, const Corpus* original_view) {
  if (original_view) {
    if (original_view->label_space_size() != 3) {
      throw Error(ErrorCode::MismatchedCorpora, "original view must be a 3-class corpus");
    }
    return original_view;
  }
  return corpus.label_space_size() == 3 ? &corpus : nullptr;
}

}  // namespace

AmbiguitySummary split_ambiguity_summary(const Corpus& corpus, const std::vector<std::string>& comment_ids,
                                         const Corpus* original_view, double threshold) {
  if (comment_ids.empty()) throw Error(ErrorCode::EmptyCommentSet, "ambiguity summary of no comments");
  const Corpus* uncertain_view = pick_uncertain_view(corpus, original_view);
  Accumulator acc;
  for (const auto& id : comment_ids) {
    auto c = corpus.find_comment(id);
    if (!c) throw Error(ErrorCode::DanglingReference, "unknown comment '" + id + "'");
    if (original_view) {
      auto o = original_view->find_comment(id);
      if (!o) throw Error(ErrorCode::MismatchedCorpora, "comment '" + id + "' missing from original view");
      acc.add(normalized_disagreement(original_view->label_counts(*o)), threshold);
      add_original(acc, *original_view, *o);
    } else {
      acc.add(normalized_disagreement(corpus.label_counts(*c)), threshold);
      if (uncertain_view) add_original(acc, corpus, *c);
    }
  }
  return finish(acc, uncertain_view, original_view != nullptr);
}

AmbiguitySummary summarize_annotations(const Corpus& corpus, std::span<const std::size_t> annotations,
                                       const Corpus* original_view, double threshold) {
  if (annotations.empty()) throw Error(ErrorCode::EmptyCommentSet, "ambiguity summary of no annotations");
  std::vector<char> mask(corpus.annotations().size(), 0);
  std::set<std::size_t> comments;
  for (std::size_t i : annotations) {
    mask[i] = 1;
    comments.insert(corpus.annotations()[i].comment);
  }
  if (original_view) {
    std::vector<std::string> ids;
    ids.reserve(comments.size());
    for (std::size_t c : comments) ids.push_back(corpus.comments()[c].id);
    return split_ambiguity_summary(corpus, ids, original_view, threshold);
  }
  const Corpus* uncertain_view = pick_uncertain_view(corpus, nullptr);
  Accumulator acc;
  for (std::size_t c : comments) acc.add(normalized_disagreement(corpus.label_counts(c, mask)), threshold);
  if (uncertain_view) {
    for (std::size_t i : annotations) {
      ++acc.original_annotations;
      if (corpus.annotations()[i].label == 1) ++acc.intermediate;
    }
  }
  return finish(acc, uncertain_view, false);
}

}  // namespace perspectra
