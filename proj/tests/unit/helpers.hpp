#pragma once

#include <string>
#include <vector>

#include "perspectra/corpus.hpp"

namespace testing_helpers {

// One comment per entry of `labels`; annotator ids are "a<k>" for the k-th
// label of each comment, shared across comments.
inline perspectra::Corpus labelled_corpus(const std::vector<std::vector<int>>& labels, int K = 2) {
  perspectra::Corpus c({"group"}, K);
  std::size_t max_annotators = 0;
  for (const auto& row : labels) max_annotators = std::max(max_annotators, row.size());
  for (std::size_t a = 0; a < max_annotators; ++a)
    c.add_annotator("a" + std::to_string(a), std::vector<std::string>{a % 2 ? "x" : "y"});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto ci = c.add_comment("c" + std::to_string(i), "text " + std::to_string(i));
    for (std::size_t a = 0; a < labels[i].size(); ++a) c.add_annotation(ci, a, labels[i][a]);
  }
  return c;
}

}  // namespace testing_helpers
