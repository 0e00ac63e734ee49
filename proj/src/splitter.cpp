#include "perspectra/splitter.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "perspectra/disagreement.hpp"
#include "perspectra/error.hpp"
#include "perspectra/rng.hpp"

namespace perspectra {

using nlohmann::json;

std::string to_string(SplitPolicy policy) {
  return policy == SplitPolicy::UnseenCommentsAndAnnotators ? "strict" : "comments-only";
}

SplitPolicy parse_split_policy(const std::string& name) {
  if (name == "strict") return SplitPolicy::UnseenCommentsAndAnnotators;
  if (name == "comments-only") return SplitPolicy::UnseenCommentsOnly;
  throw Error(ErrorCode::BadFlag, "unknown split policy '" + name + "' (expected strict|comments-only)");
}

const std::vector<std::size_t>& Split::partition(Partition p) const {
  switch (p) {
    case Partition::Train: return train;
    case Partition::Val: return val;
    case Partition::Test: return test;
  }
  return train;
}

std::vector<std::size_t>& Split::partition(Partition p) {
  return const_cast<std::vector<std::size_t>&>(static_cast<const Split&>(*this).partition(p));
}

namespace {

constexpr std::array<Partition, 3> kPartitions{Partition::Train, Partition::Val, Partition::Test};

Split assemble(const Corpus& corpus, const std::vector<int>& comment_part, const std::vector<int>& annotator_part,
               SplitPolicy policy, std::uint64_t seed) {
  Split split;
  split.seed = seed;
  split.policy = policy;
  const auto& anns = corpus.annotations();
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const int p = comment_part[anns[i].comment];
    if (p < 0) continue;
    if (policy == SplitPolicy::UnseenCommentsAndAnnotators && annotator_part[anns[i].annotator] != p) {
      split.dropped.push_back(i);
      continue;
    }
    split.partition(static_cast<Partition>(p)).push_back(i);
  }
  return split;
}

void require_nonempty(const Split& split) {
  static constexpr std::array<const char*, 3> kNames{"train", "validation", "test"};
  for (Partition p : kPartitions) {
    if (split.partition(p).empty()) {
      throw Error(ErrorCode::InfeasibleSplit,
                  std::string(kNames[static_cast<int>(p)]) + " partition is empty under this policy");
    }
  }
}

}  // namespace

Split sample_split(const Corpus& corpus, const SplitFractions& fractions, SplitPolicy policy, std::uint64_t seed) {
  const double total = fractions.train + fractions.val + fractions.test;
  if (!(fractions.train > 0.0 && fractions.val > 0.0 && fractions.test > 0.0) || std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::BadFractions, "fractions must be positive and sum to 1");
  }
  const std::size_t n = corpus.comments().size();
  if (n == 0) throw Error(ErrorCode::InfeasibleSplit, "corpus has no comments");

  std::vector<std::size_t> order(n);
  for (std::size_t c = 0; c < n; ++c) order[c] = c;
  Rng rng(seed);
  rng.shuffle(order);

  const auto n_train = static_cast<std::size_t>(std::llround(fractions.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(fractions.val * static_cast<double>(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw Error(ErrorCode::InfeasibleSplit, "too few comments for the requested fractions");
  }
  std::vector<int> comment_part(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    comment_part[order[r]] = r < n_train ? 0 : (r < n_train + n_val ? 1 : 2);
  }

  // Each annotator joins the partition holding most of its annotations;
  // ties resolve toward train, then validation.
  std::vector<int> annotator_part(corpus.annotators().size(), 0);
  if (policy == SplitPolicy::UnseenCommentsAndAnnotators) {
    for (std::size_t a = 0; a < corpus.annotators().size(); ++a) {
      std::array<std::size_t, 3> counts{0, 0, 0};
      for (std::size_t i : corpus.annotations_of_annotator(a)) {
        ++counts[static_cast<std::size_t>(comment_part[corpus.annotations()[i].comment])];
      }
      int best = 0;
      for (int p = 1; p < 3; ++p) {
        if (counts[static_cast<std::size_t>(p)] > counts[static_cast<std::size_t>(best)]) best = p;
      }
      annotator_part[a] = best;
    }
  }
  Split split = assemble(corpus, comment_part, annotator_part, policy, seed);
  require_nonempty(split);
  return split;
}

void check_split(const Corpus& corpus, const Split& split) {
  const std::size_t n = corpus.annotations().size();
  std::vector<int> comment_part(corpus.comments().size(), -1);
  std::vector<int> annotator_part(corpus.annotators().size(), -1);
  std::vector<char> seen(n, 0);
  for (Partition p : kPartitions) {
    const int pi = static_cast<int>(p);
    for (std::size_t i : split.partition(p)) {
      if (i >= n) throw Error(ErrorCode::InfeasibleSplit, "annotation index out of range");
      if (seen[i]) throw Error(ErrorCode::InfeasibleSplit, "annotation assigned twice");
      seen[i] = 1;
      const auto& ann = corpus.annotations()[i];
      if (comment_part[ann.comment] >= 0 && comment_part[ann.comment] != pi) {
        throw Error(ErrorCode::InfeasibleSplit, "comment '" + corpus.comments()[ann.comment].id +
                                                    "' appears in more than one partition");
      }
      comment_part[ann.comment] = pi;
      if (split.policy == SplitPolicy::UnseenCommentsAndAnnotators) {
        if (annotator_part[ann.annotator] >= 0 && annotator_part[ann.annotator] != pi) {
          throw Error(ErrorCode::InfeasibleSplit, "annotator '" + corpus.annotators()[ann.annotator].id +
                                                      "' appears in more than one partition");
        }
        annotator_part[ann.annotator] = pi;
      }
    }
  }
  for (std::size_t i : split.dropped) {
    if (i >= n || seen[i]) throw Error(ErrorCode::InfeasibleSplit, "dropped annotation also kept or out of range");
  }
}

std::vector<std::string> partition_comment_ids(const Corpus& corpus, const std::vector<std::size_t>& annotations) {
  std::vector<char> mark(corpus.comments().size(), 0);
  for (std::size_t i : annotations) mark[corpus.annotations()[i].comment] = 1;
  std::vector<std::string> ids;
  for (std::size_t c = 0; c < mark.size(); ++c) {
    if (mark[c]) ids.push_back(corpus.comments()[c].id);
  }
  return ids;
}

std::vector<std::string> partition_annotator_ids(const Corpus& corpus, const std::vector<std::size_t>& annotations) {
  std::vector<char> mark(corpus.annotators().size(), 0);
  for (std::size_t i : annotations) mark[corpus.annotations()[i].annotator] = 1;
  std::vector<std::string> ids;
  for (std::size_t a = 0; a < mark.size(); ++a) {
    if (mark[a]) ids.push_back(corpus.annotators()[a].id);
  }
  return ids;
}

SplitDescriptor describe_split(const Corpus& corpus, const Split& split, const Corpus* original_view,
                               double high_threshold) {
  check_split(corpus, split);
  if (split.train.empty() || split.test.empty()) {
    throw Error(ErrorCode::InfeasibleSplit, "descriptor needs non-empty train and test partitions");
  }
  SplitDescriptor d;
  const auto train = summarize_annotations(corpus, split.train, original_view, high_threshold);
  const auto test = summarize_annotations(corpus, split.test, original_view, high_threshold);
  d.train_disagreement_mean = train.mean_disagreement;
  d.train_hd_frac = train.high_disagreement_fraction;
  d.test_disagreement_mean = test.mean_disagreement;
  d.test_hd_frac = test.high_disagreement_fraction;
  d.test_uncertain_label_frac = test.uncertain_label_fraction;
  d.train_records = split.train.size();
  d.train_unique_comments = train.comments;

  std::set<std::string> train_combos;
  for (std::size_t i : split.train) train_combos.insert(corpus.demographic_combination(corpus.annotations()[i].annotator));
  std::set<std::string> test_combos;
  for (std::size_t i : split.test) test_combos.insert(corpus.demographic_combination(corpus.annotations()[i].annotator));
  d.test_demo_combinations = test_combos.size();
  for (const auto& combo : test_combos) {
    if (train_combos.count(combo)) ++d.test_demo_overlap;
  }
  return d;
}

std::string split_to_json(const Corpus& corpus, const Split& split) {
  static constexpr std::array<const char*, 3> kKeys{"train", "val", "test"};
  json out;
  out["seed"] = split.seed;
  out["policy"] = to_string(split.policy);
  out["corpus_fingerprint"] = corpus.fingerprint();
  out["dropped"] = split.dropped.size();
  for (Partition p : kPartitions) {
    const auto& part = split.partition(p);
    json entry;
    entry["comments"] = partition_comment_ids(corpus, part);
    entry["annotators"] = partition_annotator_ids(corpus, part);
    entry["annotations"] = part.size();
    out[kKeys[static_cast<int>(p)]] = std::move(entry);
  }
  return out.dump(1);
}

Split split_from_json(const Corpus& corpus, const std::string& json_text) {
  static constexpr std::array<const char*, 3> kKeys{"train", "val", "test"};
  json in;
  try {
    in = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("split manifest: ") + e.what());
  }
  try {
    const SplitPolicy policy = parse_split_policy(in.at("policy").get<std::string>());
    const auto seed = in.at("seed").get<std::uint64_t>();
    std::vector<int> comment_part(corpus.comments().size(), -1);
    std::vector<int> annotator_part(corpus.annotators().size(), -1);
    for (Partition p : kPartitions) {
      const auto& entry = in.at(kKeys[static_cast<int>(p)]);
      for (const auto& id : entry.at("comments")) {
        auto c = corpus.find_comment(id.get<std::string>());
        if (!c) throw Error(ErrorCode::DanglingReference, "split cites unknown comment '" + id.get<std::string>() + "'");
        comment_part[*c] = static_cast<int>(p);
      }
      for (const auto& id : entry.at("annotators")) {
        auto a = corpus.find_annotator(id.get<std::string>());
        if (!a) {
          throw Error(ErrorCode::DanglingReference, "split cites unknown annotator '" + id.get<std::string>() + "'");
        }
        annotator_part[*a] = static_cast<int>(p);
      }
    }
    Split split = assemble(corpus, comment_part, annotator_part, policy, seed);
    // Records whose comment and annotator both lost every annotation are not
    // listed in any partition; every annotation outside the partitions was
    // dropped.
    std::vector<char> kept(corpus.annotations().size(), 0);
    for (Partition p : kPartitions) {
      for (std::size_t i : split.partition(p)) kept[i] = 1;
    }
    split.dropped.clear();
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (!kept[i]) split.dropped.push_back(i);
    }
    if (in.contains("dropped") && in.at("dropped").get<std::size_t>() != split.dropped.size()) {
      throw Error(ErrorCode::MalformedRecord, "split manifest dropped count does not match this corpus");
    }
    check_split(corpus, split);
    return split;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("split manifest: ") + e.what());
  }
}

void write_split(const Corpus& corpus, const Split& split, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write split manifest '" + path + "'");
  out << split_to_json(corpus, split) << '\n';
}

Split read_split(const Corpus& corpus, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read split manifest '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return split_from_json(corpus, buffer.str());
}

}  // namespace perspectra
