#include "perspectra/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "perspectra/error.hpp"

namespace perspectra {

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::EmptyInput, "scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of midranks of the positives (Mann-Whitney U).
  double rank_sum = 0.0;
  std::size_t positives = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum += midrank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw Error(ErrorCode::SingleClass, "AUC needs both classes present");
  const double p = static_cast<double>(positives);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

double macro_auc(std::span<const double> probs, std::span<const int> labels, int K) {
  const std::size_t n = labels.size();
  if (probs.size() != n * static_cast<std::size_t>(K)) throw Error(ErrorCode::EmptyInput, "probability table shape");
  if (K == 2) {
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = probs[i * 2 + 1];
    return roc_auc(s, labels);
  }
  double total = 0.0;
  int used = 0;
  std::vector<double> s(n);
  std::vector<int> y(n);
  for (int k = 0; k < K; ++k) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = probs[i * static_cast<std::size_t>(K) + static_cast<std::size_t>(k)];
      y[i] = labels[i] == k ? 1 : 0;
      pos += static_cast<std::size_t>(y[i]);
    }
    if (pos == 0 || pos == n) continue;
    total += roc_auc(s, y);
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::SingleClass, "AUC needs at least two classes present");
  return total / used;
}

MacroMetrics macro_metrics(std::span<const int> predictions, std::span<const int> labels, int K) {
  if (predictions.empty() || predictions.size() != labels.size()) {
    throw Error(ErrorCode::EmptyInput, "macro metrics need equal-length non-empty inputs");
  }
  std::vector<long> tp(K, 0), fp(K, 0), fn(K, 0);
  long correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int p = predictions[i];
    const int y = labels[i];
    if (p < 0 || p >= K || y < 0 || y >= K) throw Error(ErrorCode::LabelOutOfRange, "class index out of range");
    if (p == y) {
      ++tp[y];
      ++correct;
    } else {
      ++fp[p];
      ++fn[y];
    }
  }
  MacroMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  int classes = 0;
  for (int k = 0; k < K; ++k) {
    if (tp[k] + fp[k] + fn[k] == 0) continue;
    const double prec = tp[k] + fp[k] > 0 ? static_cast<double>(tp[k]) / static_cast<double>(tp[k] + fp[k]) : 0.0;
    const double rec = tp[k] + fn[k] > 0 ? static_cast<double>(tp[k]) / static_cast<double>(tp[k] + fn[k]) : 0.0;
    const double f1 = prec + rec > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    m.precision += prec;
    m.recall += rec;
    m.f1 += f1;
    ++classes;
  }
  m.precision /= classes;
  m.recall /= classes;
  m.f1 /= classes;
  return m;
}

namespace {

double positive_margin(const EvalItem& item) {
  const double p1 = item.p_text.size() > 1 ? item.p_text[1] : 0.0;
  return std::abs(p1 - 0.5);
}

// Split `ranked` (already ordered) into three equal-frequency groups; extra
// items from a non-divisible count land in the lower groups.
std::vector<std::vector<std::size_t>> tertiles(const std::vector<std::size_t>& ranked) {
  std::vector<std::vector<std::size_t>> out(3);
  const std::size_t n = ranked.size();
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t b = 0;
    while (r >= (n * (b + 1) + 2) / 3) ++b;
    out[b].push_back(ranked[r]);
  }
  return out;
}

}  // namespace

std::vector<Bucket> make_buckets(std::span<const EvalItem> items, BucketMode mode, std::size_t min_population,
                                 std::vector<std::string>* warnings) {
  std::vector<Bucket> buckets;
  if (mode == BucketMode::Disagreement) {
    std::map<std::string, std::vector<std::size_t>> by_comment;
    std::map<std::string, double> comment_score;
    for (std::size_t i = 0; i < items.size(); ++i) {
      by_comment[items[i].comment_id].push_back(i);
      comment_score[items[i].comment_id] = items[i].disagreement;
    }
    Bucket zero{"zero", {}, 0.0, 0.0};
    std::vector<std::pair<double, std::string>> rest;
    for (const auto& [id, score] : comment_score) {
      if (score == 0.0) {
        for (std::size_t i : by_comment[id]) zero.items.push_back(i);
      } else {
        rest.emplace_back(score, id);
      }
    }
    std::sort(rest.begin(), rest.end());
    std::vector<std::size_t> ranked(rest.size());
    std::iota(ranked.begin(), ranked.end(), 0);
    const auto groups = tertiles(ranked);
    buckets.push_back(std::move(zero));
    static constexpr const char* kNames[] = {"low", "medium", "high"};
    for (int b = 0; b < 3; ++b) {
      Bucket bucket{kNames[b], {}, 0.0, 0.0};
      if (!groups[b].empty()) {
        bucket.lower = rest[groups[b].front()].first;
        bucket.upper = rest[groups[b].back()].first;
      }
      for (std::size_t r : groups[b]) {
        for (std::size_t i : by_comment[rest[r].second]) bucket.items.push_back(i);
      }
      buckets.push_back(std::move(bucket));
    }
  } else {
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double ma = positive_margin(items[a]);
      const double mb = positive_margin(items[b]);
      if (ma != mb) return ma < mb;
      if (items[a].comment_id != items[b].comment_id) return items[a].comment_id < items[b].comment_id;
      return a < b;
    });
    const auto groups = tertiles(order);
    static constexpr const char* kNames[] = {"low", "medium", "high"};
    for (int b = 0; b < 3; ++b) {
      Bucket bucket{kNames[b], groups[b], 0.0, 0.0};
      if (!groups[b].empty()) {
        bucket.lower = positive_margin(items[groups[b].front()]);
        bucket.upper = positive_margin(items[groups[b].back()]);
      }
      buckets.push_back(std::move(bucket));
    }
  }

  buckets.erase(std::remove_if(buckets.begin(), buckets.end(), [](const Bucket& b) { return b.items.empty(); }),
                buckets.end());
  // Merge under-populated buckets into the preceding one (or the next one
  // for the first bucket) until every bucket is large enough.
  bool merged = true;
  while (merged && buckets.size() > 1) {
    merged = false;
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      if (buckets[b].items.size() >= min_population) continue;
      const std::size_t into = b == 0 ? 1 : b - 1;
      if (warnings) {
        warnings->push_back("InsufficientBucketPopulation: bucket '" + buckets[b].name + "' has " +
                            std::to_string(buckets[b].items.size()) + " items; merged into '" +
                            buckets[into].name + "'");
      }
      Bucket& target = buckets[into];
      target.items.insert(target.items.end(), buckets[b].items.begin(), buckets[b].items.end());
      target.lower = std::min(target.lower, buckets[b].lower);
      target.upper = std::max(target.upper, buckets[b].upper);
      target.name = into < b ? target.name + "+" + buckets[b].name : buckets[b].name + "+" + target.name;
      std::sort(target.items.begin(), target.items.end());
      buckets.erase(buckets.begin() + static_cast<std::ptrdiff_t>(b));
      merged = true;
      break;
    }
  }
  return buckets;
}

namespace {

int argmax(const std::vector<double>& p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

}  // namespace

std::vector<BucketGain> bucket_gains(std::span<const EvalItem> items, BucketMode mode, int K,
                                     std::size_t min_population, std::vector<std::string>* warnings) {
  std::vector<BucketGain> out;
  for (const Bucket& bucket : make_buckets(items, mode, min_population, warnings)) {
    std::vector<int> y, pt, pg;
    double alpha = 0.0;
    for (std::size_t i : bucket.items) {
      y.push_back(items[i].label);
      pt.push_back(argmax(items[i].p_text));
      pg.push_back(argmax(items[i].p_gated));
      alpha += items[i].alpha;
    }
    const MacroMetrics mt = macro_metrics(pt, y, K);
    const MacroMetrics mg = macro_metrics(pg, y, K);
    BucketGain g;
    g.name = bucket.name;
    g.items = bucket.items.size();
    g.lower = bucket.lower;
    g.upper = bucket.upper;
    g.accuracy_text = mt.accuracy;
    g.accuracy_gated = mg.accuracy;
    g.f1_text = mt.f1;
    g.f1_gated = mg.f1;
    g.delta_accuracy = mg.accuracy - mt.accuracy;
    g.delta_f1 = mg.f1 - mt.f1;
    g.mean_alpha = alpha / static_cast<double>(bucket.items.size());
    out.push_back(g);
  }
  return out;
}

std::vector<AlphaBucket> gate_selectivity(std::span<const EvalItem> items, BucketMode mode,
                                          std::size_t min_population, std::vector<std::string>* warnings) {
  std::vector<AlphaBucket> out;
  for (const Bucket& bucket : make_buckets(items, mode, min_population, warnings)) {
    double alpha = 0.0;
    for (std::size_t i : bucket.items) alpha += items[i].alpha;
    out.push_back({bucket.name, bucket.items.size(), alpha / static_cast<double>(bucket.items.size())});
  }
  return out;
}

PairwiseResult within_comment_pairwise_accuracy(std::span<const PairwiseItem> items) {
  std::map<std::string, std::vector<std::size_t>> by_comment;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].label != 0 && items[i].label != 1) {
      throw Error(ErrorCode::WrongLabelSpace, "pairwise accuracy needs binary labels");
    }
    by_comment[items[i].comment_id].push_back(i);
  }
  PairwiseResult result;
  double score = 0.0;
  for (const auto& [id, members] : by_comment) {
    std::size_t before = result.pairs;
    for (std::size_t a : members) {
      if (items[a].label != 1) continue;
      for (std::size_t b : members) {
        if (items[b].label != 0) continue;
        ++result.pairs;
        if (items[a].score > items[b].score) {
          score += 1.0;
        } else if (items[a].score == items[b].score) {
          score += 0.5;
        }
      }
    }
    if (result.pairs > before) ++result.comments;
  }
  if (result.pairs == 0) throw Error(ErrorCode::NoDisagreedComments, "no comment has annotators with opposite labels");
  result.accuracy = score / static_cast<double>(result.pairs);
  return result;
}

}  // namespace perspectra
