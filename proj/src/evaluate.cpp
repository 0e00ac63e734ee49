#include "perspectra/evaluate.hpp"

#include <algorithm>

#include <json.hpp>

#include "perspectra/diagnostic.hpp"
#include "perspectra/disagreement.hpp"
#include "perspectra/error.hpp"

namespace perspectra {

namespace {

using nlohmann::json;

std::vector<std::vector<int>> annotator_rows(const ResidualAdapter& adapter, const Corpus& corpus) {
  std::vector<std::vector<int>> rows;
  rows.reserve(corpus.annotators().size());
  for (const Annotator& a : corpus.annotators()) rows.push_back(adapter.embedding().lookup(a.demographics));
  return rows;
}

std::vector<GatedPrediction> predict(const TextClassifierState& state, const ResidualAdapter& adapter,
                                     const GateConfig& config, const Corpus& corpus,
                                     const std::vector<std::size_t>& annotations, const EncodingCache& encodings) {
  const auto rows = annotator_rows(adapter, corpus);
  Eigen::MatrixXd h(static_cast<Eigen::Index>(encodings.dimension()), static_cast<Eigen::Index>(annotations.size()));
  std::vector<const std::vector<int>*> demo;
  demo.reserve(annotations.size());
  for (std::size_t j = 0; j < annotations.size(); ++j) {
    const Annotation& a = corpus.annotations()[annotations[j]];
    h.col(static_cast<Eigen::Index>(j)) = encodings.column(a.comment);
    demo.push_back(&rows[a.annotator]);
  }
  return predict_gated_batch(state, adapter, config, h, demo);
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::vector<int> argmax(const std::vector<EvalItem>& items, bool gated) {
  std::vector<int> out;
  out.reserve(items.size());
  for (const EvalItem& it : items) {
    const auto& p = gated ? it.p_gated : it.p_text;
    out.push_back(static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()));
  }
  return out;
}

double auc_of(const std::vector<EvalItem>& items, bool gated, int K) {
  std::vector<double> probs;
  std::vector<int> labels;
  for (const EvalItem& it : items) {
    const auto& p = gated ? it.p_gated : it.p_text;
    probs.insert(probs.end(), p.begin(), p.end());
    labels.push_back(it.label);
  }
  return macro_auc(probs, labels, K);
}

PairwiseResult pairwise(const std::vector<EvalItem>& items, const std::vector<GatedPrediction>* preds, bool gated) {
  std::vector<PairwiseItem> pw;
  pw.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    double score = preds ? (*preds)[i].p(1) : (gated ? items[i].p_gated[1] : items[i].p_text[1]);
    pw.push_back({items[i].comment_id, items[i].label, score});
  }
  return within_comment_pairwise_accuracy(pw);
}

json metrics_json(const MacroMetrics& m) {
  return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

json buckets_json(const std::vector<BucketGain>& buckets) {
  json out = json::array();
  for (const BucketGain& b : buckets) {
    out.push_back({{"name", b.name},
                   {"items", b.items},
                   {"lower", b.lower},
                   {"upper", b.upper},
                   {"accuracy_text", b.accuracy_text},
                   {"accuracy_gated", b.accuracy_gated},
                   {"f1_text", b.f1_text},
                   {"f1_gated", b.f1_gated},
                   {"delta_accuracy", b.delta_accuracy},
                   {"delta_f1", b.delta_f1},
                   {"mean_alpha", b.mean_alpha}});
  }
  return out;
}

json pairwise_json(const std::optional<PairwiseResult>& r) {
  if (!r) return nullptr;
  return {{"accuracy", r->accuracy}, {"pairs", r->pairs}, {"comments", r->comments}};
}

}  // namespace

ModelEvaluation evaluate_model(const TextClassifierState& state, const ResidualAdapter& adapter,
                               const GateConfig& config, const Corpus& corpus, const Split& split,
                               const EncodingCache& encodings, std::uint64_t shuffle_seed,
                               std::size_t shuffle_repeats) {
  if (shuffle_repeats == 0) throw Error(ErrorCode::BadConfig, "shuffle_repeats must be positive");
  if (split.test.empty()) throw Error(ErrorCode::EmptyInput, "split has no test annotations");
  const int K = corpus.label_space_size();
  ModelEvaluation ev;

  std::vector<char> mask(corpus.annotations().size(), 0);
  for (std::size_t a : split.test) mask[a] = 1;
  std::vector<double> comment_disagreement(corpus.comments().size(), -1.0);

  const auto preds = predict(state, adapter, config, corpus, split.test, encodings);
  ev.items.reserve(split.test.size());
  for (std::size_t j = 0; j < split.test.size(); ++j) {
    const Annotation& a = corpus.annotations()[split.test[j]];
    double& d = comment_disagreement[a.comment];
    if (d < 0) d = normalized_disagreement(corpus.label_counts(a.comment, mask));
    ev.items.push_back({corpus.comments()[a.comment].id, d, a.label, to_vector(preds[j].p_text),
                        to_vector(preds[j].p), preds[j].alpha});
  }

  ev.auc_text = auc_of(ev.items, false, K);
  ev.auc_gated = auc_of(ev.items, true, K);
  std::vector<int> labels;
  for (const EvalItem& it : ev.items) labels.push_back(it.label);
  ev.metrics_text = macro_metrics(argmax(ev.items, false), labels, K);
  ev.metrics_gated = macro_metrics(argmax(ev.items, true), labels, K);
  ev.disagreement_buckets = bucket_gains(ev.items, BucketMode::Disagreement, K, 10, &ev.warnings);
  if (K == 2) {
    ev.confidence_buckets = bucket_gains(ev.items, BucketMode::Confidence, K, 10, &ev.warnings);
    ev.selectivity = gate_selectivity(ev.items, BucketMode::Confidence, 10, &ev.warnings);
    try {
      ev.pairwise_text = pairwise(ev.items, nullptr, false);
      ev.pairwise_gated = pairwise(ev.items, nullptr, true);
      PairwiseResult mean{};
      for (std::size_t r = 0; r < shuffle_repeats; ++r) {
        const Corpus shuffled = shuffle_demographics(corpus, split.test, shuffle_seed + r);
        const auto shuffled_preds = predict(state, adapter, config, shuffled, split.test, encodings);
        const PairwiseResult one = pairwise(ev.items, &shuffled_preds, true);
        mean.pairs = one.pairs;
        mean.comments = one.comments;
        mean.accuracy += one.accuracy / static_cast<double>(shuffle_repeats);
      }
      ev.pairwise_shuffled = mean;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoDisagreedComments) throw;
      ev.warnings.push_back(e.what());
    }
  }
  return ev;
}

std::string evaluation_to_json(const ModelEvaluation& ev, int indent) {
  json selectivity = json::array();
  for (const AlphaBucket& b : ev.selectivity)
    selectivity.push_back({{"name", b.name}, {"items", b.items}, {"mean_alpha", b.mean_alpha}});
  json out = {{"test_items", ev.items.size()},
              {"auc", {{"text", ev.auc_text}, {"gated", ev.auc_gated}, {"delta", ev.auc_gated - ev.auc_text}}},
              {"metrics", {{"text", metrics_json(ev.metrics_text)}, {"gated", metrics_json(ev.metrics_gated)}}},
              {"disagreement_buckets", buckets_json(ev.disagreement_buckets)},
              {"confidence_buckets", buckets_json(ev.confidence_buckets)},
              {"gate_selectivity", selectivity},
              {"pairwise",
               {{"text", pairwise_json(ev.pairwise_text)},
                {"gated", pairwise_json(ev.pairwise_gated)},
                {"shuffled", pairwise_json(ev.pairwise_shuffled)}}},
              {"warnings", ev.warnings}};
  return out.dump(indent) + "\n";
}

}  // namespace perspectra
