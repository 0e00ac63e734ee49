#include "perspectra/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "perspectra/encoder.hpp"
#include "perspectra/error.hpp"
#include "perspectra/parallel.hpp"
#include "perspectra/rng.hpp"

namespace perspectra {

void SyntheticSpec::validate() const {
  auto infeasible = [](const std::string& what) { throw Error(ErrorCode::SpecInfeasible, what); };
  if (n_comments == 0 || n_annotators == 0 || annotators_per_comment == 0) infeasible("counts must be positive");
  if (annotators_per_comment > n_annotators) infeasible("annotators_per_comment exceeds n_annotators");
  if (schema.empty()) infeasible("schema needs at least one attribute");
  for (const AttributeSpec& a : schema) {
    if (a.name.empty() || a.categories == 0) infeasible("every attribute needs a name and a category");
  }
  if (effect_weights.size() != schema.size()) infeasible("effect_weights needs one weight per attribute");
  for (double w : effect_weights) {
    if (!std::isfinite(w)) infeasible("effect weights must be finite");
  }
  for (double v : {beta_text, beta_demo, annotator_bias, noise, score_min, score_spread}) {
    if (!std::isfinite(v) || v < 0.0) infeasible("strengths must be finite and non-negative");
  }
  const AmbiguityProfile& p = ambiguity;
  if (!(p.ambiguous_fraction >= 0.0 && p.ambiguous_fraction <= 1.0)) infeasible("ambiguous_fraction outside [0, 1]");
  if (!(0.0 <= p.low_min && p.low_min <= p.low_max && p.low_max <= 1.0 && 0.0 <= p.high_min &&
        p.high_min <= p.high_max && p.high_max <= 1.0)) {
    infeasible("difficulty ranges must be ordered within [0, 1]");
  }
  if (tokens_per_comment == 0 || vocabulary == 0) infeasible("text needs tokens and a vocabulary");
}

std::vector<std::string> SyntheticSpec::attribute_names() const {
  std::vector<std::string> names;
  for (const AttributeSpec& a : schema) names.push_back(a.name);
  return names;
}

void PartitionedSpec::validate() const {
  base.validate();
  for (const PartitionSpec* p : {&train, &val, &test}) {
    if (p->n_comments == 0 || p->n_annotators == 0) throw Error(ErrorCode::SpecInfeasible, "partition counts must be positive");
    if (base.annotators_per_comment > p->n_annotators) {
      throw Error(ErrorCode::SpecInfeasible, "annotators_per_comment exceeds a partition's annotator pool");
    }
    if (!(p->ambiguous_fraction >= 0.0 && p->ambiguous_fraction <= 1.0)) {
      throw Error(ErrorCode::SpecInfeasible, "ambiguous_fraction outside [0, 1]");
    }
    if (!(p->careless_fraction >= 0.0 && p->careless_fraction <= 1.0)) {
      throw Error(ErrorCode::SpecInfeasible, "careless_fraction outside [0, 1]");
    }
  }
  if (holdout_attribute >= base.schema.size()) throw Error(ErrorCode::SpecInfeasible, "holdout_attribute out of range");
  if (holdout_categories >= base.schema[holdout_attribute].categories) {
    throw Error(ErrorCode::SpecInfeasible, "holdout attribute needs at least one shared category");
  }
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw Error(ErrorCode::SpecInfeasible, "overlap outside [0, 1]");
}

namespace {

std::string padded(const std::string& prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return prefix + buf;
}

std::string category_name(const AttributeSpec& a, std::size_t k) { return a.name + "_" + std::to_string(k); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Magnitudes grow with the category index and signs alternate:
// +1/h, -1/h, +2/h, -2/h, ... with h = ceil(categories / 2). The highest
// categories, which partitioned corpora reserve for test annotators, carry
// the strongest effects.
std::vector<double> planted_offsets(std::size_t categories) {
  std::vector<double> offsets(categories, 0.0);
  if (categories == 1) return offsets;
  const double h = static_cast<double>((categories + 1) / 2);
  for (std::size_t k = 0; k < categories; ++k) {
    const double magnitude = static_cast<double>(k / 2 + 1) / h;
    offsets[k] = k % 2 == 0 ? magnitude : -magnitude;
  }
  return offsets;
}

class Generator {
 public:
  Generator(const SyntheticSpec& spec, Corpus& corpus, GroundTruth& truth)
      : spec_(spec), corpus_(corpus), truth_(truth), rng_(spec.seed) {
    for (const AttributeSpec& a : spec.schema) truth_.offsets.push_back(planted_offsets(a.categories));
  }

  // Attribute j draws from [lo, hi) of `shared` with probability p_shared,
  // otherwise from `alternative`.
  std::vector<std::size_t> annotators(const std::string& prefix, std::size_t n,
                                      const std::vector<std::pair<std::size_t, std::size_t>>& shared,
                                      const std::vector<std::pair<std::size_t, std::size_t>>& alternative,
                                      double p_shared, double careless_fraction = 0.0) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i) {
      const bool use_shared = rng_.uniform() < p_shared;
      std::vector<std::string> demo;
      std::vector<int> cats;
      double offset = 0.0;
      for (std::size_t j = 0; j < spec_.schema.size(); ++j) {
        const auto [lo, hi] = use_shared ? shared[j] : alternative[j];
        const std::size_t k = lo + rng_.below(hi - lo);
        cats.push_back(static_cast<int>(k));
        offset += spec_.effect_weights[j] * truth_.offsets[j][k];
        demo.push_back(category_name(spec_.schema[j], k));
      }
      out.push_back(corpus_.add_annotator(padded(prefix + "a", i), std::move(demo)));
      truth_.annotator_bias.push_back(spec_.annotator_bias * rng_.normal());
      truth_.annotator_offset.push_back(offset);
      truth_.annotator_categories.push_back(std::move(cats));
      truth_.careless.push_back(rng_.uniform() < careless_fraction ? 1 : 0);
    }
    return out;
  }

  std::vector<std::size_t> annotate(const std::string& prefix, std::size_t n, double ambiguous_fraction,
                                    const std::vector<std::size_t>& pool) {
    const AmbiguityProfile& prof = spec_.ambiguity;
    std::vector<std::size_t> annotations;
    std::vector<std::size_t> members = pool;
    for (std::size_t c = 0; c < n; ++c) {
      const bool ambiguous = rng_.uniform() < ambiguous_fraction;
      const double d = ambiguous ? rng_.uniform(prof.high_min, prof.high_max) : rng_.uniform(prof.low_min, prof.low_max);
      const double sign = rng_.bernoulli(0.5) ? 1.0 : -1.0;
      const double s = sign * (spec_.score_min + spec_.score_spread * std::abs(rng_.normal()));
      const std::size_t comment = corpus_.add_comment(padded(prefix + "c", c), make_text(s * (1.0 - d)));
      truth_.text_score.push_back(s);
      truth_.difficulty.push_back(d);
      truth_.ambiguous.push_back(ambiguous ? 1 : 0);

      // Partial Fisher-Yates: the first k members are this comment's annotators.
      for (std::size_t k = 0; k < spec_.annotators_per_comment; ++k) {
        std::swap(members[k], members[k + rng_.below(members.size() - k)]);
      }
      for (std::size_t k = 0; k < spec_.annotators_per_comment; ++k) {
        const std::size_t a = members[k];
        const double offset = truth_.annotator_offset[a];
        const double demo_scale = spec_.conditional ? d : 1.0;
        const double logit = spec_.beta_text * s * (1.0 - d) + spec_.beta_demo * offset * demo_scale +
                             d * (truth_.annotator_bias[a] + spec_.noise * rng_.normal());
        const int label = rng_.uniform() < (truth_.careless[a] ? 0.5 : sigmoid(logit)) ? 1 : 0;
        annotations.push_back(corpus_.add_annotation(comment, a, label));
        truth_.annotation_logit.push_back(logit);
      }
    }
    return annotations;
  }

 private:
  std::string make_text(double signal) {
    const double p = sigmoid(2.0 * signal);
    std::vector<std::string> tokens;
    for (std::size_t t = 0; t < spec_.tokens_per_comment; ++t) {
      const bool positive = rng_.uniform() < p;
      tokens.push_back((positive ? "pos" : "neg") + std::to_string(rng_.below(spec_.vocabulary)));
    }
    std::string text;
    for (const auto& tok : tokens) {
      if (!text.empty()) text += ' ';
      text += tok;
    }
    return text;
  }

  const SyntheticSpec& spec_;
  Corpus& corpus_;
  GroundTruth& truth_;
  Rng rng_;
};

std::vector<std::pair<std::size_t, std::size_t>> full_ranges(const SyntheticSpec& spec) {
  std::vector<std::pair<std::size_t, std::size_t>> r;
  for (const AttributeSpec& a : spec.schema) r.emplace_back(0, a.categories);
  return r;
}

}  // namespace

SyntheticCorpus generate_corpus(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticCorpus out{Corpus(spec.attribute_names(), 2), {}, std::nullopt};
  Generator gen(spec, out.corpus, out.truth);
  const auto ranges = full_ranges(spec);
  const auto pool = gen.annotators("", spec.n_annotators, ranges, ranges, 1.0);
  gen.annotate("", spec.n_comments, spec.ambiguity.ambiguous_fraction, pool);
  return out;
}

SyntheticCorpus generate_partitioned(const PartitionedSpec& spec) {
  spec.validate();
  SyntheticCorpus out{Corpus(spec.base.attribute_names(), 2), {}, std::nullopt};
  Generator gen(spec.base, out.corpus, out.truth);
  auto shared = full_ranges(spec.base);
  auto reserved = shared;
  const std::size_t m = spec.base.schema[spec.holdout_attribute].categories;
  shared[spec.holdout_attribute] = {0, m - spec.holdout_categories};
  if (spec.holdout_categories > 0) reserved[spec.holdout_attribute] = {m - spec.holdout_categories, m};

  const auto train_pool = gen.annotators("tr-", spec.train.n_annotators, shared, shared, 1.0, spec.train.careless_fraction);
  const auto val_pool = gen.annotators("va-", spec.val.n_annotators, shared, shared, 1.0, spec.val.careless_fraction);
  const auto test_pool =
      gen.annotators("te-", spec.test.n_annotators, shared, reserved, spec.holdout_categories > 0 ? spec.overlap : 1.0, spec.test.careless_fraction);

  Split split;
  split.seed = spec.base.seed;
  split.policy = SplitPolicy::UnseenCommentsAndAnnotators;
  split.train = gen.annotate("tr-", spec.train.n_comments, spec.train.ambiguous_fraction, train_pool);
  split.val = gen.annotate("va-", spec.val.n_comments, spec.val.ambiguous_fraction, val_pool);
  split.test = gen.annotate("te-", spec.test.n_comments, spec.test.ambiguous_fraction, test_pool);
  out.split = std::move(split);
  return out;
}

PartitionedSpec sweep_base_spec() {
  PartitionedSpec spec;
  spec.base.annotator_bias = 0.0;
  spec.base.effect_weights = {1.0, 0.0, 1.0};
  spec.train = {1000, 600, 0.5};
  spec.val = {150, 150, 0.9};
  spec.test = {150, 150, 0.9};
  return spec;
}

PartitionedSpec residual_scenario_spec() {
  PartitionedSpec spec;
  spec.base.annotators_per_comment = 12;
  spec.base.annotator_bias = 0.0;
  spec.base.ambiguity.high_min = 0.3;
  spec.train = {800, 60, 0.2};
  spec.val = {400, 300, 0.9};
  spec.test = {400, 300, 0.9};
  return spec;
}

std::vector<SweepRow> regime_sweep(const PartitionedSpec& base, const SweepGrid& grid, const SweepOptions& options) {
  if (grid.train_careless.empty() || grid.test_ambiguity.empty() || grid.train_sizes.empty() || grid.overlaps.empty() ||
      grid.replicates == 0) {
    throw Error(ErrorCode::SpecInfeasible, "sweep grid is empty");
  }
  base.validate();
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < grid.train_careless.size(); ++i) {
    for (std::size_t j = 0; j < grid.test_ambiguity.size(); ++j) {
      for (std::size_t size : grid.train_sizes) {
        for (double overlap : grid.overlaps) {
          for (std::size_t r = 0; r < grid.replicates; ++r) {
            SweepRow row;
            row.train_index = i;
            row.test_index = j;
            row.train_careless = grid.train_careless[i];
            row.test_ambiguity = grid.test_ambiguity[j];
            row.train_size = size;
            row.overlap = overlap;
            row.replicate = r;
            row.seed = Rng::mix(base.base.seed * 1000003ULL + rows.size());
            rows.push_back(row);
          }
        }
      }
    }
  }
  const HashingEncoder encoder(options.encoder_dim);
  GainOptions gain = options.gain;
  gain.jobs = 1;
  parallel_for(rows.size(), options.jobs, [&](std::size_t k) {
    SweepRow& row = rows[k];
    PartitionedSpec spec = base;
    spec.base.seed = row.seed;
    spec.train.n_comments = row.train_size;
    spec.train.careless_fraction = row.train_careless;
    spec.val.ambiguous_fraction = row.test_ambiguity;
    spec.test.ambiguous_fraction = row.test_ambiguity;
    spec.overlap = row.overlap;
    try {
      const SyntheticCorpus synthetic = generate_partitioned(spec);
      const EncodingCache cache(encoder, synthetic.corpus);
      row.gain = measure_split_gain(synthetic.corpus, *synthetic.split, cache, gain);
    } catch (const Error& e) {
      row.gain = GainRecord{};
      row.gain.split_seed = row.seed;
      row.gain.error = e.what();
    }
  });
  return rows;
}

std::vector<CellSummary> summarize_sweep(const std::vector<SweepRow>& rows) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<const SweepRow*>> cells;
  for (const SweepRow& r : rows) {
    if (r.gain.error.empty()) cells[{r.train_index, r.test_index}].push_back(&r);
  }
  auto mean_se = [](const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    return std::pair{mean, se};
  };
  std::vector<CellSummary> out;
  for (const auto& [key, members] : cells) {
    CellSummary c;
    c.train_index = key.first;
    c.test_index = key.second;
    c.train_careless = members.front()->train_careless;
    c.test_ambiguity = members.front()->test_ambiguity;
    c.n = members.size();
    std::vector<double> delta, shuffled, train_d, test_d;
    for (const SweepRow* r : members) {
      delta.push_back(r->gain.delta_auc);
      if (auto s = r->gain.delta_shuffled()) shuffled.push_back(*s);
      train_d.push_back(r->gain.descriptor.train_disagreement_mean);
      test_d.push_back(r->gain.descriptor.test_disagreement_mean);
    }
    std::tie(c.mean_delta, c.se_delta) = mean_se(delta);
    if (!shuffled.empty()) std::tie(c.mean_shuffled, c.se_shuffled) = mean_se(shuffled);
    c.mean_train_disagreement = mean_se(train_d).first;
    c.mean_test_disagreement = mean_se(test_d).first;
    out.push_back(c);
  }
  return out;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::vector<GainRecord> gains;
  for (const SweepRow& r : rows) gains.push_back(r.gain);
  const std::string gain_csv = gains_to_csv(gains);
  std::istringstream in(gain_csv);
  std::string line;
  std::getline(in, line);
  std::ostringstream out;
  out << "train_careless,test_ambiguity,train_size,overlap,replicate," << line << '\n';
  for (const SweepRow& r : rows) {
    std::getline(in, line);
    out << std::setprecision(17) << r.train_careless << ',' << r.test_ambiguity << ',' << r.train_size << ','
        << r.overlap << ',' << r.replicate << ',' << line << '\n';
  }
  return out.str();
}

}  // namespace perspectra
