#include "perspectra/diagnostic.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "perspectra/error.hpp"
#include "perspectra/eval.hpp"
#include "perspectra/parallel.hpp"
#include "perspectra/rng.hpp"

namespace perspectra {

Eigen::VectorXd pool_demographics(const nn::DemographicEmbedding& table, const std::vector<std::string>& demographics) {
  const std::vector<int> rows = table.lookup(demographics);
  return table.pool(rows);
}

namespace {

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return Rng::mix(Rng::mix(seed) ^ (stream * 0x9e3779b97f4a7c15ULL));
}

struct ItemSet {
  Eigen::MatrixXd text;  // D x n
  std::vector<const std::vector<int>*> demo;
  std::vector<int> labels;
};

ItemSet gather(const Corpus& corpus, const std::vector<std::size_t>& annotations, const EncodingCache& encodings,
               const std::vector<std::vector<int>>* annotator_rows) {
  ItemSet set;
  set.text.resize(static_cast<Eigen::Index>(encodings.dimension()), static_cast<Eigen::Index>(annotations.size()));
  for (std::size_t j = 0; j < annotations.size(); ++j) {
    const Annotation& a = corpus.annotations()[annotations[j]];
    set.text.col(static_cast<Eigen::Index>(j)) = encodings.column(a.comment);
    set.labels.push_back(a.label);
    if (annotator_rows) set.demo.push_back(&(*annotator_rows)[a.annotator]);
  }
  return set;
}

Eigen::MatrixXd slice(const Eigen::MatrixXd& m, const std::vector<std::size_t>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(cols[j]));
  return out;
}

class Probe {
 public:
  Probe(const Corpus& corpus, std::size_t text_dim, bool use_demo, std::uint64_t seed, const DiagnosticConfig& config)
      : use_demo_(use_demo), config_(config), k_(static_cast<std::size_t>(corpus.label_space_size())) {
    const double shrink = config.learning_rate * config.demographic_weight_decay;
    if (!(config.demographic_weight_decay >= 0.0 && shrink < 1.0)) {
      throw Error(ErrorCode::BadConfig, "demographic_weight_decay must be >= 0 with learning_rate * decay < 1");
    }
    if (use_demo_) {
      embedding_ = nn::DemographicEmbedding::for_corpus(corpus, config.dims, stream_seed(seed, 2));
      if (config.zero_init_demographics) embedding_.zero_tables();
      if (config.freeze_demographics_at_zero) embedding_.freeze_at_zero();
    }
    mlp_ = nn::BlockMlp(text_dim, use_demo_ ? embedding_.pooled_dim() : 0, config.hidden, k_, stream_seed(seed, 1));
  }

  const nn::DemographicEmbedding& embedding() const { return embedding_; }

  Eigen::MatrixXd demo_block(const std::vector<const std::vector<int>*>& rows) const {
    if (!use_demo_ || mlp_.demo_dim() == 0) return Eigen::MatrixXd(0, static_cast<Eigen::Index>(rows.size()));
    return embedding_.forward(rows);
  }

  // Row-major n x K probabilities.
  std::vector<double> predict(const ItemSet& set) const {
    const std::size_t n = set.labels.size();
    std::vector<double> out(n * k_);
    const std::size_t chunk = 1024;
    for (std::size_t start = 0; start < n; start += chunk) {
      const std::size_t end = std::min(n, start + chunk);
      const Eigen::MatrixXd text = set.text.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start));
      std::vector<const std::vector<int>*> rows;
      if (use_demo_) rows.assign(set.demo.begin() + static_cast<std::ptrdiff_t>(start), set.demo.begin() + static_cast<std::ptrdiff_t>(end));
      else rows.resize(end - start, nullptr);
      const Eigen::MatrixXd probs = nn::softmax_columns(mlp_.forward(text, demo_block(rows)));
      for (std::size_t j = 0; j < end - start; ++j) {
        for (std::size_t k = 0; k < k_; ++k) out[(start + j) * k_ + k] = probs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
      }
    }
    return out;
  }

  double auc(const ItemSet& set) const { return macro_auc(predict(set), set.labels, static_cast<int>(k_)); }

  double train_batch(const ItemSet& set, const std::vector<std::size_t>& batch, nn::Adam& opt, Rng& dropout_rng) {
    const Eigen::MatrixXd text = slice(set.text, batch);
    std::vector<const std::vector<int>*> rows(batch.size(), nullptr);
    if (use_demo_) {
      for (std::size_t j = 0; j < batch.size(); ++j) rows[j] = set.demo[batch[j]];
    }
    const Eigen::MatrixXd demo = demo_block(rows);
    nn::BlockMlp::Cache cache;
    const Eigen::MatrixXd logits = mlp_.forward(text, demo, &cache, config_.dropout, &dropout_rng);
    Eigen::MatrixXd grad = nn::softmax_columns(logits);
    double loss = 0.0;
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      const int y = set.labels[batch[j]];
      loss -= std::log(std::max(grad(y, col), 1e-300));
      grad(y, col) -= 1.0;
    }
    grad *= scale;
    loss *= scale;
    if (!std::isfinite(loss) || !grad.allFinite()) throw Error(ErrorCode::TrainingDiverged, "non-finite probe loss");

    for (nn::Parameter* p : parameters()) p->zero_grad();
    const Eigen::MatrixXd d_demo = mlp_.backward(cache, grad);
    if (use_demo_ && d_demo.rows() > 0) embedding_.backward(rows, d_demo);
    opt.step(parameters());
    if (use_demo_ && config_.demographic_weight_decay > 0.0 && !embedding_.frozen()) {
      const double shrink = 1.0 - config_.learning_rate * config_.demographic_weight_decay;
      for (std::size_t j = 0; j < embedding_.attributes(); ++j) embedding_.table(j).value *= shrink;
    }
    return loss;
  }

  std::vector<nn::Parameter*> parameters() {
    std::vector<nn::Parameter*> out = mlp_.parameters();
    if (use_demo_) {
      for (nn::Parameter* p : embedding_.parameters()) out.push_back(p);
    }
    return out;
  }

 private:
  bool use_demo_;
  DiagnosticConfig config_;
  std::size_t k_;
  nn::DemographicEmbedding embedding_;
  nn::BlockMlp mlp_;
};

}  // namespace

ProbeRun train_probe(const Corpus& corpus, const Split& split, const EncodingCache& encodings, bool use_demographics,
                     std::uint64_t seed, const DiagnosticConfig& config) {
  if (split.train.empty() || split.val.empty() || split.test.empty()) {
    throw Error(ErrorCode::InfeasibleSplit, "probe needs non-empty train, validation and test partitions");
  }
  Probe probe(corpus, encodings.dimension(), use_demographics, seed, config);

  std::vector<std::vector<int>> annotator_rows;
  if (use_demographics) {
    annotator_rows.reserve(corpus.annotators().size());
    for (const Annotator& a : corpus.annotators()) annotator_rows.push_back(probe.embedding().lookup(a.demographics));
  }
  const auto* rows = use_demographics ? &annotator_rows : nullptr;
  const ItemSet train = gather(corpus, split.train, encodings, rows);
  const ItemSet val = gather(corpus, split.val, encodings, rows);
  const ItemSet test = gather(corpus, split.test, encodings, rows);

  nn::Adam opt(config.learning_rate);
  Rng dropout_rng(stream_seed(seed, 3));
  Rng batch_rng(stream_seed(seed, 4));
  std::vector<std::size_t> order(train.labels.size());
  std::iota(order.begin(), order.end(), 0);

  ProbeRun run;
  run.best_val_auc = -1.0;
  std::vector<Eigen::MatrixXd> best = nn::snapshot(probe.parameters());
  int since_best = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    batch_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      probe.train_batch(train, batch, opt, dropout_rng);
    }
    run.epochs_run = epoch;
    const double val_auc = probe.auc(val);
    if (val_auc > run.best_val_auc) {
      run.best_val_auc = val_auc;
      run.best_epoch = epoch;
      best = nn::snapshot(probe.parameters());
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  nn::restore(probe.parameters(), best);
  run.test_probs = probe.predict(test);
  run.test_auc = macro_auc(run.test_probs, test.labels, corpus.label_space_size());
  return run;
}

DiagnosticResult train_diagnostic(const Corpus& corpus, const Split& split, const EncodingCache& encodings,
                                  bool use_demographics, const std::vector<std::uint64_t>& seeds,
                                  const DiagnosticConfig& config) {
  if (seeds.empty()) throw Error(ErrorCode::BadConfig, "at least one seed is required");
  DiagnosticResult result;
  for (std::uint64_t seed : seeds) {
    result.per_seed.push_back(train_probe(corpus, split, encodings, use_demographics, seed, config).test_auc);
  }
  result.mean_auc = std::accumulate(result.per_seed.begin(), result.per_seed.end(), 0.0) /
                    static_cast<double>(result.per_seed.size());
  return result;
}

namespace {

Corpus rebuild_with_demographics(const Corpus& corpus, const std::vector<std::vector<std::string>>& demographics) {
  Corpus out(corpus.schema(), corpus.label_space_size());
  for (const Comment& c : corpus.comments()) out.add_comment(c.id, c.text);
  for (std::size_t a = 0; a < corpus.annotators().size(); ++a) out.add_annotator(corpus.annotators()[a].id, demographics[a]);
  for (const Annotation& ann : corpus.annotations()) out.add_annotation(ann.comment, ann.annotator, ann.label);
  return out;
}

void permute_within(const Corpus& corpus, const std::vector<std::size_t>& annotations, Rng& rng,
                    std::vector<std::vector<std::string>>& demographics) {
  std::vector<char> mark(corpus.annotators().size(), 0);
  for (std::size_t i : annotations) mark[corpus.annotations()[i].annotator] = 1;
  std::vector<std::size_t> members;
  for (std::size_t a = 0; a < mark.size(); ++a) {
    if (mark[a]) members.push_back(a);
  }
  std::vector<std::size_t> perm = members;
  rng.shuffle(perm);
  std::vector<std::vector<std::string>> original(members.size());
  for (std::size_t k = 0; k < members.size(); ++k) original[k] = demographics[perm[k]];
  for (std::size_t k = 0; k < members.size(); ++k) demographics[members[k]] = std::move(original[k]);
}

std::vector<std::vector<std::string>> current_demographics(const Corpus& corpus) {
  std::vector<std::vector<std::string>> d;
  d.reserve(corpus.annotators().size());
  for (const Annotator& a : corpus.annotators()) d.push_back(a.demographics);
  return d;
}

}  // namespace

Corpus shuffle_demographics(const Corpus& corpus, const std::vector<std::size_t>& annotations, std::uint64_t seed) {
  Rng rng(seed);
  auto demographics = current_demographics(corpus);
  permute_within(corpus, annotations, rng, demographics);
  return rebuild_with_demographics(corpus, demographics);
}

Corpus shuffle_split_demographics(const Corpus& corpus, const Split& split, std::uint64_t seed) {
  Rng rng(seed);
  auto demographics = current_demographics(corpus);
  permute_within(corpus, split.train, rng, demographics);
  permute_within(corpus, split.val, rng, demographics);
  permute_within(corpus, split.test, rng, demographics);
  return rebuild_with_demographics(corpus, demographics);
}

GainRecord measure_split_gain(const Corpus& corpus, const Split& split, const EncodingCache& encodings,
                              const GainOptions& options) {
  GainRecord record;
  record.split_seed = split.seed;
  record.descriptor = describe_split(corpus, split, options.original_view);
  record.auc_text = train_diagnostic(corpus, split, encodings, false, options.seeds, options.probe).mean_auc;
  record.auc_text_demo = train_diagnostic(corpus, split, encodings, true, options.seeds, options.probe).mean_auc;
  record.delta_auc = record.auc_text_demo - record.auc_text;
  if (options.shuffled_control) {
    const Corpus shuffled = shuffle_split_demographics(corpus, split, stream_seed(split.seed, 77));
    record.auc_shuffled = train_diagnostic(shuffled, split, encodings, true, options.seeds, options.probe).mean_auc;
  }
  return record;
}

std::vector<GainRecord> measure_gain(const Corpus& corpus, const std::vector<Split>& splits,
                                     const EncodingCache& encodings, const GainOptions& options) {
  std::vector<GainRecord> out(splits.size());
  parallel_for(splits.size(), options.jobs, [&](std::size_t i) {
    try {
      out[i] = measure_split_gain(corpus, splits[i], encodings, options);
    } catch (const Error& e) {
      out[i] = GainRecord{};
      out[i].split_seed = splits[i].seed;
      out[i].error = e.what();
    }
  });
  return out;
}

std::vector<std::string> gain_csv_header() {
  return {"seed",
          "train_disagreement_mean",
          "train_hd_frac",
          "test_disagreement_mean",
          "test_hd_frac",
          "test_uncertain_label_frac",
          "train_records",
          "train_unique_comments",
          "test_demo_overlap",
          "test_demo_combinations",
          "auc_text",
          "auc_demo",
          "auc_shuffled",
          "delta_auc",
          "error"};
}

namespace {

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

std::string gains_to_csv(const std::vector<GainRecord>& gains) {
  std::ostringstream out;
  const auto header = gain_csv_header();
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const GainRecord& g : gains) {
    const SplitDescriptor& d = g.descriptor;
    out << g.split_seed << ',';
    if (!g.error.empty()) {
      out << ",,,,,,,,,,,,," << sanitize(g.error) << '\n';
      continue;
    }
    out << num(d.train_disagreement_mean) << ',' << num(d.train_hd_frac) << ',' << num(d.test_disagreement_mean) << ','
        << num(d.test_hd_frac) << ',' << (d.test_uncertain_label_frac ? num(*d.test_uncertain_label_frac) : "") << ','
        << d.train_records << ',' << d.train_unique_comments << ',' << d.test_demo_overlap << ','
        << d.test_demo_combinations << ',' << num(g.auc_text) << ',' << num(g.auc_text_demo) << ','
        << (g.auc_shuffled ? num(*g.auc_shuffled) : "") << ',' << num(g.delta_auc) << ",\n";
  }
  return out.str();
}

std::vector<GainRecord> gains_from_csv(const std::string& content) {
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MalformedRecord, "gains table is empty");
  const auto header = split_fields(line);
  const auto expected = gain_csv_header();
  if (header != expected) throw Error(ErrorCode::MalformedRecord, "gains table has an unexpected header");
  std::vector<GainRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != expected.size()) {
      throw Error(ErrorCode::MalformedRecord, "gains line " + std::to_string(line_no) + ": wrong field count");
    }
    try {
      GainRecord g;
      g.split_seed = std::stoull(f[0]);
      g.error = f[14];
      if (g.error.empty()) {
        SplitDescriptor& d = g.descriptor;
        d.train_disagreement_mean = std::stod(f[1]);
        d.train_hd_frac = std::stod(f[2]);
        d.test_disagreement_mean = std::stod(f[3]);
        d.test_hd_frac = std::stod(f[4]);
        if (!f[5].empty()) d.test_uncertain_label_frac = std::stod(f[5]);
        d.train_records = std::stoull(f[6]);
        d.train_unique_comments = std::stoull(f[7]);
        d.test_demo_overlap = std::stoull(f[8]);
        d.test_demo_combinations = std::stoull(f[9]);
        g.auc_text = std::stod(f[10]);
        g.auc_text_demo = std::stod(f[11]);
        if (!f[12].empty()) g.auc_shuffled = std::stod(f[12]);
        g.delta_auc = std::stod(f[13]);
      }
      out.push_back(std::move(g));
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::MalformedRecord, "gains line " + std::to_string(line_no) + ": unparsable number");
    }
  }
  return out;
}

void write_gains_csv(const std::vector<GainRecord>& gains, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out << gains_to_csv(gains);
}

std::vector<GainRecord> read_gains_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return gains_from_csv(buffer.str());
}

}  // namespace perspectra
