#include "perspectra/residual.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "perspectra/error.hpp"
#include "perspectra/eval.hpp"
#include "perspectra/fingerprint.hpp"
#include "perspectra/rng.hpp"

namespace perspectra {

void GateConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::BadConfig, what); };
  if (!(tau >= 0.0 && tau <= 1.0)) bad("tau must lie in [0, 1]");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) bad("temperature must be positive");
  if (!(rho >= 0.0 && rho <= 1.0)) bad("rho must lie in [0, 1]");
  if (!(lambda_soft >= 0.0) || !std::isfinite(lambda_soft)) bad("lambda_soft must be non-negative");
  if (text_epochs < 1 || residual_epochs < 1) bad("epochs must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) bad("dropout must lie in [0, 1)");
  if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
  if (batch_size == 0) bad("batch_size must be positive");
}

std::string GateConfig::fingerprint() const {
  Fingerprint f;
  f.add("gate-config").add(tau).add(temperature).add(rho).add(lambda_soft);
  f.add(force_alpha_one).add(disable_gate_weighting).add(disable_soft_loss);
  f.add(text_epochs).add(residual_epochs).add(dropout).add(learning_rate);
  f.add(static_cast<std::uint64_t>(batch_size)).add(static_cast<std::uint64_t>(text_hidden));
  f.add(static_cast<std::uint64_t>(residual_hidden)).add(static_cast<std::uint64_t>(dims.categorical));
  f.add(static_cast<std::uint64_t>(dims.binary)).add(static_cast<std::uint64_t>(dims.pooled)).add(seed);
  return f.hex();
}

namespace {

struct PresetRow {
  const char* name;
  double rho, tau, temperature, lambda_soft;
  int text_epochs, residual_epochs;
  double dropout;
};

constexpr PresetRow kPresets[] = {
    {"mhs-bertweet", 0.50, 0.55, 0.08, 0.50, 10, 20, 0.20},
    {"mhs-toxdect", 0.40, 0.50, 0.12, 0.50, 10, 20, 0.25},
    {"popquorn-bertweet", 0.25, 0.45, 0.15, 0.20, 15, 30, 0.25},
    {"popquorn-toxdect", 0.25, 0.55, 0.15, 0.50, 10, 20, 0.20},
};

}  // namespace

GateConfig gate_preset(const std::string& name) {
  for (const PresetRow& row : kPresets) {
    if (name != row.name) continue;
    GateConfig c;
    c.rho = row.rho;
    c.tau = row.tau;
    c.temperature = row.temperature;
    c.lambda_soft = row.lambda_soft;
    c.text_epochs = row.text_epochs;
    c.residual_epochs = row.residual_epochs;
    c.dropout = row.dropout;
    return c;
  }
  throw Error(ErrorCode::UnknownPreset, "unknown preset '" + name + "'");
}

std::vector<std::string> gate_preset_names() {
  std::vector<std::string> names;
  for (const PresetRow& row : kPresets) names.emplace_back(row.name);
  return names;
}

GateConfig ablation_preset(const std::string& name, const GateConfig& base) {
  GateConfig c = base;
  if (name == "full") return c;
  if (name == "no-gate") {
    c.force_alpha_one = true;
    c.rho = 0.0;
    return c;
  }
  if (name == "no-gate-weighting") {
    c.disable_gate_weighting = true;
    c.rho = 0.0;
    return c;
  }
  if (name == "no-soft-loss") {
    c.disable_soft_loss = true;
    c.lambda_soft = 0.0;
    return c;
  }
  throw Error(ErrorCode::UnknownPreset, "unknown ablation '" + name + "'");
}

std::vector<std::string> ablation_preset_names() { return {"full", "no-gate", "no-gate-weighting", "no-soft-loss"}; }

double text_uncertainty(const Eigen::VectorXd& p) {
  const Eigen::Index K = p.size();
  if (K < 2) throw Error(ErrorCode::InvalidDistribution, "uncertainty needs at least two classes");
  double sum = 0.0;
  double h = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    const double v = p(k);
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw Error(ErrorCode::InvalidDistribution, "probability out of range");
    sum += v;
    if (v > 0.0) h -= v * std::log(v);
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::InvalidDistribution, "probabilities do not sum to 1");
  return std::clamp(h / std::log(static_cast<double>(K)), 0.0, 1.0);
}

double gate(double u, const GateConfig& config) {
  if (config.force_alpha_one) return 1.0;
  const double x = (u - config.tau) / config.temperature;
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

LossGrad text_stage_loss(const Eigen::MatrixXd& logits, const std::vector<int>& labels, const Eigen::MatrixXd& soft,
                         double lambda_soft) {
  const Eigen::Index B = logits.cols();
  LossGrad out;
  const Eigen::MatrixXd p = nn::softmax_columns(logits);
  out.grad = p;
  for (Eigen::Index j = 0; j < B; ++j) {
    const int y = labels[static_cast<std::size_t>(j)];
    out.loss -= std::log(p(y, j));
    out.grad(y, j) -= 1.0;
    if (lambda_soft != 0.0) {
      for (Eigen::Index k = 0; k < logits.rows(); ++k) {
        if (soft(k, j) > 0.0) out.loss -= lambda_soft * soft(k, j) * std::log(p(k, j));
      }
      out.grad.col(j) += lambda_soft * (p.col(j) - soft.col(j));
    }
  }
  out.loss /= static_cast<double>(B);
  out.grad /= static_cast<double>(B);
  return out;
}

LossGrad residual_stage_loss(const Eigen::MatrixXd& z_text, const Eigen::MatrixXd& r, const Eigen::VectorXd& alpha,
                             const std::vector<int>& labels, double rho) {
  const Eigen::Index B = z_text.cols();
  Eigen::MatrixXd z = z_text;
  for (Eigen::Index j = 0; j < B; ++j) z.col(j) += alpha(j) * r.col(j);
  const Eigen::MatrixXd p = nn::softmax_columns(z);
  LossGrad out;
  out.grad = p;
  for (Eigen::Index j = 0; j < B; ++j) {
    const int y = labels[static_cast<std::size_t>(j)];
    const double w = residual_weight(alpha(j), rho);
    out.loss -= w * std::log(p(y, j));
    out.grad(y, j) -= 1.0;
    out.grad.col(j) *= w * alpha(j);
  }
  out.loss /= static_cast<double>(B);
  out.grad /= static_cast<double>(B);
  return out;
}

TextClassifierState::TextClassifierState(std::string encoder_spec, std::size_t text_dim, std::size_t hidden,
                                         std::size_t classes, std::uint64_t seed)
    : encoder_spec_(std::move(encoder_spec)), head_(text_dim, 0, hidden, classes, seed) {}

Eigen::MatrixXd TextClassifierState::logits(const Eigen::MatrixXd& h) const {
  return head_.forward(h, Eigen::MatrixXd(0, h.cols()));
}

nn::BlockMlp& TextClassifierState::head() {
  if (frozen_) throw Error(ErrorCode::StateNotFrozen, "text classifier is frozen; its parameters are immutable");
  return head_;
}

void TextClassifierState::write(std::ostream& out) const {
  nn::write_string(out, encoder_spec_);
  nn::write_u64(out, frozen_ ? 1 : 0);
  head_.write(out);
}

TextClassifierState TextClassifierState::read(std::istream& in) {
  TextClassifierState s;
  s.encoder_spec_ = nn::read_string(in);
  s.frozen_ = nn::read_u64(in) != 0;
  s.head_ = nn::BlockMlp::read(in);
  return s;
}

namespace {

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return Rng::mix(Rng::mix(seed ^ 0x5eedULL) ^ (stream * 0x9e3779b97f4a7c15ULL));
}

}  // namespace

ResidualAdapter::ResidualAdapter(nn::DemographicEmbedding embedding, std::size_t text_dim, std::size_t hidden,
                                 std::size_t classes, std::uint64_t seed)
    : embedding_(std::move(embedding)), mlp_(text_dim, embedding_.pooled_dim(), hidden, classes, seed) {}

ResidualAdapter ResidualAdapter::for_corpus(const Corpus& corpus, std::size_t text_dim, const GateConfig& config) {
  return ResidualAdapter(nn::DemographicEmbedding::for_corpus(corpus, config.dims, stream_seed(config.seed, 12)),
                         text_dim, config.residual_hidden, static_cast<std::size_t>(corpus.label_space_size()),
                         stream_seed(config.seed, 11));
}

Eigen::MatrixXd ResidualAdapter::residual(const Eigen::MatrixXd& h, const std::vector<const std::vector<int>*>& demo) const {
  const Eigen::MatrixXd e = mlp_.demo_dim() > 0 ? embedding_.forward(demo) : Eigen::MatrixXd(0, h.cols());
  return mlp_.forward(h, e);
}

std::vector<nn::Parameter*> ResidualAdapter::parameters() {
  std::vector<nn::Parameter*> out = mlp_.parameters();
  for (nn::Parameter* p : embedding_.parameters()) out.push_back(p);
  return out;
}

void ResidualAdapter::set_zero() {
  mlp_.set_zero();
  for (nn::Parameter* p : embedding_.parameters()) p->value.setZero();
}

void ResidualAdapter::write(std::ostream& out) const {
  embedding_.write(out);
  mlp_.write(out);
}

ResidualAdapter ResidualAdapter::read(std::istream& in) {
  ResidualAdapter a;
  a.embedding_ = nn::DemographicEmbedding::read(in);
  a.mlp_ = nn::BlockMlp::read(in);
  return a;
}

std::size_t count_parameters(const ResidualAdapter& adapter) {
  return adapter.embedding().parameter_count() + adapter.mlp().parameter_count();
}

GatedPrediction gated_from_parts(const Eigen::VectorXd& z_text, const Eigen::VectorXd& r, const GateConfig& config) {
  GatedPrediction g;
  g.z_text = z_text;
  g.p_text = nn::softmax(z_text);
  g.u = text_uncertainty(g.p_text);
  g.alpha = gate(g.u, config);
  g.r = r;
  g.z = z_text + g.alpha * r;
  g.p = nn::softmax(g.z);
  return g;
}

GatedPrediction predict_gated(const TextClassifierState& state, const ResidualAdapter& adapter,
                              const GateConfig& config, const Eigen::VectorXd& h, const std::vector<int>& demo_rows) {
  std::vector<const std::vector<int>*> demo{&demo_rows};
  return predict_gated_batch(state, adapter, config, h, demo).front();
}

std::vector<GatedPrediction> predict_gated_batch(const TextClassifierState& state, const ResidualAdapter& adapter,
                                                 const GateConfig& config, const Eigen::MatrixXd& h,
                                                 const std::vector<const std::vector<int>*>& demo) {
  const Eigen::MatrixXd z_text = state.logits(h);
  const Eigen::MatrixXd r = adapter.residual(h, demo);
  std::vector<GatedPrediction> out;
  out.reserve(static_cast<std::size_t>(h.cols()));
  for (Eigen::Index j = 0; j < h.cols(); ++j) out.push_back(gated_from_parts(z_text.col(j), r.col(j), config));
  return out;
}

namespace {

struct StageItems {
  Eigen::MatrixXd h;
  std::vector<int> labels;
  std::vector<std::size_t> comments;
  std::vector<const std::vector<int>*> demo;
};

StageItems gather_items(const Corpus& corpus, const std::vector<std::size_t>& annotations,
                        const EncodingCache& encodings, const std::vector<std::vector<int>>* rows) {
  StageItems s;
  s.h.resize(static_cast<Eigen::Index>(encodings.dimension()), static_cast<Eigen::Index>(annotations.size()));
  for (std::size_t j = 0; j < annotations.size(); ++j) {
    const Annotation& a = corpus.annotations()[annotations[j]];
    s.h.col(static_cast<Eigen::Index>(j)) = encodings.column(a.comment);
    s.labels.push_back(a.label);
    s.comments.push_back(a.comment);
    if (rows) s.demo.push_back(&(*rows)[a.annotator]);
  }
  return s;
}

Eigen::MatrixXd cols_of(const Eigen::MatrixXd& m, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(idx[j]));
  return out;
}

double probs_auc(const Eigen::MatrixXd& probs, const std::vector<int>& labels) {
  const auto K = static_cast<std::size_t>(probs.rows());
  std::vector<double> flat(labels.size() * K);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    for (std::size_t k = 0; k < K; ++k) flat[j * K + k] = probs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
  }
  return macro_auc(flat, labels, static_cast<int>(K));
}

std::vector<std::vector<std::size_t>> batches(std::vector<std::size_t>& order, std::size_t size, Rng& rng) {
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += size) {
    const std::size_t end = std::min(order.size(), start + size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

void check_finite(double loss, const Eigen::MatrixXd& grad, const char* stage) {
  if (!std::isfinite(loss) || !grad.allFinite()) {
    throw Error(ErrorCode::TrainingDiverged, std::string("non-finite loss in ") + stage + " stage");
  }
}

}  // namespace

TextClassifierState train_text_stage(const Corpus& corpus, const Split& split, const EncodingCache& encodings,
                                     const std::string& encoder_spec, const GateConfig& config, StageReport* report) {
  config.validate();
  if (split.train.empty() || split.val.empty()) {
    throw Error(ErrorCode::InfeasibleSplit, "text stage needs training and validation annotations");
  }
  const auto K = static_cast<std::size_t>(corpus.label_space_size());
  const StageItems train = gather_items(corpus, split.train, encodings, nullptr);
  const StageItems val = gather_items(corpus, split.val, encodings, nullptr);

  // Soft labels from training annotations only.
  Eigen::MatrixXd comment_soft = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K),
                                                       static_cast<Eigen::Index>(corpus.comments().size()));
  for (std::size_t i : split.train) {
    const Annotation& a = corpus.annotations()[i];
    comment_soft(a.label, static_cast<Eigen::Index>(a.comment)) += 1.0;
  }
  for (Eigen::Index c = 0; c < comment_soft.cols(); ++c) {
    const double total = comment_soft.col(c).sum();
    if (total > 0.0) comment_soft.col(c) /= total;
  }

  TextClassifierState state(encoder_spec, encodings.dimension(), config.text_hidden, K, stream_seed(config.seed, 1));
  nn::BlockMlp& head = state.head();
  nn::Adam opt(config.learning_rate);
  Rng dropout_rng(stream_seed(config.seed, 2));
  Rng batch_rng(stream_seed(config.seed, 3));
  const double lambda = config.effective_lambda_soft();

  std::vector<std::size_t> order(train.labels.size());
  std::iota(order.begin(), order.end(), 0);
  StageReport local;
  StageReport& rep = report ? *report : local;
  rep = StageReport{};
  rep.best_val_auc = -1.0;
  std::vector<Eigen::MatrixXd> best = nn::snapshot(head.parameters());
  for (int epoch = 1; epoch <= config.text_epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (const auto& batch : batches(order, config.batch_size, batch_rng)) {
      const Eigen::MatrixXd h = cols_of(train.h, batch);
      std::vector<int> y;
      Eigen::MatrixXd q(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(batch.size()));
      for (std::size_t j = 0; j < batch.size(); ++j) {
        y.push_back(train.labels[batch[j]]);
        q.col(static_cast<Eigen::Index>(j)) = comment_soft.col(static_cast<Eigen::Index>(train.comments[batch[j]]));
      }
      nn::BlockMlp::Cache cache;
      const Eigen::MatrixXd z = head.forward(h, Eigen::MatrixXd(0, h.cols()), &cache, config.dropout, &dropout_rng);
      const LossGrad lg = text_stage_loss(z, y, q, lambda);
      check_finite(lg.loss, lg.grad, "text");
      for (nn::Parameter* p : head.parameters()) p->zero_grad();
      head.backward(cache, lg.grad);
      opt.step(head.parameters());
      epoch_loss += lg.loss * static_cast<double>(batch.size());
    }
    rep.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    const double auc = probs_auc(nn::softmax_columns(state.logits(val.h)), val.labels);
    rep.val_auc.push_back(auc);
    if (auc > rep.best_val_auc) {
      rep.best_val_auc = auc;
      rep.best_epoch = epoch;
      best = nn::snapshot(head.parameters());
    }
  }
  nn::restore(head.parameters(), best);
  state.freeze();
  return state;
}

ResidualAdapter train_residual_stage(const TextClassifierState& state, const Corpus& corpus, const Split& split,
                                     const EncodingCache& encodings, const GateConfig& config, StageReport* report) {
  config.validate();
  if (!state.frozen()) throw Error(ErrorCode::StateNotFrozen, "freeze the text classifier before residual training");
  if (split.train.empty() || split.val.empty()) {
    throw Error(ErrorCode::InfeasibleSplit, "residual stage needs training and validation annotations");
  }
  if (state.text_dim() != encodings.dimension()) {
    throw Error(ErrorCode::EncoderFailure, "encoder width does not match the text classifier");
  }
  ResidualAdapter adapter = ResidualAdapter::for_corpus(corpus, encodings.dimension(), config);
  std::vector<std::vector<int>> rows;
  rows.reserve(corpus.annotators().size());
  for (const Annotator& a : corpus.annotators()) rows.push_back(adapter.embedding().lookup(a.demographics));

  const StageItems train = gather_items(corpus, split.train, encodings, &rows);
  const StageItems val = gather_items(corpus, split.val, encodings, &rows);
  const Eigen::MatrixXd z_train = state.logits(train.h);
  const Eigen::MatrixXd z_val = state.logits(val.h);
  auto alphas = [&](const Eigen::MatrixXd& z) {
    Eigen::VectorXd a(z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j) a(j) = gate(text_uncertainty(nn::softmax(z.col(j))), config);
    return a;
  };
  const Eigen::VectorXd alpha_train = alphas(z_train);
  const Eigen::VectorXd alpha_val = alphas(z_val);
  const double rho = config.effective_rho();

  nn::Adam opt(config.learning_rate);
  Rng dropout_rng(stream_seed(config.seed, 13));
  Rng batch_rng(stream_seed(config.seed, 14));
  std::vector<std::size_t> order(train.labels.size());
  std::iota(order.begin(), order.end(), 0);

  auto val_auc = [&]() {
    Eigen::MatrixXd z = z_val;
    const Eigen::MatrixXd r = adapter.residual(val.h, val.demo);
    for (Eigen::Index j = 0; j < z.cols(); ++j) z.col(j) += alpha_val(j) * r.col(j);
    return probs_auc(nn::softmax_columns(z), val.labels);
  };

  StageReport local;
  StageReport& rep = report ? *report : local;
  rep = StageReport{};
  rep.best_val_auc = -1.0;
  std::vector<Eigen::MatrixXd> best = nn::snapshot(adapter.parameters());
  for (int epoch = 1; epoch <= config.residual_epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (const auto& batch : batches(order, config.batch_size, batch_rng)) {
      const Eigen::MatrixXd h = cols_of(train.h, batch);
      const Eigen::MatrixXd zt = cols_of(z_train, batch);
      std::vector<const std::vector<int>*> demo;
      std::vector<int> y;
      Eigen::VectorXd a(static_cast<Eigen::Index>(batch.size()));
      for (std::size_t j = 0; j < batch.size(); ++j) {
        demo.push_back(train.demo[batch[j]]);
        y.push_back(train.labels[batch[j]]);
        a(static_cast<Eigen::Index>(j)) = alpha_train(static_cast<Eigen::Index>(batch[j]));
      }
      const Eigen::MatrixXd e = adapter.embedding().forward(demo);
      nn::BlockMlp::Cache cache;
      const Eigen::MatrixXd r = adapter.mlp().forward(h, e, &cache, config.dropout, &dropout_rng);
      const LossGrad lg = residual_stage_loss(zt, r, a, y, rho);
      check_finite(lg.loss, lg.grad, "residual");
      for (nn::Parameter* p : adapter.parameters()) p->zero_grad();
      const Eigen::MatrixXd d_e = adapter.mlp().backward(cache, lg.grad);
      adapter.embedding().backward(demo, d_e);
      opt.step(adapter.parameters());
      epoch_loss += lg.loss * static_cast<double>(batch.size());
    }
    rep.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    const double auc = val_auc();
    rep.val_auc.push_back(auc);
    if (auc > rep.best_val_auc) {
      rep.best_val_auc = auc;
      rep.best_epoch = epoch;
      best = nn::snapshot(adapter.parameters());
    }
  }
  nn::restore(adapter.parameters(), best);
  return adapter;
}

void write_gate_config(std::ostream& out, const GateConfig& c) {
  for (double v : {c.tau, c.temperature, c.rho, c.lambda_soft, c.dropout, c.learning_rate}) nn::write_f64(out, v);
  for (std::uint64_t v : {static_cast<std::uint64_t>(c.force_alpha_one), static_cast<std::uint64_t>(c.disable_gate_weighting),
                          static_cast<std::uint64_t>(c.disable_soft_loss), static_cast<std::uint64_t>(c.text_epochs),
                          static_cast<std::uint64_t>(c.residual_epochs), static_cast<std::uint64_t>(c.batch_size),
                          static_cast<std::uint64_t>(c.text_hidden), static_cast<std::uint64_t>(c.residual_hidden),
                          static_cast<std::uint64_t>(c.dims.categorical), static_cast<std::uint64_t>(c.dims.binary),
                          static_cast<std::uint64_t>(c.dims.pooled), c.seed}) {
    nn::write_u64(out, v);
  }
}

GateConfig read_gate_config(std::istream& in) {
  GateConfig c;
  c.tau = nn::read_f64(in);
  c.temperature = nn::read_f64(in);
  c.rho = nn::read_f64(in);
  c.lambda_soft = nn::read_f64(in);
  c.dropout = nn::read_f64(in);
  c.learning_rate = nn::read_f64(in);
  c.force_alpha_one = nn::read_u64(in) != 0;
  c.disable_gate_weighting = nn::read_u64(in) != 0;
  c.disable_soft_loss = nn::read_u64(in) != 0;
  c.text_epochs = static_cast<int>(nn::read_u64(in));
  c.residual_epochs = static_cast<int>(nn::read_u64(in));
  c.batch_size = nn::read_u64(in);
  c.text_hidden = nn::read_u64(in);
  c.residual_hidden = nn::read_u64(in);
  c.dims.categorical = nn::read_u64(in);
  c.dims.binary = nn::read_u64(in);
  c.dims.pooled = nn::read_u64(in);
  c.seed = nn::read_u64(in);
  return c;
}

namespace {

constexpr char kMagic[8] = {'P', 'S', 'P', 'E', 'C', 'M', 'D', 'L'};

void write_header(std::ostream& out, const std::string& kind, const GateConfig& config) {
  out.write(kMagic, sizeof kMagic);
  nn::write_u64(out, kModelFormatVersion);
  nn::write_string(out, kind);
  nn::write_string(out, config.fingerprint());
  write_gate_config(out, config);
}

std::string read_header(std::istream& in, const std::string& kind, const std::string& path, GateConfig* config) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + 8, kMagic)) {
    throw Error(ErrorCode::MalformedRecord, "'" + path + "' is not a model file");
  }
  const std::uint64_t version = nn::read_u64(in);
  if (version != kModelFormatVersion) {
    throw Error(ErrorCode::MalformedRecord, "'" + path + "' has unsupported format version " + std::to_string(version));
  }
  const std::string got = nn::read_string(in);
  if (got != kind) throw Error(ErrorCode::MalformedRecord, "'" + path + "' holds a " + got + " model, expected " + kind);
  std::string fp = nn::read_string(in);
  const GateConfig stored = read_gate_config(in);
  if (stored.fingerprint() != fp) throw Error(ErrorCode::MalformedRecord, "'" + path + "' config fingerprint mismatch");
  if (config) *config = stored;
  return fp;
}

}  // namespace

void save_text_model(const TextClassifierState& state, const GateConfig& config, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  write_header(out, "text", config);
  state.write(out);
  if (!out) throw Error(ErrorCode::Io, "failed writing '" + path + "'");
}

TextClassifierState load_text_model(const std::string& path, std::string* config_fingerprint, GateConfig* config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + path + "'");
  const std::string fp = read_header(in, "text", path, config);
  if (config_fingerprint) *config_fingerprint = fp;
  return TextClassifierState::read(in);
}

void save_residual_model(const ResidualAdapter& adapter, const GateConfig& config, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  write_header(out, "residual", config);
  adapter.write(out);
  if (!out) throw Error(ErrorCode::Io, "failed writing '" + path + "'");
}

ResidualAdapter load_residual_model(const std::string& path, std::string* config_fingerprint, GateConfig* config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + path + "'");
  const std::string fp = read_header(in, "residual", path, config);
  if (config_fingerprint) *config_fingerprint = fp;
  return ResidualAdapter::read(in);
}

}  // namespace perspectra
