#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "perspectra/corpus.hpp"
#include "perspectra/encoder.hpp"
#include "perspectra/nn.hpp"
#include "perspectra/splitter.hpp"

namespace perspectra {

struct GateConfig {
  double tau = 0.55;
  double temperature = 0.08;
  double rho = 0.5;
  double lambda_soft = 0.5;
  bool force_alpha_one = false;
  bool disable_gate_weighting = false;
  bool disable_soft_loss = false;

  int text_epochs = 10;
  int residual_epochs = 20;
  double dropout = 0.2;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t text_hidden = 256;
  std::size_t residual_hidden = 256;
  nn::EmbeddingDims dims;
  std::uint64_t seed = 1;

  double effective_rho() const { return force_alpha_one || disable_gate_weighting ? 0.0 : rho; }
  double effective_lambda_soft() const { return disable_soft_loss ? 0.0 : lambda_soft; }
  void validate() const;
  std::string fingerprint() const;
};

// Named hyperparameter rows: mhs-bertweet, mhs-toxdect, popquorn-bertweet,
// popquorn-toxdect.
GateConfig gate_preset(const std::string& name);
std::vector<std::string> gate_preset_names();

// full, no-gate, no-gate-weighting, no-soft-loss applied on top of `base`.
GateConfig ablation_preset(const std::string& name, const GateConfig& base = {});
std::vector<std::string> ablation_preset_names();

// -sum p log p / log K with 0 log 0 = 0.
double text_uncertainty(const Eigen::VectorXd& p);
double gate(double u, const GateConfig& config);
inline double residual_weight(double alpha, double rho) { return (1.0 - rho) + rho * alpha; }

struct LossGrad {
  double loss = 0.0;
  Eigen::MatrixXd grad;  // K x B
};

// Mean over the batch of CE(y, softmax(z)) + lambda * CE(q, softmax(z));
// gradient with respect to the logits `z`.
LossGrad text_stage_loss(const Eigen::MatrixXd& logits, const std::vector<int>& labels, const Eigen::MatrixXd& soft,
                         double lambda_soft);

// Mean over the batch of ((1-rho) + rho alpha) CE(y, softmax(z_text + alpha r));
// gradient with respect to the residual `r`.
LossGrad residual_stage_loss(const Eigen::MatrixXd& z_text, const Eigen::MatrixXd& r, const Eigen::VectorXd& alpha,
                             const std::vector<int>& labels, double rho);

class TextClassifierState {
 public:
  TextClassifierState() = default;
  TextClassifierState(std::string encoder_spec, std::size_t text_dim, std::size_t hidden, std::size_t classes,
                      std::uint64_t seed);

  const std::string& encoder_spec() const { return encoder_spec_; }
  std::size_t text_dim() const { return head_.text_dim(); }
  std::size_t classes() const { return head_.out_dim(); }
  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  Eigen::MatrixXd logits(const Eigen::MatrixXd& h) const;
  nn::BlockMlp& head();
  const nn::BlockMlp& head() const { return head_; }

  void write(std::ostream& out) const;
  static TextClassifierState read(std::istream& in);

 private:
  std::string encoder_spec_;
  nn::BlockMlp head_;
  bool frozen_ = false;
};

class ResidualAdapter {
 public:
  ResidualAdapter() = default;
  ResidualAdapter(nn::DemographicEmbedding embedding, std::size_t text_dim, std::size_t hidden, std::size_t classes,
                  std::uint64_t seed);
  static ResidualAdapter for_corpus(const Corpus& corpus, std::size_t text_dim, const GateConfig& config);

  nn::DemographicEmbedding& embedding() { return embedding_; }
  const nn::DemographicEmbedding& embedding() const { return embedding_; }
  nn::BlockMlp& mlp() { return mlp_; }
  const nn::BlockMlp& mlp() const { return mlp_; }

  Eigen::MatrixXd residual(const Eigen::MatrixXd& h, const std::vector<const std::vector<int>*>& demo) const;
  std::vector<nn::Parameter*> parameters();
  void set_zero();

  void write(std::ostream& out) const;
  static ResidualAdapter read(std::istream& in);

 private:
  nn::DemographicEmbedding embedding_;
  nn::BlockMlp mlp_;
};

std::size_t count_parameters(const ResidualAdapter& adapter);

struct GatedPrediction {
  Eigen::VectorXd z_text;
  Eigen::VectorXd p_text;
  double u = 0.0;
  double alpha = 0.0;
  Eigen::VectorXd r;
  Eigen::VectorXd z;
  Eigen::VectorXd p;
};

// Gated chain for already-computed text logits and residual.
GatedPrediction gated_from_parts(const Eigen::VectorXd& z_text, const Eigen::VectorXd& r, const GateConfig& config);

GatedPrediction predict_gated(const TextClassifierState& state, const ResidualAdapter& adapter,
                              const GateConfig& config, const Eigen::VectorXd& h, const std::vector<int>& demo_rows);

std::vector<GatedPrediction> predict_gated_batch(const TextClassifierState& state, const ResidualAdapter& adapter,
                                                 const GateConfig& config, const Eigen::MatrixXd& h,
                                                 const std::vector<const std::vector<int>*>& demo);

struct StageReport {
  int best_epoch = 0;
  double best_val_auc = 0.0;
  std::vector<double> train_loss;
  std::vector<double> val_auc;
};

TextClassifierState train_text_stage(const Corpus& corpus, const Split& split, const EncodingCache& encodings,
                                     const std::string& encoder_spec, const GateConfig& config,
                                     StageReport* report = nullptr);

ResidualAdapter train_residual_stage(const TextClassifierState& state, const Corpus& corpus, const Split& split,
                                     const EncodingCache& encodings, const GateConfig& config,
                                     StageReport* report = nullptr);

// Binary model files: magic, format version, kind, config fingerprint, payload.
inline constexpr std::uint64_t kModelFormatVersion = 1;

void save_text_model(const TextClassifierState& state, const GateConfig& config, const std::string& path);
TextClassifierState load_text_model(const std::string& path, std::string* config_fingerprint = nullptr,
                                    GateConfig* config = nullptr);
void save_residual_model(const ResidualAdapter& adapter, const GateConfig& config, const std::string& path);
ResidualAdapter load_residual_model(const std::string& path, std::string* config_fingerprint = nullptr,
                                    GateConfig* config = nullptr);

void write_gate_config(std::ostream& out, const GateConfig& config);
GateConfig read_gate_config(std::istream& in);

}  // namespace perspectra
