#pragma once

// Small dense-network building blocks shared by the diagnostic probe and the
// gated residual model. Batches are column-major: one example per column.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "perspectra/corpus.hpp"
#include "perspectra/rng.hpp"

namespace perspectra::nn {

struct Parameter {
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
  Eigen::MatrixXd m;
  Eigen::MatrixXd v;

  Parameter() = default;
  Parameter(Eigen::Index rows, Eigen::Index cols);

  void zero_grad() { grad.setZero(); }
  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

class Adam {
 public:
  explicit Adam(double learning_rate = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Parameter*>& params);

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  long t_ = 0;
};

// Column-wise softmax with max subtraction.
Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits);
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

struct EmbeddingDims {
  std::size_t categorical = 64;
  std::size_t binary = 16;
  std::size_t pooled = 64;
};

// Per-attribute learnable embeddings, projected to a common width when an
// attribute's width differs from the pooled width, then mean-pooled.
// Attributes with at most two known categories use the binary width.
class DemographicEmbedding {
 public:
  DemographicEmbedding() = default;
  DemographicEmbedding(std::vector<std::vector<std::string>> categories, EmbeddingDims dims, std::uint64_t seed);

  static DemographicEmbedding for_corpus(const Corpus& corpus, EmbeddingDims dims, std::uint64_t seed);

  std::size_t attributes() const { return categories_.size(); }
  std::size_t pooled_dim() const { return categories_.empty() ? 0 : dims_.pooled; }
  std::size_t width(std::size_t attribute) const { return static_cast<std::size_t>(tables_[attribute].value.cols()); }
  const std::vector<std::string>& categories(std::size_t attribute) const { return categories_[attribute]; }

  // One table row per attribute. Values absent from the table map to the
  // "unknown" row only when they are "unknown" themselves; anything else is
  // Error(UnknownCategory).
  std::vector<int> lookup(const std::vector<std::string>& demographics) const;

  // Per-attribute vector after projection (pre-pooling).
  Eigen::VectorXd attribute_vector(std::size_t attribute, int row) const;
  Eigen::VectorXd pool(std::span<const int> rows) const;

  // Each batch entry is one example's row list; output is pooled_dim x B.
  Eigen::MatrixXd forward(const std::vector<const std::vector<int>*>& batch) const;
  void backward(const std::vector<const std::vector<int>*>& batch, const Eigen::MatrixXd& d_pooled);

  Parameter& table(std::size_t attribute) { return tables_[attribute]; }
  const Parameter& table(std::size_t attribute) const { return tables_[attribute]; }
  Parameter& projection(std::size_t attribute) { return projections_[attribute]; }

  std::vector<Parameter*> parameters();
  std::size_t parameter_count() const;

  // Zero every table; freeze_at_zero also stops updates.
  void zero_tables();
  void freeze_at_zero();
  bool frozen() const { return frozen_; }

  void write(std::ostream& out) const;
  static DemographicEmbedding read(std::istream& in);

 private:
  bool projected(std::size_t attribute) const { return projections_[attribute].value.size() > 0; }

  std::vector<std::vector<std::string>> categories_;
  std::vector<std::unordered_map<std::string, int>> index_;
  std::vector<Parameter> tables_;       // categories x width
  std::vector<Parameter> projections_;  // pooled x width, empty when not projected
  EmbeddingDims dims_;
  bool frozen_ = false;
};

// One-hidden-layer network over two input blocks [text; demo]:
//   out = W_out relu(W_text x + W_demo d + b) + b_out
// With hidden = 0 it reduces to the linear map W_text x + W_demo d + b_out.
// The two blocks are multiplied separately so a zero demo block leaves the
// text path bit-identical to a network without one.
class BlockMlp {
 public:
  struct Cache {
    Eigen::MatrixXd text;
    Eigen::MatrixXd demo;
    Eigen::MatrixXd pre;
    Eigen::MatrixXd mask;
  };

  BlockMlp() = default;
  BlockMlp(std::size_t text_dim, std::size_t demo_dim, std::size_t hidden, std::size_t out, std::uint64_t seed);

  std::size_t text_dim() const { return text_dim_; }
  std::size_t demo_dim() const { return demo_dim_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t out_dim() const { return out_; }

  // `dropout_rng` non-null enables inverted dropout on the hidden layer.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& text, const Eigen::MatrixXd& demo, Cache* cache = nullptr,
                          double dropout = 0.0, Rng* dropout_rng = nullptr) const;
  // Accumulates parameter gradients; returns d(loss)/d(demo input).
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& d_out);

  std::vector<Parameter*> parameters();
  std::size_t parameter_count() const;
  void set_zero();

  Parameter w_text;
  Parameter w_demo;
  Parameter b_hidden;
  Parameter w_out;
  Parameter b_out;

  void write(std::ostream& out) const;
  static BlockMlp read(std::istream& in);

 private:
  std::size_t text_dim_ = 0;
  std::size_t demo_dim_ = 0;
  std::size_t hidden_ = 0;
  std::size_t out_ = 0;
};

// Snapshot / restore of parameter values (for best-epoch selection).
std::vector<Eigen::MatrixXd> snapshot(const std::vector<Parameter*>& params);
void restore(const std::vector<Parameter*>& params, const std::vector<Eigen::MatrixXd>& values);

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(std::istream& in);
void write_u64(std::ostream& out, std::uint64_t v);
std::uint64_t read_u64(std::istream& in);
void write_string(std::ostream& out, const std::string& s);
std::string read_string(std::istream& in);
void write_f64(std::ostream& out, double v);
double read_f64(std::istream& in);

}  // namespace perspectra::nn
