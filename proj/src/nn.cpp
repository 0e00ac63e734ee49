#include "perspectra/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "perspectra/error.hpp"

namespace perspectra::nn {

Parameter::Parameter(Eigen::Index rows, Eigen::Index cols)
    : value(Eigen::MatrixXd::Zero(rows, cols)),
      grad(Eigen::MatrixXd::Zero(rows, cols)),
      m(Eigen::MatrixXd::Zero(rows, cols)),
      v(Eigen::MatrixXd::Zero(rows, cols)) {}

void Adam::step(const std::vector<Parameter*>& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Parameter* p : params) {
    p->m = beta1_ * p->m + (1.0 - beta1_) * p->grad;
    p->v = beta2_ * p->v + (1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
    p->value.array() -= lr_ * (p->m.array() / c1) / ((p->v.array() / c2).sqrt() + eps_);
  }
}

Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) out.col(j) = softmax(logits.col(j));
  return out;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double top = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - top).exp();
  return e / e.sum();
}

namespace {

Eigen::MatrixXd uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-bound, bound);
  }
  return m;
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) { return Rng::mix(seed * 0x100000001b3ULL + stream); }

}  // namespace

DemographicEmbedding::DemographicEmbedding(std::vector<std::vector<std::string>> categories, EmbeddingDims dims,
                                           std::uint64_t seed)
    : categories_(std::move(categories)), dims_(dims) {
  for (std::size_t j = 0; j < categories_.size(); ++j) {
    auto& cats = categories_[j];
    if (std::find(cats.begin(), cats.end(), kUnknownCategory) == cats.end()) cats.emplace_back(kUnknownCategory);
    std::unordered_map<std::string, int> index;
    std::size_t known = 0;
    for (std::size_t r = 0; r < cats.size(); ++r) {
      index.emplace(cats[r], static_cast<int>(r));
      if (cats[r] != kUnknownCategory) ++known;
    }
    index_.push_back(std::move(index));
    const std::size_t width = known <= 2 ? dims_.binary : dims_.categorical;
    Parameter table(static_cast<Eigen::Index>(cats.size()), static_cast<Eigen::Index>(width));
    Rng rng(derive(seed, 100 + j));
    for (Eigen::Index i = 0; i < table.value.rows(); ++i) {
      for (Eigen::Index k = 0; k < table.value.cols(); ++k) table.value(i, k) = 0.1 * rng.normal();
    }
    tables_.push_back(std::move(table));
    if (width != dims_.pooled) {
      Parameter proj(static_cast<Eigen::Index>(dims_.pooled), static_cast<Eigen::Index>(width));
      proj.value = uniform_init(proj.value.rows(), proj.value.cols(), 1.0 / std::sqrt(static_cast<double>(width)),
                                derive(seed, 200 + j));
      projections_.push_back(std::move(proj));
    } else {
      projections_.emplace_back();
    }
  }
}

DemographicEmbedding DemographicEmbedding::for_corpus(const Corpus& corpus, EmbeddingDims dims, std::uint64_t seed) {
  std::vector<std::vector<std::string>> categories;
  for (std::size_t j = 0; j < corpus.schema().size(); ++j) categories.push_back(corpus.categories(j));
  return DemographicEmbedding(std::move(categories), dims, seed);
}

std::vector<int> DemographicEmbedding::lookup(const std::vector<std::string>& demographics) const {
  if (demographics.size() != categories_.size()) {
    throw Error(ErrorCode::UnknownCategory, "demographics do not match the embedding schema");
  }
  std::vector<int> rows(demographics.size());
  for (std::size_t j = 0; j < demographics.size(); ++j) {
    auto it = index_[j].find(demographics[j]);
    if (it == index_[j].end()) {
      throw Error(ErrorCode::UnknownCategory, "category '" + demographics[j] + "' absent from embedding table");
    }
    rows[j] = it->second;
  }
  return rows;
}

Eigen::VectorXd DemographicEmbedding::attribute_vector(std::size_t attribute, int row) const {
  Eigen::VectorXd e = tables_[attribute].value.row(row).transpose();
  if (projected(attribute)) return projections_[attribute].value * e;
  return e;
}

Eigen::VectorXd DemographicEmbedding::pool(std::span<const int> rows) const {
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pooled_dim()));
  if (categories_.empty()) return pooled;
  for (std::size_t j = 0; j < rows.size(); ++j) pooled += attribute_vector(j, rows[j]);
  return pooled / static_cast<double>(rows.size());
}

Eigen::MatrixXd DemographicEmbedding::forward(const std::vector<const std::vector<int>*>& batch) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(pooled_dim()), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) out.col(static_cast<Eigen::Index>(b)) = pool(*batch[b]);
  return out;
}

void DemographicEmbedding::backward(const std::vector<const std::vector<int>*>& batch,
                                    const Eigen::MatrixXd& d_pooled) {
  if (frozen_ || categories_.empty()) return;
  const double scale = 1.0 / static_cast<double>(categories_.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Eigen::VectorXd g = d_pooled.col(static_cast<Eigen::Index>(b)) * scale;
    const auto& rows = *batch[b];
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (projected(j)) {
        const Eigen::VectorXd e = tables_[j].value.row(rows[j]).transpose();
        projections_[j].grad += g * e.transpose();
        tables_[j].grad.row(rows[j]) += (projections_[j].value.transpose() * g).transpose();
      } else {
        tables_[j].grad.row(rows[j]) += g.transpose();
      }
    }
  }
}

std::vector<Parameter*> DemographicEmbedding::parameters() {
  std::vector<Parameter*> out;
  if (frozen_) return out;
  for (auto& t : tables_) out.push_back(&t);
  for (auto& p : projections_) {
    if (p.value.size() > 0) out.push_back(&p);
  }
  return out;
}

std::size_t DemographicEmbedding::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tables_) n += t.size();
  for (const auto& p : projections_) n += p.size();
  return n;
}

void DemographicEmbedding::zero_tables() {
  for (auto& t : tables_) t.value.setZero();
}

void DemographicEmbedding::freeze_at_zero() {
  zero_tables();
  frozen_ = true;
}

BlockMlp::BlockMlp(std::size_t text_dim, std::size_t demo_dim, std::size_t hidden, std::size_t out,
                   std::uint64_t seed)
    : text_dim_(text_dim), demo_dim_(demo_dim), hidden_(hidden), out_(out) {
  const auto first = static_cast<Eigen::Index>(hidden_ > 0 ? hidden_ : out_);
  const auto t = static_cast<Eigen::Index>(text_dim_);
  const auto d = static_cast<Eigen::Index>(demo_dim_);
  w_text = Parameter(first, t);
  if (t > 0) w_text.value = uniform_init(first, t, 1.0 / std::sqrt(static_cast<double>(t)), derive(seed, 1));
  w_demo = Parameter(first, d);
  if (d > 0) w_demo.value = uniform_init(first, d, 1.0 / std::sqrt(static_cast<double>(d)), derive(seed, 2));
  if (hidden_ > 0) {
    b_hidden = Parameter(first, 1);
    const auto h = static_cast<Eigen::Index>(hidden_);
    w_out = Parameter(static_cast<Eigen::Index>(out_), h);
    w_out.value = uniform_init(w_out.value.rows(), h, 1.0 / std::sqrt(static_cast<double>(h)), derive(seed, 3));
  }
  b_out = Parameter(static_cast<Eigen::Index>(out_), 1);
}

Eigen::MatrixXd BlockMlp::forward(const Eigen::MatrixXd& text, const Eigen::MatrixXd& demo, Cache* cache,
                                  double dropout, Rng* dropout_rng) const {
  const Eigen::Index batch = text.cols();
  Eigen::MatrixXd pre = w_text.value * text;
  if (demo_dim_ > 0) pre += w_demo.value * demo;
  if (hidden_ == 0) {
    pre.colwise() += b_out.value.col(0);
    if (cache) {
      cache->text = text;
      cache->demo = demo;
    }
    return pre;
  }
  pre.colwise() += b_hidden.value.col(0);
  Eigen::MatrixXd act = pre.cwiseMax(0.0);
  Eigen::MatrixXd mask;
  if (dropout_rng && dropout > 0.0) {
    mask.resize(act.rows(), batch);
    const double keep = 1.0 - dropout;
    for (Eigen::Index j = 0; j < batch; ++j) {
      for (Eigen::Index i = 0; i < act.rows(); ++i) mask(i, j) = dropout_rng->bernoulli(keep) ? 1.0 / keep : 0.0;
    }
    act = act.cwiseProduct(mask);
  }
  Eigen::MatrixXd out = w_out.value * act;
  out.colwise() += b_out.value.col(0);
  if (cache) {
    cache->text = text;
    cache->demo = demo;
    cache->pre = std::move(pre);
    cache->mask = std::move(mask);
  }
  return out;
}

Eigen::MatrixXd BlockMlp::backward(const Cache& cache, const Eigen::MatrixXd& d_out) {
  Eigen::MatrixXd d_first;
  if (hidden_ == 0) {
    b_out.grad.col(0) += d_out.rowwise().sum();
    d_first = d_out;
  } else {
    Eigen::MatrixXd act = cache.pre.cwiseMax(0.0);
    if (cache.mask.size() > 0) act = act.cwiseProduct(cache.mask);
    w_out.grad += d_out * act.transpose();
    b_out.grad.col(0) += d_out.rowwise().sum();
    Eigen::MatrixXd d_act = w_out.value.transpose() * d_out;
    if (cache.mask.size() > 0) d_act = d_act.cwiseProduct(cache.mask);
    d_first = d_act.array() * (cache.pre.array() > 0.0).cast<double>();
    b_hidden.grad.col(0) += d_first.rowwise().sum();
  }
  if (text_dim_ > 0) w_text.grad += d_first * cache.text.transpose();
  if (demo_dim_ == 0) return Eigen::MatrixXd(0, d_out.cols());
  w_demo.grad += d_first * cache.demo.transpose();
  return w_demo.value.transpose() * d_first;
}

std::vector<Parameter*> BlockMlp::parameters() {
  std::vector<Parameter*> out;
  for (Parameter* p : {&w_text, &w_demo, &b_hidden, &w_out, &b_out}) {
    if (p->value.size() > 0) out.push_back(p);
  }
  return out;
}

std::size_t BlockMlp::parameter_count() const {
  return w_text.size() + w_demo.size() + b_hidden.size() + w_out.size() + b_out.size();
}

void BlockMlp::set_zero() {
  for (Parameter* p : parameters()) p->value.setZero();
}

std::vector<Eigen::MatrixXd> snapshot(const std::vector<Parameter*>& params) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore(const std::vector<Parameter*>& params, const std::vector<Eigen::MatrixXd>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw Error(ErrorCode::MalformedRecord, "truncated model file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  write_u64(out, bits);
}

double read_f64(std::istream& in) {
  const std::uint64_t bits = read_u64(in);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  if (n > (1u << 30)) throw Error(ErrorCode::MalformedRecord, "corrupt string length in model file");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw Error(ErrorCode::MalformedRecord, "truncated model file");
  return s;
}

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  write_u64(out, static_cast<std::uint64_t>(m.rows()));
  write_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) write_f64(out, m(i, j));
  }
}

Eigen::MatrixXd read_matrix(std::istream& in) {
  const auto rows = static_cast<Eigen::Index>(read_u64(in));
  const auto cols = static_cast<Eigen::Index>(read_u64(in));
  if (rows < 0 || cols < 0 || rows * cols > (1 << 28)) throw Error(ErrorCode::MalformedRecord, "corrupt matrix shape");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = read_f64(in);
  }
  return m;
}

namespace {

Parameter read_parameter(std::istream& in) {
  Parameter p;
  p.value = read_matrix(in);
  p.grad = Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols());
  p.m = p.grad;
  p.v = p.grad;
  return p;
}

}  // namespace

void DemographicEmbedding::write(std::ostream& out) const {
  write_u64(out, dims_.categorical);
  write_u64(out, dims_.binary);
  write_u64(out, dims_.pooled);
  write_u64(out, frozen_ ? 1 : 0);
  write_u64(out, categories_.size());
  for (std::size_t j = 0; j < categories_.size(); ++j) {
    write_u64(out, categories_[j].size());
    for (const auto& c : categories_[j]) write_string(out, c);
    write_matrix(out, tables_[j].value);
    write_matrix(out, projections_[j].value);
  }
}

DemographicEmbedding DemographicEmbedding::read(std::istream& in) {
  DemographicEmbedding e;
  e.dims_.categorical = read_u64(in);
  e.dims_.binary = read_u64(in);
  e.dims_.pooled = read_u64(in);
  e.frozen_ = read_u64(in) != 0;
  const std::uint64_t attrs = read_u64(in);
  for (std::uint64_t j = 0; j < attrs; ++j) {
    const std::uint64_t n = read_u64(in);
    std::vector<std::string> cats;
    std::unordered_map<std::string, int> index;
    for (std::uint64_t r = 0; r < n; ++r) {
      cats.push_back(read_string(in));
      index.emplace(cats.back(), static_cast<int>(r));
    }
    e.categories_.push_back(std::move(cats));
    e.index_.push_back(std::move(index));
    e.tables_.push_back(read_parameter(in));
    e.projections_.push_back(read_parameter(in));
  }
  return e;
}

void BlockMlp::write(std::ostream& out) const {
  write_u64(out, text_dim_);
  write_u64(out, demo_dim_);
  write_u64(out, hidden_);
  write_u64(out, out_);
  for (const Parameter* p : {&w_text, &w_demo, &b_hidden, &w_out, &b_out}) write_matrix(out, p->value);
}

BlockMlp BlockMlp::read(std::istream& in) {
  BlockMlp m;
  m.text_dim_ = read_u64(in);
  m.demo_dim_ = read_u64(in);
  m.hidden_ = read_u64(in);
  m.out_ = read_u64(in);
  for (Parameter* p : {&m.w_text, &m.w_demo, &m.b_hidden, &m.w_out, &m.b_out}) *p = read_parameter(in);
  return m;
}

}  // namespace perspectra::nn
