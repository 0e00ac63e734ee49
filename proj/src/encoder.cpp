#include "perspectra/encoder.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "perspectra/error.hpp"
#include "perspectra/fingerprint.hpp"

namespace perspectra {

HashingEncoder::HashingEncoder(std::size_t dimension, std::uint64_t salt) : dimension_(dimension), salt_(salt) {
  if (dimension_ == 0) throw Error(ErrorCode::EncoderFailure, "hashing encoder needs a positive dimension");
}

std::vector<std::string> HashingEncoder::tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char ch : text) {
    if (std::isalnum(ch) || ch == '_' || ch >= 0x80) {
      current.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

TextEncoding HashingEncoder::encode(const Comment& comment) const {
  if (comment.text.empty()) throw Error(ErrorCode::EncoderFailure, "cannot encode empty text");
  const auto tokens = tokenize(comment.text);
  if (tokens.empty()) throw Error(ErrorCode::EncoderFailure, "text has no word tokens");
  TextEncoding v = TextEncoding::Zero(static_cast<Eigen::Index>(dimension_));
  const double weight = 1.0 / static_cast<double>(tokens.size());
  for (const auto& token : tokens) {
    Fingerprint fp;
    fp.add(salt_).add(token);
    const std::uint64_t h = fp.value();
    const auto bucket = static_cast<Eigen::Index>(h % dimension_);
    v[bucket] += (h >> 63) ? -weight : weight;
  }
  return v;
}

std::string HashingEncoder::name() const {
  return "hash:" + std::to_string(dimension_) + (salt_ ? ":" + std::to_string(salt_) : "");
}

PrecomputedEncoder::PrecomputedEncoder(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::EncoderFailure, "cannot open embedding file '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorCode::EncoderFailure, path + ":" + std::to_string(line_no) + ": missing tab separator");
    }
    std::string id = line.substr(0, tab);
    std::istringstream values(line.substr(tab + 1));
    std::vector<double> parsed;
    double x;
    while (values >> x) parsed.push_back(x);
    if (!values.eof()) {
      throw Error(ErrorCode::EncoderFailure, path + ":" + std::to_string(line_no) + ": non-numeric value");
    }
    if (dimension_ == 0) dimension_ = parsed.size();
    if (parsed.empty() || parsed.size() != dimension_) {
      throw Error(ErrorCode::EncoderFailure, path + ":" + std::to_string(line_no) + ": inconsistent vector width");
    }
    TextEncoding v(static_cast<Eigen::Index>(dimension_));
    for (std::size_t k = 0; k < dimension_; ++k) {
      if (!std::isfinite(parsed[k])) {
        throw Error(ErrorCode::EncoderFailure, path + ":" + std::to_string(line_no) + ": non-finite value");
      }
      v[static_cast<Eigen::Index>(k)] = parsed[k];
    }
    vectors_[std::move(id)] = std::move(v);
  }
  if (vectors_.empty()) throw Error(ErrorCode::EncoderFailure, "embedding file '" + path + "' is empty");
  name_ = "vectors:" + file_fingerprint(path);
}

TextEncoding PrecomputedEncoder::encode(const Comment& comment) const {
  auto it = vectors_.find(comment.id);
  if (it == vectors_.end()) throw Error(ErrorCode::EncoderFailure, "no precomputed vector for '" + comment.id + "'");
  return it->second;
}

std::unique_ptr<TextEncoder> make_encoder(const std::string& spec) {
  if (spec == "hash") return std::make_unique<HashingEncoder>();
  if (spec.rfind("hash:", 0) == 0) {
    const std::string rest = spec.substr(5);
    char* end = nullptr;
    const unsigned long dim = std::strtoul(rest.c_str(), &end, 10);
    if (end == rest.c_str() || dim == 0) throw Error(ErrorCode::BadFlag, "bad hashing encoder spec '" + spec + "'");
    std::uint64_t salt = 0;
    if (*end == ':') salt = std::strtoull(end + 1, nullptr, 10);
    return std::make_unique<HashingEncoder>(dim, salt);
  }
  return std::make_unique<PrecomputedEncoder>(spec);
}

TextEncoding encode_text(const TextEncoder& encoder, std::string_view text) {
  return encoder.encode(Comment{"", std::string(text)});
}

namespace {

bool load_cached(const std::filesystem::path& path, Eigen::MatrixXd& out, std::size_t rows, std::size_t cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::uint64_t r = 0, c = 0;
  in.read(reinterpret_cast<char*>(&r), sizeof r);
  in.read(reinterpret_cast<char*>(&c), sizeof c);
  if (!in || r != rows || c != cols) return false;
  out.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(rows * cols * sizeof(double)));
  return static_cast<bool>(in);
}

void store_cached(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::error_code ec;
  std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) return;
  const std::uint64_t r = static_cast<std::uint64_t>(m.rows());
  const std::uint64_t c = static_cast<std::uint64_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&r), sizeof r);
  out.write(reinterpret_cast<const char*>(&c), sizeof c);
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(r * c * sizeof(double)));
}

}  // namespace

EncodingCache::EncodingCache(const TextEncoder& encoder, const Corpus& corpus) {
  const std::size_t dim = encoder.dimension();
  const std::size_t n = corpus.comments().size();
  std::filesystem::path cache_path;
  if (const char* dir = std::getenv("PERSPECTRA_CACHE_DIR"); dir && *dir) {
    const std::string key = Fingerprint().add(encoder.name()).add(corpus.fingerprint()).hex();
    cache_path = std::filesystem::path(dir) / ("enc-" + key + ".bin");
    if (load_cached(cache_path, encodings_, dim, n)) return;
  }
  encodings_.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(n));
  for (std::size_t c = 0; c < n; ++c) {
    TextEncoding v = encoder.encode(corpus.comments()[c]);
    if (static_cast<std::size_t>(v.size()) != dim || !v.allFinite()) {
      throw Error(ErrorCode::EncoderFailure, "encoder returned a malformed vector for '" + corpus.comments()[c].id + "'");
    }
    encodings_.col(static_cast<Eigen::Index>(c)) = v;
  }
  if (!cache_path.empty()) store_cached(cache_path, encodings_);
}

}  // namespace perspectra
