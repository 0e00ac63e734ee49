#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "perspectra/corpus.hpp"

namespace perspectra {

// Frozen text representation h for one comment.
using TextEncoding = Eigen::VectorXd;

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::size_t dimension() const = 0;
  // Deterministic; throws Error(EncoderFailure) when the comment cannot be
  // encoded.
  virtual TextEncoding encode(const Comment& comment) const = 0;
  // Stable identity used in model fingerprints and cache keys.
  virtual std::string name() const = 0;
};

// Signed feature hashing of lower-cased word tokens, averaged over tokens.
class HashingEncoder final : public TextEncoder {
 public:
  explicit HashingEncoder(std::size_t dimension = 64, std::uint64_t salt = 0);

  std::size_t dimension() const override { return dimension_; }
  TextEncoding encode(const Comment& comment) const override;
  std::string name() const override;

  static std::vector<std::string> tokenize(std::string_view text);

 private:
  std::size_t dimension_;
  std::uint64_t salt_;
};

// Precomputed vectors keyed by comment id; one line per comment:
// `<comment_id>\t<v1> <v2> ... <vD>`.
class PrecomputedEncoder final : public TextEncoder {
 public:
  explicit PrecomputedEncoder(const std::string& path);

  std::size_t dimension() const override { return dimension_; }
  TextEncoding encode(const Comment& comment) const override;
  std::string name() const override { return name_; }

 private:
  std::size_t dimension_ = 0;
  std::string name_;
  std::unordered_map<std::string, TextEncoding> vectors_;
};

// `hash`, `hash:<dim>` or a path to a precomputed-vector file.
std::unique_ptr<TextEncoder> make_encoder(const std::string& spec);

TextEncoding encode_text(const TextEncoder& encoder, std::string_view text);

// Column c holds the encoding of corpus comment c. When the environment
// variable PERSPECTRA_CACHE_DIR is set, encodings are memoized on disk keyed
// by encoder name and corpus fingerprint.
class EncodingCache {
 public:
  EncodingCache(const TextEncoder& encoder, const Corpus& corpus);

  const Eigen::MatrixXd& matrix() const { return encodings_; }
  std::size_t dimension() const { return static_cast<std::size_t>(encodings_.rows()); }
  auto column(std::size_t comment) const { return encodings_.col(static_cast<Eigen::Index>(comment)); }

 private:
  Eigen::MatrixXd encodings_;
};

}  // namespace perspectra
