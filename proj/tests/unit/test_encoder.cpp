#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "perspectra/encoder.hpp"
#include "perspectra/error.hpp"

using namespace perspectra;

namespace {

std::vector<double> golden_line(std::size_t index) {
  std::ifstream in(std::string(PERSPECTRA_TEST_DATA) + "/hash64_golden.txt");
  REQUIRE(in);
  std::string line;
  for (std::size_t i = 0; i <= index; ++i) REQUIRE(std::getline(in, line));
  std::istringstream ss(line);
  std::vector<double> v;
  double x;
  while (ss >> x) v.push_back(x);
  return v;
}

ErrorCode code_of(const auto& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::Io;
}

std::string temp_file(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << content;
  return path.string();
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("hash encoder matches the frozen golden vectors") {
  const HashingEncoder enc(64);
  const char* texts[] = {"a", "You are GREAT, you!"};
  for (std::size_t i = 0; i < 2; ++i) {
    const auto expected = golden_line(i);
    REQUIRE(expected.size() == 64);
    const TextEncoding v = encode_text(enc, texts[i]);
    for (std::size_t k = 0; k < 64; ++k) CHECK(v[static_cast<Eigen::Index>(k)] == expected[k]);
  }
}

TEST_CASE("tokenizer lower-cases and splits on punctuation") {
  const auto t = HashingEncoder::tokenize("You are GREAT, you!  snake_case 42");
  CHECK(t == std::vector<std::string>{"you", "are", "great", "you", "snake_case", "42"});
}

TEST_CASE("encodings average signed hashes over tokens") {
  const HashingEncoder enc(32);
  const TextEncoding v = encode_text(enc, "alpha beta gamma delta");
  CHECK(v.cwiseAbs().sum() <= 1.0 + 1e-12);
  CHECK(encode_text(enc, "alpha beta") == encode_text(enc, "ALpha, BETA"));
  CHECK(enc.name() == "hash:32");
  CHECK(HashingEncoder(32, 9).name() == "hash:32:9");
}

TEST_CASE("empty text and zero dimension fail") {
  const HashingEncoder enc(16);
  CHECK(code_of([&] { encode_text(enc, ""); }) == ErrorCode::EncoderFailure);
  CHECK(code_of([&] { encode_text(enc, "!!! ..."); }) == ErrorCode::EncoderFailure);
  CHECK(code_of([] { HashingEncoder bad(0); }) == ErrorCode::EncoderFailure);
}

TEST_CASE("make_encoder parses encoder specs") {
  CHECK(make_encoder("hash")->dimension() == 64);
  CHECK(make_encoder("hash:128")->dimension() == 128);
  CHECK(code_of([] { make_encoder("hash:zero"); }) == ErrorCode::BadFlag);
  CHECK(code_of([] { make_encoder("/nonexistent/vectors.tsv"); }) == ErrorCode::EncoderFailure);
}

TEST_CASE("precomputed vectors are looked up by comment id") {
  const std::string path = temp_file("perspectra_vectors.tsv", "c1\t1 2 3\nc2\t-1 0 0.5\n");
  const PrecomputedEncoder enc(path);
  CHECK(enc.dimension() == 3);
  Comment c{"c2", "anything"};
  const TextEncoding v = enc.encode(c);
  CHECK(v[2] == 0.5);
  Comment missing{"c3", "x"};
  CHECK(code_of([&] { enc.encode(missing); }) == ErrorCode::EncoderFailure);

  const std::string ragged = temp_file("perspectra_ragged.tsv", "c1\t1 2 3\nc2\t1 2\n");
  CHECK(code_of([&] { PrecomputedEncoder bad(ragged); }) == ErrorCode::EncoderFailure);
  const std::string words = temp_file("perspectra_words.tsv", "c1\t1 two 3\n");
  CHECK(code_of([&] { PrecomputedEncoder bad(words); }) == ErrorCode::EncoderFailure);
}

TEST_CASE("encoding cache holds one column per comment") {
  Corpus corpus({"group"}, 2);
  corpus.add_comment("x", "first comment");
  corpus.add_comment("y", "second one here");
  const HashingEncoder enc(16);
  const EncodingCache cache(enc, corpus);
  CHECK(cache.dimension() == 16);
  CHECK(cache.matrix().cols() == 2);
  CHECK(TextEncoding(cache.column(1)) == enc.encode(corpus.comments()[1]));
}

}  // TEST_SUITE
