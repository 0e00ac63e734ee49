#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "perspectra/cli.hpp"

namespace fs = std::filesystem;
using namespace perspectra;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("perspectra_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

const std::string kData = PERSPECTRA_TEST_DATA;

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("ingest and disagree reproduce the golden outputs") {
  const fs::path d = fresh_dir("golden");
  const std::string corpus = (d / "tiny.jsonl").string(), scores = (d / "tiny.csv").string();
  const Outcome ingest = cli({"--quiet", "ingest", "--input", kData + "/tiny_corpus.jsonl", "--schema", "gender,age",
                              "--classes", "3", "--out", corpus});
  REQUIRE(ingest.code == kExitOk);
  CHECK(slurp(corpus) == slurp(kData + "/tiny_ingested_golden.jsonl"));
  REQUIRE(cli({"--quiet", "disagree", "--corpus", corpus, "--out", scores}).code == kExitOk);
  CHECK(slurp(scores) == slurp(kData + "/tiny_disagree_golden.csv"));
}

TEST_CASE("every run writes a manifest that identifies its artifacts") {
  const fs::path d = fresh_dir("manifest");
  const std::string scores = (d / "scores.csv").string();
  REQUIRE(cli({"--quiet", "disagree", "--corpus", kData + "/tiny_ingested_golden.jsonl", "--out", scores}).code ==
          kExitOk);
  const RunManifest first = manifest_from_json(slurp(scores + ".manifest.json"));
  CHECK(first.command == "disagree");
  REQUIRE(first.artifacts.size() == 1);
  CHECK(first.artifacts[0].path == scores);
  CHECK(!first.corpus_fingerprint.empty());
  CHECK(!first.started_at.empty());

  REQUIRE(cli({"--quiet", "disagree", "--corpus", kData + "/tiny_ingested_golden.jsonl", "--out", scores}).code ==
          kExitOk);
  const RunManifest second = manifest_from_json(slurp(scores + ".manifest.json"));
  CHECK(second.artifacts[0].fingerprint == first.artifacts[0].fingerprint);
  CHECK(second.config_fingerprint == first.config_fingerprint);
  CHECK(second.corpus_fingerprint == first.corpus_fingerprint);

  RunManifest m = first;
  m.seeds = {3, 9};
  const RunManifest back = manifest_from_json(manifest_to_json(m));
  CHECK(back.seeds == m.seeds);
  CHECK(back.arguments == m.arguments);
}

TEST_CASE("exit codes") {
  const fs::path d = fresh_dir("exit");
  CHECK(cli({}).code == kExitUsage);
  const Outcome unknown = cli({"frobnicate"});
  CHECK(unknown.code == kExitUsage);
  CHECK(unknown.err.find("UnknownCommand") != std::string::npos);
  CHECK(cli({"disagree", "--corpus", kData + "/tiny_ingested_golden.jsonl"}).code == kExitUsage);
  CHECK(cli({"disagree", "--bogus"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
  CHECK(cli({"train", "--corpus", "x", "--split", "y", "--out", "z", "--preset", "nope"}).code == kExitUsage);
  CHECK(cli({"--quiet", "disagree", "--corpus", (d / "missing.jsonl").string(), "--out", (d / "o.csv").string()})
            .code == kExitFailure);

  const std::string dangling = (d / "dangling.jsonl").string();
  std::ofstream(dangling) << R"({"kind":"annotation","comment_id":"q","annotator_id":"r","label":1})" << "\n";
  const Outcome bad =
      cli({"--quiet", "ingest", "--input", dangling, "--schema", "g", "--out", (d / "o.jsonl").string()});
  CHECK(bad.code == kExitFailure);
  CHECK(bad.err.find("DanglingReference") != std::string::npos);
}

TEST_CASE("end-to-end pipeline on a small synthetic corpus") {
  const fs::path d = fresh_dir("pipeline");
  auto p = [&](const std::string& name) { return (d / name).string(); };
  std::ofstream(p("spec.toml")) << "n_comments = 240\nn_annotators = 300\nannotators_per_comment = 4\nseed = 7\n";
  REQUIRE(cli({"--quiet", "synth", "--spec", p("spec.toml"), "--truth", p("truth.csv"), "--out", p("corpus.jsonl")})
              .code == kExitOk);
  REQUIRE(cli({"--quiet", "splits", "--corpus", p("corpus.jsonl"), "--n", "4", "--out", p("splits")}).code == kExitOk);
  CHECK(fs::exists(p("splits/descriptors.csv")));
  CHECK(fs::exists(p("splits/manifest.json")));

  const Outcome diag = cli({"--quiet", "diagnose", "--corpus", p("corpus.jsonl"), "--splits", p("splits"), "--seeds",
                            "1", "--hidden", "8", "--max-epochs", "3", "--encoder", "hash:16", "--out", p("gains.csv")});
  REQUIRE(diag.code == kExitOk);
  REQUIRE(cli({"--quiet", "regimes", "--gains", p("gains.csv"), "--out", p("regimes.csv")}).code == kExitOk);
  CHECK(fs::exists(p("regimes.md")));
  REQUIRE(cli({"--quiet", "report", "--gains", p("gains.csv"), "--regimes", p("regimes.csv"), "--out", p("report.md")})
              .code == kExitOk);
  CHECK(slurp(p("report.md")).find("# Demographic gain regimes") == 0);

  fs::path split_file;
  for (const auto& e : fs::directory_iterator(p("splits"))) {
    if (e.path().filename().string().rfind("split_", 0) == 0) split_file = e.path();
  }
  REQUIRE(!split_file.empty());
  REQUIRE(cli({"--quiet", "train", "--corpus", p("corpus.jsonl"), "--split", split_file.string(), "--encoder",
               "hash:16", "--preset", "mhs-toxdect", "--text-epochs", "2", "--residual-epochs", "2", "--out",
               p("model")})
              .code == kExitOk);
  REQUIRE(cli({"--quiet", "eval", "--model", p("model"), "--corpus", p("corpus.jsonl"), "--split", split_file.string(),
               "--out", p("eval.json")})
              .code == kExitOk);
  const std::string report = slurp(p("eval.json"));
  CHECK(report.find("\"auc\"") != std::string::npos);
  CHECK(fs::exists(p("eval.json.manifest.json")));
}

}  // TEST_SUITE
