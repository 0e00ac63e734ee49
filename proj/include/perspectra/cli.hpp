#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace perspectra {

struct ArtifactRecord {
  std::string path;
  std::string fingerprint;  // content hash of the written file
};

// Written beside every command's outputs as JSON. Everything except the
// timestamps is a pure function of the inputs.
struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  std::string config_fingerprint;
  std::string corpus_fingerprint;
  std::vector<std::uint64_t> seeds;
  std::string started_at;
  std::string finished_at;
  std::vector<ArtifactRecord> artifacts;
};

std::string manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const std::string& text);

// Exit codes: 0 success, 1 bad command line or configuration, 2 runtime
// failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace perspectra
