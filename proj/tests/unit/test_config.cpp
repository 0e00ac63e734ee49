#include <doctest.h>

#include "perspectra/config.hpp"
#include "perspectra/error.hpp"

using namespace perspectra;

namespace {

ErrorCode code_of(const auto& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::Io;
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("parses scalars, strings, lists and sections") {
  const ConfigFile c = ConfigFile::parse(R"(
# leading comment
tau = 0.6   # trailing
name = "a # not a comment"
list = [0.2, 0.45]
names = ["x", "y,z"]
[train]
n_comments = 40
)");
  CHECK(c.get_double("tau") == 0.6);
  CHECK(c.get_string("name") == "a # not a comment");
  CHECK(c.get_double_list("list") == std::vector<double>{0.2, 0.45});
  CHECK(c.get_string_list("names") == std::vector<std::string>{"x", "y,z"});
  CHECK(c.get_int("train.n_comments") == 40);
  CHECK(c.section("train").get_int("n_comments") == 40);
}

TEST_CASE("malformed input is BadConfig") {
  CHECK(code_of([] { ConfigFile::parse("key"); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { ConfigFile::parse("[open\n"); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { ConfigFile::parse("a = 1\na = 2\n"); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { ConfigFile::parse("a = \"x\n"); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { ConfigFile::parse("a = [1, 2\n"); }) == ErrorCode::BadConfig);
  const ConfigFile c = ConfigFile::parse("x = 1.5\nb = yes\n");
  CHECK(code_of([&] { c.get_int("x"); }) == ErrorCode::BadConfig);
  CHECK(code_of([&] { c.get_bool("b"); }) == ErrorCode::BadConfig);
  CHECK(code_of([&] { c.get_string("missing"); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { ConfigFile::load("/nonexistent/perspectra.toml"); }) == ErrorCode::Io);
}

TEST_CASE("gate config from presets, overrides and ablations") {
  const GateConfig g = gate_config_from(ConfigFile::parse("preset = \"mhs-toxdect\"\ntau = 0.3\n"));
  CHECK(g.rho == 0.40);
  CHECK(g.temperature == 0.12);
  CHECK(g.tau == 0.3);
  const GateConfig a = gate_config_from(ConfigFile::parse("preset = \"mhs-bertweet\"\nablation = \"no-gate\"\nrho = 0.9\n"));
  CHECK(a.force_alpha_one);
  CHECK(a.effective_rho() == 0.0);
  CHECK(code_of([] { gate_config_from(ConfigFile::parse("colour = 1\n")); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { gate_config_from(ConfigFile::parse("preset = \"nope\"\n")); }) == ErrorCode::UnknownPreset);
}

TEST_CASE("gate config TOML round trip") {
  GateConfig g = gate_preset("popquorn-bertweet");
  g.seed = 42;
  g.batch_size = 17;
  const GateConfig back = gate_config_from(ConfigFile::parse(gate_config_to_toml(g)));
  CHECK(back.fingerprint() == g.fingerprint());
}

TEST_CASE("synthetic and partitioned specs") {
  const SyntheticSpec s = synthetic_spec_from(ConfigFile::parse("n_comments = 30\nschema = [\"g:2\", \"h:5\"]\neffect_weights = [1, 2]\n"));
  CHECK(s.n_comments == 30);
  REQUIRE(s.schema.size() == 2);
  CHECK(s.schema[1].name == "h");
  CHECK(s.schema[1].categories == 5);
  CHECK(code_of([] { synthetic_spec_from(ConfigFile::parse("schema = [\"g\"]\n")); }) == ErrorCode::BadConfig);

  const PartitionedSpec p = partitioned_spec_from(ConfigFile::parse(
      "overlap = 0.5\n[train]\nn_comments = 90\ncareless_fraction = 0.25\n[test]\nambiguous_fraction = 0.7\n"));
  CHECK(p.overlap == 0.5);
  CHECK(p.train.n_comments == 90);
  CHECK(p.train.careless_fraction == 0.25);
  CHECK(p.test.ambiguous_fraction == 0.7);
  CHECK(code_of([] { partitioned_spec_from(ConfigFile::parse("[holdout]\nx = 1\n")); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { partitioned_spec_from(ConfigFile::parse("[train]\nsize = 1\n")); }) == ErrorCode::BadConfig);
}

TEST_CASE("sweep grid") {
  const SweepGrid g = sweep_grid_from(ConfigFile::parse("train_careless = [0, 0.5]\ntrain_sizes = [100]\nreplicates = 2\n"));
  CHECK(g.train_careless == std::vector<double>{0.0, 0.5});
  CHECK(g.train_sizes == std::vector<std::size_t>{100});
  CHECK(g.replicates == 2);
  CHECK(g.test_ambiguity == SweepGrid{}.test_ambiguity);
  CHECK(code_of([] { sweep_grid_from(ConfigFile::parse("replicates = 0\n")); }) == ErrorCode::BadConfig);
  CHECK(code_of([] { sweep_grid_from(ConfigFile::parse("train_ambiguity = [0.1]\n")); }) == ErrorCode::BadConfig);
}

}  // TEST_SUITE
