#include "perspectra/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "perspectra/error.hpp"

namespace perspectra {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

// Drops a trailing comment that is not inside a quoted string.
std::string strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return std::string(line.substr(0, i));
  }
  return std::string(line);
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

std::vector<std::string> split_list(const std::string& raw) {
  std::string body = trim(raw);
  if (body.size() >= 2 && body.front() == '[' && body.back() == ']') body = body.substr(1, body.size() - 2);
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (char c : body) {
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      out.push_back(unquote(trim(cur)));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  std::string last = trim(cur);
  if (!last.empty()) out.push_back(unquote(last));
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw Error(ErrorCode::BadConfig, key + ": not a number: " + v);
  return out;
}

long parse_long(const std::string& key, const std::string& v) {
  long out = 0;
  auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw Error(ErrorCode::BadConfig, key + ": not an integer: " + v);
  return out;
}

std::size_t parse_size(const std::string& key, long v) {
  if (v < 0) throw Error(ErrorCode::BadConfig, key + ": must be non-negative");
  return static_cast<std::size_t>(v);
}

void reject_unknown(const ConfigFile& config, const std::unordered_set<std::string>& known, const std::string& what) {
  for (const auto& [k, v] : config.values()) {
    if (!known.count(k)) throw Error(ErrorCode::BadConfig, "unknown " + what + " key: " + k);
  }
}

void apply_dims(const ConfigFile& c, nn::EmbeddingDims& dims) {
  if (c.has("embedding_categorical")) dims.categorical = parse_size("embedding_categorical", c.get_int("embedding_categorical"));
  if (c.has("embedding_binary")) dims.binary = parse_size("embedding_binary", c.get_int("embedding_binary"));
  if (c.has("embedding_pooled")) dims.pooled = parse_size("embedding_pooled", c.get_int("embedding_pooled"));
}

}  // namespace

ConfigFile ConfigFile::parse(std::string_view text, const std::string& origin) {
  ConfigFile out;
  out.origin_ = origin;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    auto where = [&] { return origin + ":" + std::to_string(lineno); };
    if (s.front() == '[') {
      if (s.back() != ']') throw Error(ErrorCode::BadConfig, where() + ": unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty()) throw Error(ErrorCode::BadConfig, where() + ": empty section name");
      continue;
    }
    auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::BadConfig, where() + ": expected key = value");
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (key.empty() || value.empty()) throw Error(ErrorCode::BadConfig, where() + ": empty key or value");
    if (value.front() == '"' && (value.size() < 2 || value.back() != '"'))
      throw Error(ErrorCode::BadConfig, where() + ": unterminated string");
    if (value.front() == '[' && value.back() != ']')
      throw Error(ErrorCode::BadConfig, where() + ": unterminated list");
    std::string full = section.empty() ? key : section + "." + key;
    if (out.values_.count(full)) throw Error(ErrorCode::BadConfig, where() + ": duplicate key " + full);
    out.values_[full] = value.front() == '"' ? unquote(value) : value;
  }
  return out;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

std::string ConfigFile::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorCode::BadConfig, origin_ + ": missing key " + key);
  return it->second;
}

double ConfigFile::get_double(const std::string& key) const { return parse_double(key, get_string(key)); }
long ConfigFile::get_int(const std::string& key) const { return parse_long(key, get_string(key)); }

bool ConfigFile::get_bool(const std::string& key) const {
  std::string v = get_string(key);
  if (v == "true") return true;
  if (v == "false") return false;
  throw Error(ErrorCode::BadConfig, key + ": expected true or false, got " + v);
}

std::vector<double> ConfigFile::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get_string(key))) out.push_back(parse_double(key, item));
  return out;
}

std::vector<std::string> ConfigFile::get_string_list(const std::string& key) const {
  return split_list(get_string(key));
}

ConfigFile ConfigFile::section(const std::string& prefix) const {
  ConfigFile out;
  out.origin_ = origin_ + "[" + prefix + "]";
  std::string p = prefix + ".";
  for (const auto& [k, v] : values_) {
    if (k.compare(0, p.size(), p) == 0) out.values_[k.substr(p.size())] = v;
  }
  return out;
}

GateConfig gate_config_from(const ConfigFile& c, GateConfig base) {
  reject_unknown(c,
                 {"preset", "ablation", "tau", "temperature", "rho", "lambda_soft", "force_alpha_one",
                  "disable_gate_weighting", "disable_soft_loss", "text_epochs", "residual_epochs", "dropout",
                  "learning_rate", "batch_size", "text_hidden", "residual_hidden", "embedding_categorical",
                  "embedding_binary", "embedding_pooled", "seed"},
                 "gate config");
  GateConfig g = c.has("preset") ? gate_preset(c.get_string("preset")) : base;
  if (c.has("tau")) g.tau = c.get_double("tau");
  if (c.has("temperature")) g.temperature = c.get_double("temperature");
  if (c.has("rho")) g.rho = c.get_double("rho");
  if (c.has("lambda_soft")) g.lambda_soft = c.get_double("lambda_soft");
  if (c.has("force_alpha_one")) g.force_alpha_one = c.get_bool("force_alpha_one");
  if (c.has("disable_gate_weighting")) g.disable_gate_weighting = c.get_bool("disable_gate_weighting");
  if (c.has("disable_soft_loss")) g.disable_soft_loss = c.get_bool("disable_soft_loss");
  if (c.has("text_epochs")) g.text_epochs = static_cast<int>(c.get_int("text_epochs"));
  if (c.has("residual_epochs")) g.residual_epochs = static_cast<int>(c.get_int("residual_epochs"));
  if (c.has("dropout")) g.dropout = c.get_double("dropout");
  if (c.has("learning_rate")) g.learning_rate = c.get_double("learning_rate");
  if (c.has("batch_size")) g.batch_size = parse_size("batch_size", c.get_int("batch_size"));
  if (c.has("text_hidden")) g.text_hidden = parse_size("text_hidden", c.get_int("text_hidden"));
  if (c.has("residual_hidden")) g.residual_hidden = parse_size("residual_hidden", c.get_int("residual_hidden"));
  apply_dims(c, g.dims);
  if (c.has("seed")) g.seed = static_cast<std::uint64_t>(parse_size("seed", c.get_int("seed")));
  // The ablation applies last so that it wins over explicit field values.
  if (c.has("ablation")) g = ablation_preset(c.get_string("ablation"), g);
  g.validate();
  return g;
}

namespace {

const std::unordered_set<std::string> kSynthKeys{
    "n_comments", "annotators_per_comment", "n_annotators", "schema", "effect_weights", "beta_text",
    "beta_demo", "annotator_bias", "noise", "conditional", "score_min", "score_spread", "tokens_per_comment",
    "vocabulary", "seed", "ambiguous_fraction", "low_min", "low_max", "high_min", "high_max"};

void apply_synth(const ConfigFile& c, SyntheticSpec& s) {
  if (c.has("n_comments")) s.n_comments = parse_size("n_comments", c.get_int("n_comments"));
  if (c.has("annotators_per_comment"))
    s.annotators_per_comment = parse_size("annotators_per_comment", c.get_int("annotators_per_comment"));
  if (c.has("n_annotators")) s.n_annotators = parse_size("n_annotators", c.get_int("n_annotators"));
  if (c.has("schema")) {
    s.schema.clear();
    for (const auto& item : c.get_string_list("schema")) {
      auto colon = item.find(':');
      if (colon == std::string::npos) throw Error(ErrorCode::BadConfig, "schema entries are name:categories, got " + item);
      s.schema.push_back({item.substr(0, colon), parse_size("schema", parse_long("schema", item.substr(colon + 1)))});
    }
  }
  if (c.has("effect_weights")) s.effect_weights = c.get_double_list("effect_weights");
  if (c.has("beta_text")) s.beta_text = c.get_double("beta_text");
  if (c.has("beta_demo")) s.beta_demo = c.get_double("beta_demo");
  if (c.has("annotator_bias")) s.annotator_bias = c.get_double("annotator_bias");
  if (c.has("noise")) s.noise = c.get_double("noise");
  if (c.has("conditional")) s.conditional = c.get_bool("conditional");
  if (c.has("score_min")) s.score_min = c.get_double("score_min");
  if (c.has("score_spread")) s.score_spread = c.get_double("score_spread");
  if (c.has("tokens_per_comment")) s.tokens_per_comment = parse_size("tokens_per_comment", c.get_int("tokens_per_comment"));
  if (c.has("vocabulary")) s.vocabulary = parse_size("vocabulary", c.get_int("vocabulary"));
  if (c.has("seed")) s.seed = static_cast<std::uint64_t>(parse_size("seed", c.get_int("seed")));
  if (c.has("ambiguous_fraction")) s.ambiguity.ambiguous_fraction = c.get_double("ambiguous_fraction");
  if (c.has("low_min")) s.ambiguity.low_min = c.get_double("low_min");
  if (c.has("low_max")) s.ambiguity.low_max = c.get_double("low_max");
  if (c.has("high_min")) s.ambiguity.high_min = c.get_double("high_min");
  if (c.has("high_max")) s.ambiguity.high_max = c.get_double("high_max");
}

void apply_partition(const ConfigFile& c, PartitionSpec& p, const std::string& name) {
  reject_unknown(c, {"n_comments", "n_annotators", "ambiguous_fraction", "careless_fraction"}, name);
  if (c.has("n_comments")) p.n_comments = parse_size("n_comments", c.get_int("n_comments"));
  if (c.has("n_annotators")) p.n_annotators = parse_size("n_annotators", c.get_int("n_annotators"));
  if (c.has("ambiguous_fraction")) p.ambiguous_fraction = c.get_double("ambiguous_fraction");
  if (c.has("careless_fraction")) p.careless_fraction = c.get_double("careless_fraction");
}

}  // namespace

SyntheticSpec synthetic_spec_from(const ConfigFile& c, SyntheticSpec base) {
  reject_unknown(c, kSynthKeys, "synth spec");
  apply_synth(c, base);
  base.validate();
  return base;
}

PartitionedSpec partitioned_spec_from(const ConfigFile& c, PartitionedSpec base) {
  std::unordered_set<std::string> known = kSynthKeys;
  for (const char* k : {"holdout_attribute", "holdout_categories", "overlap"}) known.insert(k);
  ConfigFile top;
  for (const auto& [k, v] : c.values()) {
    auto dot = k.find('.');
    if (dot == std::string::npos) {
      top.set(k, v);
      continue;
    }
    std::string sec = k.substr(0, dot);
    if (sec != "train" && sec != "val" && sec != "test") throw Error(ErrorCode::BadConfig, "unknown section: " + sec);
  }
  reject_unknown(top, known, "partitioned spec");
  apply_synth(top, base.base);
  apply_partition(c.section("train"), base.train, "[train]");
  apply_partition(c.section("val"), base.val, "[val]");
  apply_partition(c.section("test"), base.test, "[test]");
  if (top.has("holdout_attribute")) base.holdout_attribute = parse_size("holdout_attribute", top.get_int("holdout_attribute"));
  if (top.has("holdout_categories"))
    base.holdout_categories = parse_size("holdout_categories", top.get_int("holdout_categories"));
  if (top.has("overlap")) base.overlap = top.get_double("overlap");
  base.validate();
  return base;
}

SweepGrid sweep_grid_from(const ConfigFile& c, SweepGrid base) {
  reject_unknown(c, {"train_careless", "test_ambiguity", "train_sizes", "overlaps", "replicates"}, "sweep grid");
  if (c.has("train_careless")) base.train_careless = c.get_double_list("train_careless");
  if (c.has("test_ambiguity")) base.test_ambiguity = c.get_double_list("test_ambiguity");
  if (c.has("train_sizes")) {
    base.train_sizes.clear();
    for (const auto& item : c.get_string_list("train_sizes"))
      base.train_sizes.push_back(parse_size("train_sizes", parse_long("train_sizes", item)));
  }
  if (c.has("overlaps")) base.overlaps = c.get_double_list("overlaps");
  if (c.has("replicates")) base.replicates = parse_size("replicates", c.get_int("replicates"));
  if (base.train_careless.empty() || base.test_ambiguity.empty() || base.train_sizes.empty() ||
      base.overlaps.empty() || base.replicates == 0)
    throw Error(ErrorCode::BadConfig, "sweep grid has an empty axis");
  return base;
}

std::string gate_config_to_toml(const GateConfig& g) {
  std::ostringstream o;
  o.precision(17);
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "tau = " << g.tau << "\n"
    << "temperature = " << g.temperature << "\n"
    << "rho = " << g.rho << "\n"
    << "lambda_soft = " << g.lambda_soft << "\n"
    << "force_alpha_one = " << b(g.force_alpha_one) << "\n"
    << "disable_gate_weighting = " << b(g.disable_gate_weighting) << "\n"
    << "disable_soft_loss = " << b(g.disable_soft_loss) << "\n"
    << "text_epochs = " << g.text_epochs << "\n"
    << "residual_epochs = " << g.residual_epochs << "\n"
    << "dropout = " << g.dropout << "\n"
    << "learning_rate = " << g.learning_rate << "\n"
    << "batch_size = " << g.batch_size << "\n"
    << "text_hidden = " << g.text_hidden << "\n"
    << "residual_hidden = " << g.residual_hidden << "\n"
    << "embedding_categorical = " << g.dims.categorical << "\n"
    << "embedding_binary = " << g.dims.binary << "\n"
    << "embedding_pooled = " << g.dims.pooled << "\n"
    << "seed = " << g.seed << "\n";
  return o.str();
}

}  // namespace perspectra
