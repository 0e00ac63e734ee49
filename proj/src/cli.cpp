#include "perspectra/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "perspectra/config.hpp"
#include "perspectra/corpus.hpp"
#include "perspectra/diagnostic.hpp"
#include "perspectra/disagreement.hpp"
#include "perspectra/encoder.hpp"
#include "perspectra/error.hpp"
#include "perspectra/evaluate.hpp"
#include "perspectra/fingerprint.hpp"
#include "perspectra/plots.hpp"
#include "perspectra/regimes.hpp"
#include "perspectra/residual.hpp"
#include "perspectra/splitter.hpp"
#include "perspectra/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace perspectra {

std::string manifest_to_json(const RunManifest& m) {
  json artifacts = json::array();
  for (const auto& a : m.artifacts) artifacts.push_back({{"path", a.path}, {"fingerprint", a.fingerprint}});
  json out = {{"command", m.command},
              {"arguments", m.arguments},
              {"config_fingerprint", m.config_fingerprint},
              {"corpus_fingerprint", m.corpus_fingerprint},
              {"seeds", m.seeds},
              {"started_at", m.started_at},
              {"finished_at", m.finished_at},
              {"artifacts", artifacts}};
  return out.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
  try {
    json in = json::parse(text);
    RunManifest m;
    m.command = in.at("command").get<std::string>();
    m.arguments = in.at("arguments").get<std::vector<std::string>>();
    m.config_fingerprint = in.at("config_fingerprint").get<std::string>();
    m.corpus_fingerprint = in.at("corpus_fingerprint").get<std::string>();
    m.seeds = in.at("seeds").get<std::vector<std::uint64_t>>();
    m.started_at = in.at("started_at").get<std::string>();
    m.finished_at = in.at("finished_at").get<std::string>();
    for (const auto& a : in.at("artifacts"))
      m.artifacts.push_back({a.at("path").get<std::string>(), a.at("fingerprint").get<std::string>()});
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("run manifest: ") + e.what());
  }
}

namespace {

std::string utc_now() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void ensure_parent(const std::string& path) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  bool quiet = false;
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  Globals globals;
  RunManifest manifest;
  std::string manifest_path;

  void info(const std::string& msg) const {
    if (!globals.quiet) err << msg << '\n';
  }
  void write(const std::string& path, const std::string& content) {
    ensure_parent(path);
    write_text_file(path, content);
    record(path);
  }
  void record(const std::string& path) { manifest.artifacts.push_back({path, file_fingerprint(path)}); }
  // Manifest beside a file output, or inside a directory output.
  void manifest_for_file(const std::string& path) { manifest_path = path + ".manifest.json"; }
  void manifest_in_dir(const std::string& dir) { manifest_path = (fs::path(dir) / "manifest.json").string(); }
};

// --- corpus loading ---------------------------------------------------------

struct CorpusFlags {
  std::string path;
  std::string schema;
  int classes = 0;
};

void add_corpus_flags(CLI::App* sub, CorpusFlags& f, const std::string& flag = "--corpus", bool required = true) {
  auto* opt = sub->add_option(flag, f.path, "Corpus JSONL file");
  if (required) opt->required();
  sub->add_option("--schema", f.schema, "Comma-separated demographic attributes (default: inferred)");
  sub->add_option("--classes", f.classes, "Label space size (default: inferred)")->check(CLI::Range(2, 1000));
}

// Schema defaults to the sorted union of annotator attributes; the label
// space to one past the largest label, at least 2.
Corpus load_corpus(const Context& ctx, const CorpusFlags& f) {
  std::vector<std::string> schema = split_commas(f.schema);
  int classes = f.classes;
  if (schema.empty() || classes == 0) {
    std::set<std::string> attrs;
    int max_label = 1;
    std::istringstream in(read_file(f.path));
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json rec = json::parse(line, nullptr, false);
      if (rec.is_discarded() || !rec.is_object()) continue;  // reported by the real parse
      const std::string kind = rec.value("kind", "");
      if (kind == "annotator" && rec.contains("demographics") && rec["demographics"].is_object()) {
        for (const auto& item : rec["demographics"].items()) attrs.insert(item.key());
      } else if (kind == "annotation" && rec.contains("label") && rec["label"].is_number_integer()) {
        max_label = std::max(max_label, rec["label"].get<int>());
      }
    }
    if (schema.empty()) schema.assign(attrs.begin(), attrs.end());
    if (classes == 0) classes = max_label + 1;
  }
  std::vector<std::string> warnings;
  Corpus corpus = ingest_corpus(f.path, schema, classes, &warnings);
  for (const auto& w : warnings) ctx.info("warning: " + w);
  return corpus;
}

std::vector<std::uint64_t> seed_range(std::size_t n, std::uint64_t first = 1) {
  std::vector<std::uint64_t> out(n);
  std::iota(out.begin(), out.end(), first);
  return out;
}

std::string fp_hex(Fingerprint f) { return f.hex(); }

// --- ingest -----------------------------------------------------------------

struct IngestCmd {
  std::string input, schema, out, binarize = "none", effect_report;
  int classes = 2;

  void add(CLI::App* app) {
    auto* s = app->add_subcommand("ingest", "Validate and normalize a JSONL corpus");
    s->add_option("--input", input, "Raw JSONL records")->required();
    s->add_option("--schema", schema, "Comma-separated demographic attributes")->required();
    s->add_option("--classes", classes, "Label space size of the raw labels")->check(CLI::Range(2, 1000));
    s->add_option("--binarize", binarize, "none | mhs | popquorn")
        ->check(CLI::IsMember({"none", "mhs", "popquorn"}));
    s->add_option("--effect-report", effect_report, "JSON report of the binarization effect");
    s->add_option("--out", out, "Normalized corpus JSONL")->required();
  }

  void run(Context& ctx) const {
    std::vector<std::string> warnings;
    Corpus raw = ingest_corpus(input, split_commas(schema), classes, &warnings);
    for (const auto& w : warnings) ctx.info("warning: " + w);
    Corpus corpus = binarize == "mhs" ? binarize_mhs(raw) : binarize == "popquorn" ? binarize_popquorn(raw) : raw;
    ctx.manifest.corpus_fingerprint = corpus.fingerprint();
    ctx.manifest.config_fingerprint =
        fp_hex(Fingerprint().add(schema).add(classes).add(binarize));
    ctx.manifest_for_file(out);
    ctx.write(out, corpus_to_jsonl(corpus));
    if (!effect_report.empty()) {
      if (binarize == "none") throw Error(ErrorCode::BadFlag, "--effect-report needs --binarize");
      BinarizationEffect e = binarization_effect_report(raw, corpus);
      json j = {{"comments", e.comments},
                {"increased_fraction", e.increased_fraction},
                {"boundary_crossing_fraction", e.boundary_crossing_fraction},
                {"crossing_adjacent_fraction", e.crossing_adjacent_fraction},
                {"disagreeing_with_intermediate_fraction", e.disagreeing_with_intermediate_fraction},
                {"median_before", e.median_before},
                {"median_after", e.median_after},
                {"median_ratio", std::isfinite(e.median_ratio) ? json(e.median_ratio) : json(nullptr)}};
      ctx.write(effect_report, j.dump(2) + "\n");
    }
    ctx.info("ingested " + std::to_string(corpus.comments().size()) + " comments, " +
             std::to_string(corpus.annotators().size()) + " annotators, " +
             std::to_string(corpus.annotations().size()) + " annotations");
  }
};

// --- disagree ---------------------------------------------------------------

struct DisagreeCmd {
  CorpusFlags corpus;
  std::string out;
  double threshold = kHighDisagreementThreshold;

  void add(CLI::App* app) {
    auto* s = app->add_subcommand("disagree", "Per-comment normalized disagreement");
    add_corpus_flags(s, corpus);
    s->add_option("--threshold", threshold, "High-disagreement threshold (strict)");
    s->add_option("--out", out, "Output CSV")->required();
  }

  void run(Context& ctx) const {
    Corpus c = load_corpus(ctx, corpus);
    ctx.manifest.corpus_fingerprint = c.fingerprint();
    ctx.manifest.config_fingerprint = fp_hex(Fingerprint().add(threshold));
    std::ostringstream o;
    o << "comment_id,n_annotations,disagreement,high_disagreement\n" << std::setprecision(17);
    const auto scores = comment_disagreements(c);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      std::size_t n = c.annotations_of_comment(*c.find_comment(scores[i].comment_id)).size();
      o << scores[i].comment_id << ',' << n << ',' << scores[i].value << ','
        << (is_high_disagreement(scores[i].value, threshold) ? 1 : 0) << '\n';
    }
    ctx.manifest_for_file(out);
    ctx.write(out, o.str());
  }
};

// --- splits -----------------------------------------------------------------

std::string split_file_name(std::uint64_t seed) {
  std::ostringstream s;
  s << "split_" << std::setw(6) << std::setfill('0') << seed << ".json";
  return s.str();
}

std::vector<std::string> split_files(const std::string& dir) {
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Io, "not a directory: " + dir);
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("split_", 0) == 0 && e.path().extension() == ".json") out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw Error(ErrorCode::Io, "no split manifests in " + dir);
  return out;
}

struct SplitsCmd {
  CorpusFlags corpus;
  std::string original, fractions = "0.8,0.1,0.1", policy = "strict", out;
  std::size_t n = 100;
  std::uint64_t seed_base = 0;

  void add(CLI::App* app) {
    auto* s = app->add_subcommand("splits", "Sample seeded train/val/test splits");
    add_corpus_flags(s, corpus);
    s->add_option("--original", original, "3-class view of the same corpus for descriptors");
    s->add_option("--n", n, "Number of splits")->check(CLI::PositiveNumber);
    s->add_option("--fractions", fractions, "train,val,test fractions");
    s->add_option("--policy", policy, "strict | comments-only")->check(CLI::IsMember({"strict", "comments-only"}));
    s->add_option("--seed-base", seed_base, "First split seed");
    s->add_option("--out", out, "Output directory")->required();
  }

  void run(Context& ctx) const {
    Corpus c = load_corpus(ctx, corpus);
    std::optional<Corpus> view;
    if (!original.empty()) view = load_corpus(ctx, {original, "", 0});
    auto fr = split_commas(fractions);
    if (fr.size() != 3) throw Error(ErrorCode::BadFlag, "--fractions needs three values");
    SplitFractions f;
    try {
      f = {std::stod(fr[0]), std::stod(fr[1]), std::stod(fr[2])};
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::BadFlag, "--fractions must be numbers");
    }
    const SplitPolicy pol = parse_split_policy(policy);
    ctx.manifest.corpus_fingerprint = c.fingerprint();
    ctx.manifest.config_fingerprint =
        fp_hex(Fingerprint().add(f.train).add(f.val).add(f.test).add(policy).add(std::uint64_t(n)).add(seed_base));
    ctx.manifest_in_dir(out);
    fs::create_directories(out);
    std::ostringstream desc;
    desc << std::setprecision(17)
         << "seed,train_disagreement_mean,train_hd_frac,test_disagreement_mean,test_hd_frac,"
            "test_uncertain_label_frac,train_records,train_unique_comments,test_demo_overlap,"
            "test_demo_combinations,dropped\n";
    std::size_t failed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t seed = seed_base + i;
      ctx.manifest.seeds.push_back(seed);
      Split split;
      try {
        split = sample_split(c, f, pol, seed);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::InfeasibleSplit) throw;
        ++failed;
        ctx.info("warning: seed " + std::to_string(seed) + ": " + e.what());
        continue;
      }
      ctx.write((fs::path(out) / split_file_name(seed)).string(), split_to_json(c, split));
      SplitDescriptor d = describe_split(c, split, view ? &*view : nullptr);
      desc << seed << ',' << d.train_disagreement_mean << ',' << d.train_hd_frac << ',' << d.test_disagreement_mean
           << ',' << d.test_hd_frac << ',';
      if (d.test_uncertain_label_frac) desc << *d.test_uncertain_label_frac;
      desc << ',' << d.train_records << ',' << d.train_unique_comments << ',' << d.test_demo_overlap << ','
           << d.test_demo_combinations << ',' << split.dropped.size() << '\n';
    }
    ctx.write((fs::path(out) / "descriptors.csv").string(), desc.str());
    ctx.info("wrote " + std::to_string(n - failed) + " splits" +
             (failed ? " (" + std::to_string(failed) + " infeasible)" : ""));
  }
};

// --- diagnose ---------------------------------------------------------------

struct DiagnoseCmd {
  CorpusFlags corpus;
  std::string original, splits, encoder = "hash", out;
  std::size_t seeds = 5;
  bool no_shuffled = false;
  DiagnosticConfig probe;

  void add(CLI::App* app) {
    auto* s = app->add_subcommand("diagnose", "Measure demographic gain per split");
    add_corpus_flags(s, corpus);
    s->add_option("--original", original, "3-class view of the same corpus for descriptors");
    s->add_option("--splits", splits, "Directory of split manifests")->required();
    s->add_option("--seeds", seeds, "Training seeds per split")->check(CLI::PositiveNumber);
    s->add_option("--encoder", encoder, "hash | hash:<dim> | precomputed vector file");
    s->add_flag("--no-shuffled", no_shuffled, "Skip the shuffled-demographics control");
    s->add_option("--hidden", probe.hidden, "Probe hidden width");
    s->add_option("--dropout", probe.dropout, "Probe dropout");
    s->add_option("--max-epochs", probe.max_epochs, "Epoch cap");
    s->add_option("--patience", probe.patience, "Early-stopping patience");
    s->add_option("--lr", probe.learning_rate, "Learning rate");
    s->add_option("--batch-size", probe.batch_size, "Batch size")->check(CLI::PositiveNumber);
    s->add_option("--out", out, "Gains CSV")->required();
  }

  void run(Context& ctx) const {
    Corpus c = load_corpus(ctx, corpus);
    std::optional<Corpus> view;
    if (!original.empty()) view = load_corpus(ctx, {original, "", 0});
    std::vector<Split> parsed;
    for (const auto& path : split_files(splits)) parsed.push_back(read_split(c, path));
    auto enc = make_encoder(encoder);
    EncodingCache cache(*enc, c);
    GainOptions opt;
    opt.seeds = seed_range(seeds);
    opt.shuffled_control = !no_shuffled;
    opt.jobs = ctx.globals.jobs;
    opt.probe = probe;
    opt.original_view = view ? &*view : nullptr;
    ctx.manifest.corpus_fingerprint = c.fingerprint();
    ctx.manifest.seeds = opt.seeds;
    ctx.manifest.config_fingerprint = fp_hex(Fingerprint()
                                                 .add(enc->name())
                                                 .add(std::uint64_t(seeds))
                                                 .add(no_shuffled)
                                                 .add(std::uint64_t(probe.hidden))
                                                 .add(probe.dropout)
                                                 .add(probe.max_epochs)
                                                 .add(probe.patience)
                                                 .add(probe.learning_rate)
                                                 .add(std::uint64_t(probe.batch_size)));
    auto gains = measure_gain(c, parsed, cache, opt);
    std::size_t failed = 0;
    for (const auto& g : gains) {
      if (!g.error.empty()) {
        ++failed;
        ctx.info("warning: split " + std::to_string(g.split_seed) + ": " + g.error);
      }
    }
    ctx.manifest_for_file(out);
    ctx.write(out, gains_to_csv(gains));
    ctx.info("measured " + std::to_string(gains.size() - failed) + " splits");
  }
};

// --- regimes ----------------------------------------------------------------

struct RegimesCmd {
  std::string gains, out, plots;
  double alpha = 0.05;

  void add(CLI::App* app) {
    auto* s = app->add_subcommand("regimes", "Correlate gains with split descriptors");
    s->add_option("--gains", gains, "Gains CSV")->required();
    s->add_option("--out", out, "Output path; .csv and .md are both written")->required();
    s->add_option("--alpha", alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
    s->add_option("--plots", plots, "Directory for SVG scatter plots");
  }

  void run(Context& ctx) const {
    auto records = read_gains_csv(gains);
    RegimeReport report = regime_report(records, alpha);
    fs::path base(out);
    if (base.extension() == ".csv" || base.extension() == ".md") base.replace_extension();
    ctx.manifest.config_fingerprint = fp_hex(Fingerprint().add(alpha));
    ctx.manifest.corpus_fingerprint = file_fingerprint(gains);
    ctx.manifest_for_file(base.string());
    ctx.write(base.string() + ".csv", regime_report_csv(report));
    ctx.write(base.string() + ".md", regime_report_markdown(report));
    if (!plots.empty()) write_plots(ctx, records);
  }

  void write_plots(Context& ctx, const std::vector<GainRecord>& records) const {
    std::vector<const GainRecord*> ok;
    for (const auto& g : records)
      if (g.error.empty()) ok.push_back(&g);
    for (const auto& m : report_measures()) {
      ScatterPlot p;
      p.title = "Demographic gain vs " + m.second;
      p.x_label = m.second;
      p.y_label = "delta AUC";
      for (const GainRecord* g : ok) {
        auto v = descriptor_value(*g, m.first);
        if (!v) continue;
        p.x.push_back(*v);
        p.y.push_back(g->delta_auc);
      }
      if (p.x.empty()) continue;
      ctx.write((fs::path(plots) / ("gain_vs_" + m.first + ".svg")).string(), scatter_svg(p));
    }
    ScatterPlot p;
    p.title = "Train vs test disagreement";
    p.x_label = "Mean train disagreement";
    p.y_label = "Mean test disagreement";
    p.color_label = "delta AUC";
    p.zero_line = false;
    for (const GainRecord* g : ok) {
      p.x.push_back(g->descriptor.train_disagreement_mean);
      p.y.push_back(g->descriptor.test_disagreement_mean);
      p.color.push_back(g->delta_auc);
    }
    ctx.write((fs::path(plots) / "train_vs_test_disagreement.svg").string(), scatter_svg(p));
  }

  static std::vector<std::pair<std::string, std::string>> report_measures() {
    return {{"train_hd_frac", "Train high-disagreement fraction"},
            {"train_disagreement_mean", "Mean train disagreement"},
            {"test_disagreement_mean", "Mean test disagreement"},
            {"test_hd_frac", "Test high-disagreement fraction"},
            {"test_uncertain_label_frac", "Test uncertain-label fraction"},
            {"train_unique_comments", "Training unique comments"},
            {"train_records", "Training records"},
            {"test_demo_overlap", "Test demographic overlap"}};
  }
};

// --- train ------------------------------------------------------------------

struct GateFlags {
  std::string config, preset, ablation;
  std::optional<double> tau, temperature, rho, lambda_soft, dropout, lr;
  std::optional<int> text_epochs, residual_epochs;
  std::optional<std::size_t> batch_size;

  void add(CLI::App* s) {
    s->add_option("--config", config, "Gate config file (key = value)");
    s->add_option("--preset", preset, "Named hyperparameter row")->check(CLI::IsMember(gate_preset_names()));
    s->add_option("--ablation", ablation, "full | no-gate | no-gate-weighting | no-soft-loss")
        ->check(CLI::IsMember(ablation_preset_names()));
    s->add_option("--tau", tau, "Gate threshold");
    s->add_option("--temperature", temperature, "Gate temperature");
    s->add_option("--rho", rho, "Gate weighting strength");
    s->add_option("--lambda-soft", lambda_soft, "Soft-label loss weight");
    s->add_option("--dropout", dropout, "Dropout");
    s->add_option("--lr", lr, "Learning rate");
    s->add_option("--text-epochs", text_epochs, "Text stage epochs");
    s->add_option("--residual-epochs", residual_epochs, "Residual stage epochs");
    s->add_option("--batch-size", batch_size, "Batch size");
  }

  // Config file, then preset, then individual flags, then the ablation.
  GateConfig resolve(std::optional<std::uint64_t> seed) const {
    ConfigFile file = config.empty() ? ConfigFile() : ConfigFile::load(config);
    if (!preset.empty()) file.set("preset", preset);
    if (!ablation.empty()) file.set("ablation", ablation);
    ConfigFile no_ablation;
    for (const auto& [k, v] : file.values())
      if (k != "ablation") no_ablation.set(k, v);
    GateConfig g = gate_config_from(no_ablation);
    if (tau) g.tau = *tau;
    if (temperature) g.temperature = *temperature;
    if (rho) g.rho = *rho;
    if (lambda_soft) g.lambda_soft = *lambda_soft;
    if (dropout) g.dropout = *dropout;
    if (lr) g.learning_rate = *lr;
    if (text_epochs) g.text_epochs = *text_epochs;
    if (residual_epochs) g.residual_epochs = *residual_epochs;
    if (batch_size) g.batch_size = *batch_size;
    if (seed) g.seed = *seed;
    if (file.has("ablation")) g = ablation_preset(file.get_string("ablation"), g);
    g.validate();
    return g;
  }
};

const char* kTextModelFile = "text.model";
const char* kResidualModelFile = "residual.model";

json stage_json(const StageReport& r) {
  return {{"best_epoch", r.best_epoch}, {"best_val_auc", r.best_val_auc}, {"train_loss", r.train_loss},
          {"val_auc", r.val_auc}};
}

struct TrainCmd {
  CorpusFlags corpus;
  std::string split, stage = "all", encoder = "hash", out;
  GateFlags gate;

  void add(CLI::App* app) {
    auto* s = app->add_subcommand("train", "Train the text classifier and gated residual adapter");
    add_corpus_flags(s, corpus);
    s->add_option("--split", split, "Split manifest")->required();
    s->add_option("--stage", stage, "text | residual | all")->check(CLI::IsMember({"text", "residual", "all"}));
    s->add_option("--encoder", encoder, "hash | hash:<dim> | precomputed vector file");
    gate.add(s);
    s->add_option("--out", out, "Model directory")->required();
  }

  void run(Context& ctx) const {
    Corpus c = load_corpus(ctx, corpus);
    Split sp = read_split(c, split);
    GateConfig cfg = gate.resolve(ctx.globals.seed);
    ctx.manifest.corpus_fingerprint = c.fingerprint();
    ctx.manifest.config_fingerprint = cfg.fingerprint();
    ctx.manifest.seeds = {cfg.seed};
    ctx.manifest_in_dir(out);
    fs::create_directories(out);
    const std::string text_path = (fs::path(out) / kTextModelFile).string();
    const std::string residual_path = (fs::path(out) / kResidualModelFile).string();
    json report;

    TextClassifierState state;
    std::unique_ptr<TextEncoder> enc;
    if (stage == "residual") {
      state = load_text_model(text_path);
      enc = make_encoder(state.encoder_spec());
    } else {
      enc = make_encoder(encoder);
    }
    EncodingCache cache(*enc, c);
    if (stage != "residual") {
      StageReport r;
      state = train_text_stage(c, sp, cache, encoder, cfg, &r);
      save_text_model(state, cfg, text_path);
      ctx.record(text_path);
      report["text"] = stage_json(r);
      ctx.info("text stage: best val AUC " + std::to_string(r.best_val_auc) + " at epoch " +
               std::to_string(r.best_epoch));
    }
    if (stage != "text") {
      StageReport r;
      ResidualAdapter adapter = train_residual_stage(state, c, sp, cache, cfg, &r);
      save_residual_model(adapter, cfg, residual_path);
      ctx.record(residual_path);
      report["residual"] = stage_json(r);
      report["residual_parameters"] = count_parameters(adapter);
      ctx.info("residual stage: best val AUC " + std::to_string(r.best_val_auc) + " at epoch " +
               std::to_string(r.best_epoch));
    }
    report["config_fingerprint"] = cfg.fingerprint();
    ctx.write((fs::path(out) / "gate.toml").string(), gate_config_to_toml(cfg));
    ctx.write((fs::path(out) / ("training_" + stage + ".json")).string(), report.dump(2) + "\n");
  }
};

// --- eval -------------------------------------------------------------------

struct EvalCmd {
  CorpusFlags corpus;
  std::string model, split, out, plots;

  void add(CLI::App* app) {
    auto* s = app->add_subcommand("eval", "Evaluate a trained model on a split's test partition");
    s->add_option("--model", model, "Model directory")->required();
    add_corpus_flags(s, corpus);
    s->add_option("--split", split, "Split manifest")->required();
    s->add_option("--out", out, "Report JSON")->required();
    s->add_option("--plots", plots, "Directory for SVG bar charts");
  }

  void run(Context& ctx) const {
    Corpus c = load_corpus(ctx, corpus);
    Split sp = read_split(c, split);
    TextClassifierState state = load_text_model((fs::path(model) / kTextModelFile).string());
    GateConfig cfg;
    std::string fingerprint;
    ResidualAdapter adapter = load_residual_model((fs::path(model) / kResidualModelFile).string(), &fingerprint, &cfg);
    auto enc = make_encoder(state.encoder_spec());
    EncodingCache cache(*enc, c);
    const std::uint64_t shuffle_seed = ctx.globals.seed.value_or(1);
    ModelEvaluation ev = evaluate_model(state, adapter, cfg, c, sp, cache, shuffle_seed);
    for (const auto& w : ev.warnings) ctx.info("warning: " + w);
    ctx.manifest.corpus_fingerprint = c.fingerprint();
    ctx.manifest.config_fingerprint = fingerprint;
    ctx.manifest.seeds = {shuffle_seed};
    ctx.manifest_for_file(out);
    ctx.write(out, evaluation_to_json(ev));
    if (!plots.empty()) write_plots(ctx, ev);
    ctx.info("test AUC text " + std::to_string(ev.auc_text) + ", gated " + std::to_string(ev.auc_gated));
  }

  void write_plots(Context& ctx, const ModelEvaluation& ev) const {
    BarChart gains;
    gains.title = "Gated minus text-only, by disagreement bucket";
    gains.y_label = "delta";
    BarSeries acc{"accuracy", {}}, f1{"macro F1", {}};
    for (const auto& b : ev.disagreement_buckets) {
      gains.categories.push_back(b.name);
      acc.values.push_back(b.delta_accuracy);
      f1.values.push_back(b.delta_f1);
    }
    gains.series = {acc, f1};
    ctx.write((fs::path(plots) / "bucket_gains.svg").string(), bar_chart_svg(gains));

    if (ev.pairwise_gated) {
      BarChart pw;
      pw.title = "Within-comment pairwise accuracy";
      pw.y_label = "accuracy";
      pw.categories = {"text-only", "shuffled", "gated"};
      pw.series = {{"pairwise accuracy",
                    {ev.pairwise_text->accuracy, ev.pairwise_shuffled->accuracy, ev.pairwise_gated->accuracy}}};
      pw.reference_line = 0.5;
      ctx.write((fs::path(plots) / "pairwise_accuracy.svg").string(), bar_chart_svg(pw));
    }
    if (!ev.selectivity.empty()) {
      BarChart gs;
      gs.title = "Mean gate value by text-model confidence";
      gs.y_label = "mean alpha";
      BarSeries s{"alpha", {}};
      for (const auto& b : ev.selectivity) {
        gs.categories.push_back(b.name);
        s.values.push_back(b.mean_alpha);
      }
      gs.series = {s};
      ctx.write((fs::path(plots) / "gate_selectivity.svg").string(), bar_chart_svg(gs));
    }
  }
};

// --- synth ------------------------------------------------------------------

bool is_partitioned(const ConfigFile& c) {
  for (const auto& [k, v] : c.values()) {
    if (k.find('.') != std::string::npos || k == "holdout_attribute" || k == "holdout_categories" || k == "overlap")
      return true;
  }
  return false;
}

std::string truth_csv(const SyntheticCorpus& s) {
  std::ostringstream o;
  o << std::setprecision(17) << "comment_id,text_score,difficulty,ambiguous\n";
  for (std::size_t i = 0; i < s.corpus.comments().size(); ++i) {
    o << s.corpus.comments()[i].id << ',' << s.truth.text_score[i] << ',' << s.truth.difficulty[i] << ','
      << int(s.truth.ambiguous[i]) << '\n';
  }
  return o.str();
}

struct SynthCmd {
  std::string spec, out, split_out, truth_out;
  bool partitioned = false;

  void add(CLI::App* app) {
    auto* s = app->add_subcommand("synth", "Generate a synthetic annotated corpus");
    s->add_option("--spec", spec, "Generator spec file (key = value)");
    s->add_flag("--partitioned", partitioned, "Generate train/val/test partitions with disjoint annotators");
    s->add_option("--split-out", split_out, "Split manifest for a partitioned corpus");
    s->add_option("--truth", truth_out, "Per-comment ground truth CSV");
    s->add_option("--out", out, "Corpus JSONL")->required();
  }

  void run(Context& ctx) const {
    ConfigFile file = spec.empty() ? ConfigFile() : ConfigFile::load(spec);
    if (ctx.globals.seed) file.set("seed", std::to_string(*ctx.globals.seed));
    const bool parts = partitioned || !split_out.empty() || is_partitioned(file);
    Fingerprint cfg;
    for (const auto& [k, v] : file.values()) cfg.add(k).add(v);
    cfg.add(parts);
    std::optional<SyntheticCorpus> generated;
    if (parts) {
      PartitionedSpec ps = partitioned_spec_from(file);
      generated = generate_partitioned(ps);
      ctx.manifest.seeds = {ps.base.seed};
    } else {
      SyntheticSpec ss = synthetic_spec_from(file);
      generated = generate_corpus(ss);
      ctx.manifest.seeds = {ss.seed};
    }
    const SyntheticCorpus& s = *generated;
    ctx.manifest.corpus_fingerprint = s.corpus.fingerprint();
    ctx.manifest.config_fingerprint = cfg.hex();
    ctx.manifest_for_file(out);
    ctx.write(out, corpus_to_jsonl(s.corpus));
    if (s.split) {
      std::string path = split_out.empty() ? out + ".split.json" : split_out;
      ctx.write(path, split_to_json(s.corpus, *s.split));
    }
    if (!truth_out.empty()) ctx.write(truth_out, truth_csv(s));
  }
};

// --- sweep ------------------------------------------------------------------

std::string cells_csv(const std::vector<CellSummary>& cells) {
  std::ostringstream o;
  o << std::setprecision(17)
    << "train_index,test_index,train_careless,test_ambiguity,n,mean_delta,se_delta,mean_shuffled,se_shuffled,"
       "mean_train_disagreement,mean_test_disagreement\n";
  for (const auto& c : cells) {
    o << c.train_index << ',' << c.test_index << ',' << c.train_careless << ',' << c.test_ambiguity << ',' << c.n
      << ',' << c.mean_delta << ',' << c.se_delta << ',' << c.mean_shuffled << ',' << c.se_shuffled << ','
      << c.mean_train_disagreement << ',' << c.mean_test_disagreement << '\n';
  }
  return o.str();
}

struct SweepCmd {
  std::string spec, grid, out, gains_out, cells_out;
  std::size_t seeds = 1;
  std::size_t encoder_dim = 64;

  void add(CLI::App* app) {
    auto* s = app->add_subcommand("sweep", "Regime sweep over synthetic train/test ambiguity");
    s->add_option("--spec", spec, "Partitioned generator spec file");
    s->add_option("--grid", grid, "Sweep grid file");
    s->add_option("--seeds", seeds, "Training seeds per split")->check(CLI::PositiveNumber);
    s->add_option("--encoder-dim", encoder_dim, "Hashing encoder width")->check(CLI::PositiveNumber);
    s->add_option("--gains", gains_out, "Also write a gains CSV for `regimes`");
    s->add_option("--cells", cells_out, "Per-cell summary CSV");
    s->add_option("--out", out, "Sweep CSV")->required();
  }

  void run(Context& ctx) const {
    ConfigFile sf = spec.empty() ? ConfigFile() : ConfigFile::load(spec);
    if (ctx.globals.seed) sf.set("seed", std::to_string(*ctx.globals.seed));
    PartitionedSpec ps = partitioned_spec_from(sf, sweep_base_spec());
    SweepGrid g = sweep_grid_from(grid.empty() ? ConfigFile() : ConfigFile::load(grid));
    SweepOptions opt;
    opt.gain.seeds = seed_range(seeds);
    opt.encoder_dim = encoder_dim;
    opt.jobs = ctx.globals.jobs;
    Fingerprint cfg;
    for (const auto& [k, v] : sf.values()) cfg.add(k).add(v);
    for (double v : g.train_careless) cfg.add(v);
    for (double v : g.test_ambiguity) cfg.add(v);
    for (auto v : g.train_sizes) cfg.add(std::uint64_t(v));
    for (double v : g.overlaps) cfg.add(v);
    cfg.add(std::uint64_t(g.replicates)).add(std::uint64_t(seeds)).add(std::uint64_t(encoder_dim));
    ctx.manifest.config_fingerprint = cfg.hex();
    ctx.manifest.seeds = {ps.base.seed};
    ctx.manifest_for_file(out);
    auto rows = regime_sweep(ps, g, opt);
    ctx.write(out, sweep_to_csv(rows));
    if (!gains_out.empty()) {
      std::vector<GainRecord> gains;
      for (const auto& r : rows) gains.push_back(r.gain);
      ctx.write(gains_out, gains_to_csv(gains));
    }
    if (!cells_out.empty()) ctx.write(cells_out, cells_csv(summarize_sweep(rows)));
    ctx.info("swept " + std::to_string(rows.size()) + " splits");
  }
};

// --- report -----------------------------------------------------------------

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  std::string out = s.str();
  if (out.find_first_not_of("-0.") == std::string::npos && out.front() == '-') out.erase(0, 1);
  return out;
}

std::string gains_markdown(const std::vector<GainRecord>& gains) {
  std::vector<const GainRecord*> ok;
  for (const auto& g : gains)
    if (g.error.empty()) ok.push_back(&g);
  std::ostringstream o;
  o << "## Demographic gain across splits\n\n";
  if (ok.empty()) {
    o << "No successful splits.\n\n";
    return o.str();
  }
  std::vector<double> d;
  for (const auto* g : ok) d.push_back(g->delta_auc);
  std::sort(d.begin(), d.end());
  const double n = static_cast<double>(d.size());
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = d.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  const double median = d.size() % 2 ? d[d.size() / 2] : 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]);
  const double positive =
      static_cast<double>(std::count_if(d.begin(), d.end(), [](double v) { return v > 0; })) / n;
  o << "| Quantity | Value |\n|---|---:|\n";
  o << "| Splits | " << ok.size() << " |\n";
  if (ok.size() != gains.size()) o << "| Failed splits | " << gains.size() - ok.size() << " |\n";
  o << "| Mean delta AUC | " << fixed(mean, 4) << " |\n";
  o << "| SD delta AUC | " << fixed(sd, 4) << " |\n";
  o << "| Median delta AUC | " << fixed(median, 4) << " |\n";
  o << "| Min / max delta AUC | " << fixed(d.front(), 4) << " / " << fixed(d.back(), 4) << " |\n";
  o << "| Splits with positive gain | " << fixed(100.0 * positive, 1) << "% |\n";
  std::vector<double> sh;
  for (const auto* g : ok)
    if (auto v = g->delta_shuffled()) sh.push_back(*v);
  if (!sh.empty()) {
    o << "| Mean shuffled-control delta AUC | " << fixed(std::accumulate(sh.begin(), sh.end(), 0.0) / sh.size(), 4)
      << " |\n";
  }
  o << "\n### Split descriptors\n\n| Descriptor | Min | Mean | Max |\n|---|---:|---:|---:|\n";
  for (const auto& [key, label] : RegimesCmd::report_measures()) {
    std::vector<double> v;
    for (const auto* g : ok)
      if (auto x = descriptor_value(*g, key)) v.push_back(*x);
    if (v.empty()) continue;
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    o << "| " << label << " | " << fixed(*lo, 3) << " | "
      << fixed(std::accumulate(v.begin(), v.end(), 0.0) / v.size(), 3) << " | " << fixed(*hi, 3) << " |\n";
  }
  o << "\n";
  return o.str();
}

struct ReportCmd {
  std::string gains, regimes, out;

  void add(CLI::App* app) {
    auto* s = app->add_subcommand("report", "Markdown report from gains and regime tables");
    s->add_option("--gains", gains, "Gains CSV")->required();
    s->add_option("--regimes", regimes, "Regimes CSV")->required();
    s->add_option("--out", out, "Markdown report")->required();
  }

  void run(Context& ctx) const {
    auto records = read_gains_csv(gains);
    RegimeReport report = regime_report_from_csv(read_file(regimes));
    std::ostringstream o;
    o << "# Demographic gain regimes\n\n" << gains_markdown(records) << regime_report_markdown(report);
    ctx.manifest.corpus_fingerprint = file_fingerprint(gains);
    ctx.manifest.config_fingerprint = file_fingerprint(regimes);
    ctx.manifest_for_file(out);
    ctx.write(out, o.str());
  }
};

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownCommand:
    case ErrorCode::BadFlag:
    case ErrorCode::UnknownPreset:
    case ErrorCode::BadConfig:
      return kExitUsage;
    default:
      return kExitFailure;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Annotator-disagreement and demographic-gain toolkit", "perspectra"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Globals globals;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Base seed for generators, training and controls");
  app.add_option("--jobs", globals.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", globals.quiet, "Suppress progress messages");

  IngestCmd ingest;
  DisagreeCmd disagree;
  SplitsCmd splits;
  DiagnoseCmd diagnose;
  RegimesCmd regimes;
  TrainCmd train;
  EvalCmd eval;
  SynthCmd synth;
  SweepCmd sweep;
  ReportCmd report;
  ingest.add(&app);
  disagree.add(&app);
  splits.add(&app);
  diagnose.add(&app);
  regimes.add(&app);
  train.add(&app);
  eval.add(&app);
  synth.add(&app);
  sweep.add(&app);
  report.add(&app);

  if (!args.empty() && args[0].rfind("-", 0) != 0 && !app.get_subcommand_no_throw(args[0])) {
    err << "UnknownCommand: '" << args[0] << "'\n" << app.help();
    return kExitUsage;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "BadFlag: " << e.what() << "\n";
    CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }
  if (seed_opt->count()) globals.seed = seed;

  CLI::App* chosen = app.get_subcommands().front();
  Context ctx{out, err, globals, {}, {}};
  ctx.manifest.command = chosen->get_name();
  ctx.manifest.arguments = args;
  ctx.manifest.started_at = utc_now();
  try {
    const std::string name = chosen->get_name();
    if (name == "ingest") ingest.run(ctx);
    else if (name == "disagree") disagree.run(ctx);
    else if (name == "splits") splits.run(ctx);
    else if (name == "diagnose") diagnose.run(ctx);
    else if (name == "regimes") regimes.run(ctx);
    else if (name == "train") train.run(ctx);
    else if (name == "eval") eval.run(ctx);
    else if (name == "synth") synth.run(ctx);
    else if (name == "sweep") sweep.run(ctx);
    else if (name == "report") report.run(ctx);
    ctx.manifest.finished_at = utc_now();
    if (!ctx.manifest_path.empty()) {
      ensure_parent(ctx.manifest_path);
      write_text_file(ctx.manifest_path, manifest_to_json(ctx.manifest));
    }
  } catch (const Error& e) {
    err << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "Io: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace perspectra
