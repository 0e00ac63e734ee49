#include "perspectra/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "perspectra/disagreement.hpp"
#include "perspectra/error.hpp"
#include "perspectra/fingerprint.hpp"

namespace perspectra {

using nlohmann::json;

Corpus::Corpus(std::vector<std::string> schema, int label_space_size)
    : schema_(std::move(schema)), label_space_size_(label_space_size) {
  if (label_space_size_ < 1) {
    throw Error(ErrorCode::WrongLabelSpace, "label space size must be positive");
  }
  std::set<std::string> seen;
  for (const auto& attr : schema_) {
    if (attr.empty() || !seen.insert(attr).second) {
      throw Error(ErrorCode::MalformedRecord, "schema attributes must be unique and non-empty");
    }
  }
}

std::size_t Corpus::add_comment(std::string id, std::string text) {
  if (text.empty()) throw Error(ErrorCode::MalformedRecord, "comment '" + id + "' has empty text");
  if (comment_index_.count(id)) throw Error(ErrorCode::MalformedRecord, "duplicate comment id '" + id + "'");
  const std::size_t index = comments_.size();
  comment_index_.emplace(id, index);
  comments_.push_back({std::move(id), std::move(text)});
  by_comment_.emplace_back();
  return index;
}

std::size_t Corpus::add_annotator(std::string id, std::vector<std::string> demographics) {
  if (demographics.size() != schema_.size()) {
    throw Error(ErrorCode::MalformedRecord, "annotator '" + id + "' does not carry every schema attribute");
  }
  for (auto& value : demographics) {
    if (value.empty()) value = std::string(kUnknownCategory);
  }
  if (annotator_index_.count(id)) {
    throw Error(ErrorCode::MalformedRecord, "duplicate annotator id '" + id + "'");
  }
  const std::size_t index = annotators_.size();
  annotator_index_.emplace(id, index);
  annotators_.push_back({std::move(id), std::move(demographics)});
  by_annotator_.emplace_back();
  return index;
}

std::size_t Corpus::add_annotator(std::string id, const std::map<std::string, std::string>& demographics) {
  std::vector<std::string> values;
  values.reserve(schema_.size());
  for (const auto& attr : schema_) {
    auto it = demographics.find(attr);
    values.push_back(it == demographics.end() ? std::string(kUnknownCategory) : it->second);
  }
  return add_annotator(std::move(id), std::move(values));
}

std::size_t Corpus::add_annotation(std::size_t comment, std::size_t annotator, int label) {
  if (comment >= comments_.size() || annotator >= annotators_.size()) {
    throw Error(ErrorCode::DanglingReference, "annotation references an index outside the corpus");
  }
  if (label < 0 || label >= label_space_size_) {
    throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(label) + " outside [0," +
                                                std::to_string(label_space_size_) + ")");
  }
  const std::size_t index = annotations_.size();
  annotations_.push_back({comment, annotator, label});
  by_comment_[comment].push_back(index);
  by_annotator_[annotator].push_back(index);
  return index;
}

std::size_t Corpus::add_annotation(std::string_view comment_id, std::string_view annotator_id, int label) {
  auto c = find_comment(comment_id);
  if (!c) throw Error(ErrorCode::DanglingReference, "unknown comment '" + std::string(comment_id) + "'");
  auto a = find_annotator(annotator_id);
  if (!a) throw Error(ErrorCode::DanglingReference, "unknown annotator '" + std::string(annotator_id) + "'");
  return add_annotation(*c, *a, label);
}

std::optional<std::size_t> Corpus::find_comment(std::string_view id) const {
  auto it = comment_index_.find(std::string(id));
  if (it == comment_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Corpus::find_annotator(std::string_view id) const {
  auto it = annotator_index_.find(std::string(id));
  if (it == annotator_index_.end()) return std::nullopt;
  return it->second;
}

std::vector<long> Corpus::label_counts(std::size_t comment) const {
  std::vector<long> counts(static_cast<std::size_t>(label_space_size_), 0);
  for (std::size_t i : by_comment_[comment]) ++counts[static_cast<std::size_t>(annotations_[i].label)];
  return counts;
}

std::vector<long> Corpus::label_counts(std::size_t comment, std::span<const char> annotation_mask) const {
  std::vector<long> counts(static_cast<std::size_t>(label_space_size_), 0);
  for (std::size_t i : by_comment_[comment]) {
    if (annotation_mask[i]) ++counts[static_cast<std::size_t>(annotations_[i].label)];
  }
  return counts;
}

std::map<std::string, std::string> Corpus::demographics_map(std::size_t annotator) const {
  std::map<std::string, std::string> out;
  for (std::size_t j = 0; j < schema_.size(); ++j) out.emplace(schema_[j], annotators_[annotator].demographics[j]);
  return out;
}

std::string Corpus::demographic_combination(std::size_t annotator) const {
  std::string key;
  for (const auto& value : annotators_[annotator].demographics) {
    if (!key.empty()) key += '|';
    key += value;
  }
  return key;
}

std::vector<std::string> Corpus::categories(std::size_t attribute) const {
  std::set<std::string> values{std::string(kUnknownCategory)};
  for (const auto& a : annotators_) values.insert(a.demographics[attribute]);
  return {values.begin(), values.end()};
}

void Corpus::validate() const {
  if (comment_index_.size() != comments_.size() || annotator_index_.size() != annotators_.size()) {
    throw Error(ErrorCode::MalformedRecord, "identifier index out of sync");
  }
  for (const auto& c : comments_) {
    if (c.text.empty()) throw Error(ErrorCode::MalformedRecord, "comment '" + c.id + "' has empty text");
  }
  for (const auto& a : annotators_) {
    if (a.demographics.size() != schema_.size()) {
      throw Error(ErrorCode::MalformedRecord, "annotator '" + a.id + "' does not carry every schema attribute");
    }
  }
  for (const auto& ann : annotations_) {
    if (ann.comment >= comments_.size() || ann.annotator >= annotators_.size()) {
      throw Error(ErrorCode::DanglingReference, "annotation references an index outside the corpus");
    }
    if (ann.label < 0 || ann.label >= label_space_size_) {
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(ann.label));
    }
  }
  for (std::size_t c = 0; c < comments_.size(); ++c) {
    if (by_comment_[c].empty()) {
      throw Error(ErrorCode::EmptyAnnotationSet, "comment '" + comments_[c].id + "' has no annotations");
    }
  }
}

std::string Corpus::fingerprint() const {
  Fingerprint fp;
  fp.add(label_space_size_);
  for (const auto& attr : schema_) fp.add(attr);
  fp.add(static_cast<std::uint64_t>(comments_.size()));
  for (const auto& c : comments_) fp.add(c.id).add(c.text);
  fp.add(static_cast<std::uint64_t>(annotators_.size()));
  for (const auto& a : annotators_) {
    fp.add(a.id);
    for (const auto& v : a.demographics) fp.add(v);
  }
  fp.add(static_cast<std::uint64_t>(annotations_.size()));
  for (const auto& ann : annotations_) {
    fp.add(static_cast<std::uint64_t>(ann.comment)).add(static_cast<std::uint64_t>(ann.annotator)).add(ann.label);
  }
  return fp.hex();
}

namespace {

std::string demographic_value(const json& value) {
  if (value.is_null()) return std::string(kUnknownCategory);
  if (value.is_string()) {
    std::string s = value.get<std::string>();
    return s.empty() ? std::string(kUnknownCategory) : s;
  }
  if (value.is_boolean()) return value.get<bool>() ? "true" : "false";
  if (value.is_number_integer()) return std::to_string(value.get<long long>());
  if (value.is_number()) {
    std::ostringstream os;
    os << value.get<double>();
    return os.str();
  }
  throw Error(ErrorCode::MalformedRecord, "demographic value must be a scalar");
}

std::string require_string(const json& record, const char* key, std::size_t line) {
  auto it = record.find(key);
  if (it == record.end() || !it->is_string()) {
    throw Error(ErrorCode::MalformedRecord,
                "line " + std::to_string(line) + ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace

Corpus parse_corpus_jsonl(std::string_view content, const std::vector<std::string>& schema,
                          int label_space_size, std::vector<std::string>* warnings) {
  struct PendingAnnotation {
    std::string comment_id;
    std::string annotator_id;
    long long label;
    std::size_t line;
  };
  Corpus staged(schema, label_space_size);
  std::vector<PendingAnnotation> pending;
  std::set<std::string> schema_set(schema.begin(), schema.end());
  std::set<std::string> ignored_attributes;

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == content.size()) break;
      continue;
    }
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!record.is_object()) {
      throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": record is not an object");
    }
    const std::string kind = require_string(record, "kind", line_no);
    if (kind == "comment") {
      staged.add_comment(require_string(record, "id", line_no), require_string(record, "text", line_no));
    } else if (kind == "annotator") {
      std::map<std::string, std::string> demo;
      if (auto it = record.find("demographics"); it != record.end() && !it->is_null()) {
        if (!it->is_object()) {
          throw Error(ErrorCode::MalformedRecord,
                      "line " + std::to_string(line_no) + ": demographics must be an object");
        }
        for (const auto& [attr, value] : it->items()) {
          if (!schema_set.count(attr)) {
            ignored_attributes.insert(attr);
            continue;
          }
          demo[attr] = demographic_value(value);
        }
      }
      staged.add_annotator(require_string(record, "id", line_no), demo);
    } else if (kind == "annotation") {
      auto label = record.find("label");
      if (label == record.end() || !label->is_number_integer()) {
        throw Error(ErrorCode::MalformedRecord,
                    "line " + std::to_string(line_no) + ": annotation label must be an integer");
      }
      pending.push_back({require_string(record, "comment_id", line_no),
                         require_string(record, "annotator_id", line_no), label->get<long long>(), line_no});
    } else {
      throw Error(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": unknown kind '" + kind + "'");
    }
    if (end == content.size()) break;
  }

  for (const auto& attr : ignored_attributes) {
    if (warnings) warnings->push_back("ignored undeclared demographic attribute '" + attr + "'");
  }

  // Resolve annotations, then keep only comments and annotators that carry
  // at least one annotation.
  std::vector<Annotation> resolved;
  resolved.reserve(pending.size());
  for (const auto& p : pending) {
    auto c = staged.find_comment(p.comment_id);
    auto a = staged.find_annotator(p.annotator_id);
    if (!c || !a) {
      throw Error(ErrorCode::DanglingReference, "line " + std::to_string(p.line) + ": annotation cites unknown " +
                                                    (c ? "annotator '" + p.annotator_id + "'"
                                                       : "comment '" + p.comment_id + "'"));
    }
    if (p.label < 0 || p.label >= label_space_size) {
      throw Error(ErrorCode::LabelOutOfRange, "line " + std::to_string(p.line) + ": label " +
                                                  std::to_string(p.label) + " outside [0," +
                                                  std::to_string(label_space_size) + ")");
    }
    resolved.push_back({*c, *a, static_cast<int>(p.label)});
  }

  std::vector<char> comment_used(staged.comments().size(), 0);
  std::vector<char> annotator_used(staged.annotators().size(), 0);
  for (const auto& r : resolved) {
    comment_used[r.comment] = 1;
    annotator_used[r.annotator] = 1;
  }
  Corpus corpus(schema, label_space_size);
  std::vector<std::size_t> comment_map(staged.comments().size());
  std::vector<std::size_t> annotator_map(staged.annotators().size());
  std::size_t orphan_comments = 0;
  std::size_t orphan_annotators = 0;
  for (std::size_t c = 0; c < staged.comments().size(); ++c) {
    if (!comment_used[c]) {
      ++orphan_comments;
      continue;
    }
    comment_map[c] = corpus.add_comment(staged.comments()[c].id, staged.comments()[c].text);
  }
  for (std::size_t a = 0; a < staged.annotators().size(); ++a) {
    if (!annotator_used[a]) {
      ++orphan_annotators;
      continue;
    }
    annotator_map[a] = corpus.add_annotator(staged.annotators()[a].id, staged.annotators()[a].demographics);
  }
  for (const auto& r : resolved) corpus.add_annotation(comment_map[r.comment], annotator_map[r.annotator], r.label);
  if (warnings && orphan_comments) {
    warnings->push_back("dropped " + std::to_string(orphan_comments) + " comment(s) without annotations");
  }
  if (warnings && orphan_annotators) {
    warnings->push_back("dropped " + std::to_string(orphan_annotators) + " annotator(s) without annotations");
  }
  corpus.validate();
  return corpus;
}

Corpus ingest_corpus(const std::string& path, const std::vector<std::string>& schema, int label_space_size,
                     std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open corpus file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_corpus_jsonl(buffer.str(), schema, label_space_size, warnings);
}

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& c : corpus.comments()) {
    out += json{{"kind", "comment"}, {"id", c.id}, {"text", c.text}}.dump();
    out += '\n';
  }
  for (std::size_t a = 0; a < corpus.annotators().size(); ++a) {
    json demo = json::object();
    for (const auto& [attr, value] : corpus.demographics_map(a)) demo[attr] = value;
    out += json{{"kind", "annotator"}, {"id", corpus.annotators()[a].id}, {"demographics", demo}}.dump();
    out += '\n';
  }
  for (const auto& ann : corpus.annotations()) {
    out += json{{"kind", "annotation"},
                {"comment_id", corpus.comments()[ann.comment].id},
                {"annotator_id", corpus.annotators()[ann.annotator].id},
                {"label", ann.label}}
               .dump();
    out += '\n';
  }
  return out;
}

void write_corpus_jsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write corpus file '" + path + "'");
  out << corpus_to_jsonl(corpus);
}

namespace {

// Rebuilds a corpus from a filtered / relabelled annotation list.
Corpus rebuild(const Corpus& source, int label_space_size,
               const std::vector<std::pair<std::size_t, int>>& kept /* annotation index, new label */) {
  Corpus out(source.schema(), label_space_size);
  std::vector<long> comment_map(source.comments().size(), -1);
  std::vector<long> annotator_map(source.annotators().size(), -1);
  std::vector<char> comment_used(source.comments().size(), 0);
  std::vector<char> annotator_used(source.annotators().size(), 0);
  for (const auto& [i, label] : kept) {
    comment_used[source.annotations()[i].comment] = 1;
    annotator_used[source.annotations()[i].annotator] = 1;
  }
  for (std::size_t c = 0; c < source.comments().size(); ++c) {
    if (comment_used[c]) {
      comment_map[c] = static_cast<long>(out.add_comment(source.comments()[c].id, source.comments()[c].text));
    }
  }
  for (std::size_t a = 0; a < source.annotators().size(); ++a) {
    if (annotator_used[a]) {
      annotator_map[a] = static_cast<long>(
          out.add_annotator(source.annotators()[a].id, source.annotators()[a].demographics));
    }
  }
  for (const auto& [i, label] : kept) {
    const auto& ann = source.annotations()[i];
    out.add_annotation(static_cast<std::size_t>(comment_map[ann.comment]),
                       static_cast<std::size_t>(annotator_map[ann.annotator]), label);
  }
  return out;
}

}  // namespace

Corpus restrict_annotations(const Corpus& corpus, std::span<const std::size_t> annotation_indices) {
  std::vector<std::size_t> sorted(annotation_indices.begin(), annotation_indices.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<std::pair<std::size_t, int>> kept;
  kept.reserve(sorted.size());
  for (std::size_t i : sorted) {
    if (i >= corpus.annotations().size()) throw Error(ErrorCode::DanglingReference, "annotation index out of range");
    kept.emplace_back(i, corpus.annotations()[i].label);
  }
  return rebuild(corpus, corpus.label_space_size(), kept);
}

Corpus binarize_mhs(const Corpus& corpus) {
  if (corpus.label_space_size() != 3) {
    throw Error(ErrorCode::WrongLabelSpace, "binarize_mhs expects 3 classes, got " +
                                                std::to_string(corpus.label_space_size()));
  }
  std::vector<std::pair<std::size_t, int>> kept;
  for (std::size_t i = 0; i < corpus.annotations().size(); ++i) {
    const int label = corpus.annotations()[i].label;
    if (label == 1) continue;
    kept.emplace_back(i, label == 2 ? 1 : 0);
  }
  return rebuild(corpus, 2, kept);
}

Corpus binarize_popquorn(const Corpus& corpus) {
  if (corpus.label_space_size() != 5) {
    throw Error(ErrorCode::WrongLabelSpace, "binarize_popquorn expects 5 rating levels, got " +
                                                std::to_string(corpus.label_space_size()));
  }
  std::vector<std::pair<std::size_t, int>> kept;
  kept.reserve(corpus.annotations().size());
  for (std::size_t i = 0; i < corpus.annotations().size(); ++i) {
    kept.emplace_back(i, corpus.annotations()[i].label >= 2 ? 1 : 0);
  }
  return rebuild(corpus, 2, kept);
}

std::vector<SoftLabel> soft_labels(const Corpus& corpus, const std::vector<std::string>& comment_ids) {
  std::vector<std::size_t> all(corpus.annotations().size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return soft_labels(corpus, comment_ids, all);
}

std::vector<SoftLabel> soft_labels(const Corpus& corpus, const std::vector<std::string>& comment_ids,
                                   std::span<const std::size_t> annotation_subset) {
  if (comment_ids.empty()) throw Error(ErrorCode::EmptyCommentSet, "soft labels requested for no comments");
  std::vector<char> mask(corpus.annotations().size(), 0);
  for (std::size_t i : annotation_subset) {
    if (i >= mask.size()) throw Error(ErrorCode::DanglingReference, "annotation index out of range");
    mask[i] = 1;
  }
  std::vector<SoftLabel> out;
  out.reserve(comment_ids.size());
  for (const auto& id : comment_ids) {
    auto c = corpus.find_comment(id);
    if (!c) throw Error(ErrorCode::DanglingReference, "unknown comment '" + id + "'");
    const auto counts = corpus.label_counts(*c, mask);
    long total = 0;
    for (long n : counts) total += n;
    if (total == 0) {
      throw Error(ErrorCode::EmptyCommentSet, "comment '" + id + "' has no annotations in the given subset");
    }
    SoftLabel soft{id, std::vector<double>(counts.size())};
    for (std::size_t k = 0; k < counts.size(); ++k) {
      soft.distribution[k] = static_cast<double>(counts[k]) / static_cast<double>(total);
    }
    out.push_back(std::move(soft));
  }
  return out;
}

namespace {

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

BinarizationEffect binarization_effect_report(const Corpus& original, const Corpus& binarized) {
  const int source_classes = original.label_space_size();
  if (binarized.label_space_size() != 2 || (source_classes != 3 && source_classes != 5)) {
    throw Error(ErrorCode::MismatchedCorpora, "expected a 3- or 5-class original and a binary derivative");
  }
  // Side of the binary boundary for each original label; -1 marks the
  // removed intermediate class.
  std::vector<int> side(static_cast<std::size_t>(source_classes));
  int adjacent_low = 0;
  int adjacent_high = 0;
  if (source_classes == 3) {
    side = {0, -1, 1};
    adjacent_low = 0;
    adjacent_high = 2;
  } else {
    side = {0, 0, 1, 1, 1};
    adjacent_low = 1;
    adjacent_high = 2;
  }

  BinarizationEffect report;
  std::size_t increased = 0;
  std::size_t crossing = 0;
  std::size_t crossing_adjacent = 0;
  std::size_t disagreeing = 0;
  std::size_t disagreeing_intermediate = 0;
  std::vector<double> before_pos;
  std::vector<double> after_pos;
  for (std::size_t b = 0; b < binarized.comments().size(); ++b) {
    const std::string& id = binarized.comments()[b].id;
    auto o = original.find_comment(id);
    if (!o) throw Error(ErrorCode::MismatchedCorpora, "comment '" + id + "' missing from the original corpus");
    const auto orig_counts = original.label_counts(*o);
    const double before = normalized_disagreement(orig_counts);
    const double after = normalized_disagreement(binarized.label_counts(b));
    report.comment_ids.push_back(id);
    report.disagreement_before.push_back(before);
    report.disagreement_after.push_back(after);
    if (after > before) ++increased;
    bool low = false;
    bool high = false;
    for (int k = 0; k < source_classes; ++k) {
      if (orig_counts[static_cast<std::size_t>(k)] == 0) continue;
      if (side[static_cast<std::size_t>(k)] == 0) low = true;
      if (side[static_cast<std::size_t>(k)] == 1) high = true;
    }
    if (low && high) {
      ++crossing;
      if (orig_counts[static_cast<std::size_t>(adjacent_low)] > 0 &&
          orig_counts[static_cast<std::size_t>(adjacent_high)] > 0) {
        ++crossing_adjacent;
      }
    }
    if (before > 0.0) {
      ++disagreeing;
      if (source_classes == 3 && orig_counts[1] > 0) ++disagreeing_intermediate;
      before_pos.push_back(before);
      after_pos.push_back(after);
    }
  }
  const std::size_t n = binarized.comments().size();
  report.comments = n;
  if (n > 0) {
    report.increased_fraction = static_cast<double>(increased) / static_cast<double>(n);
    report.boundary_crossing_fraction = static_cast<double>(crossing) / static_cast<double>(n);
  }
  report.crossing_adjacent_fraction =
      crossing ? static_cast<double>(crossing_adjacent) / static_cast<double>(crossing) : 0.0;
  report.disagreeing_with_intermediate_fraction =
      disagreeing ? static_cast<double>(disagreeing_intermediate) / static_cast<double>(disagreeing) : 0.0;
  report.median_before = median(report.disagreement_before);
  report.median_after = median(report.disagreement_after);
  report.median_ratio = before_pos.empty() ? std::numeric_limits<double>::quiet_NaN()
                                           : median(after_pos) / median(before_pos);
  return report;
}

}  // namespace perspectra
