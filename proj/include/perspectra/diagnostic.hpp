#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "perspectra/corpus.hpp"
#include "perspectra/encoder.hpp"
#include "perspectra/nn.hpp"
#include "perspectra/splitter.hpp"

namespace perspectra {

struct DiagnosticConfig {
  std::size_t hidden = 256;
  double dropout = 0.2;
  int max_epochs = 50;
  int patience = 5;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  nn::EmbeddingDims dims;
  // Category embeddings start at zero, so the demographic pathway is silent
  // until training finds an association.
  bool zero_init_demographics = true;
  // Decoupled weight decay on the category tables: each step scales them by
  // 1 - learning_rate * demographic_weight_decay. Keeps the pathway from
  // fitting spurious group associations.
  double demographic_weight_decay = 300.0;
  // Ablation: demographic embeddings zeroed and never updated.
  bool freeze_demographics_at_zero = false;
};

Eigen::VectorXd pool_demographics(const nn::DemographicEmbedding& table, const std::vector<std::string>& demographics);

struct ProbeRun {
  double test_auc = 0.0;
  double best_val_auc = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
  // Test-set class probabilities, row-major n x K.
  std::vector<double> test_probs;
};

// Trains one probe on [h] or [h; e(d)] per training annotation and returns
// the test AUC of the epoch with the best validation AUC.
ProbeRun train_probe(const Corpus& corpus, const Split& split, const EncodingCache& encodings, bool use_demographics,
                     std::uint64_t seed, const DiagnosticConfig& config = {});

struct DiagnosticResult {
  double mean_auc = 0.0;
  std::vector<double> per_seed;
};

DiagnosticResult train_diagnostic(const Corpus& corpus, const Split& split, const EncodingCache& encodings,
                                  bool use_demographics, const std::vector<std::uint64_t>& seeds,
                                  const DiagnosticConfig& config = {});

// Copy of `corpus` where the demographics of the annotators appearing in
// `annotations` are permuted among themselves. Indices are unchanged.
Corpus shuffle_demographics(const Corpus& corpus, const std::vector<std::size_t>& annotations, std::uint64_t seed);

// Shuffles train, validation and test annotators independently.
Corpus shuffle_split_demographics(const Corpus& corpus, const Split& split, std::uint64_t seed);

struct GainRecord {
  std::uint64_t split_seed = 0;
  double auc_text = 0.0;
  double auc_text_demo = 0.0;
  double delta_auc = 0.0;
  std::optional<double> auc_shuffled;
  SplitDescriptor descriptor;
  std::string error;  // non-empty when the split failed; other fields unset

  std::optional<double> delta_shuffled() const {
    if (!auc_shuffled) return std::nullopt;
    return *auc_shuffled - auc_text;
  }
};

struct GainOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  bool shuffled_control = true;
  std::size_t jobs = 1;
  DiagnosticConfig probe;
  const Corpus* original_view = nullptr;
};

GainRecord measure_split_gain(const Corpus& corpus, const Split& split, const EncodingCache& encodings,
                              const GainOptions& options);

// One record per split; a failing split records its error and the rest
// continue.
std::vector<GainRecord> measure_gain(const Corpus& corpus, const std::vector<Split>& splits,
                                     const EncodingCache& encodings, const GainOptions& options);

std::vector<std::string> gain_csv_header();
std::string gains_to_csv(const std::vector<GainRecord>& gains);
std::vector<GainRecord> gains_from_csv(const std::string& content);
void write_gains_csv(const std::vector<GainRecord>& gains, const std::string& path);
std::vector<GainRecord> read_gains_csv(const std::string& path);

}  // namespace perspectra
