#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "teli/dataset.hpp"
#include "teli/metrics.hpp"
#include "teli/model.hpp"

namespace teli {

struct TrainConfig {
  std::string model = "telinet";  // telinet | vgg16
  std::filesystem::path data_root;
  std::filesystem::path out_dir;
  int epochs = 0;
  std::int64_t batch_size = 32;
  double initial_lr = 1e-3;
  double lr_decay = 0.7;
  std::uint64_t seed = 0;
  float dropout_rate = 0.10f;
  float leaky_alpha = 0.3f;
  float bn_epsilon = 1e-3f;
  float bn_momentum = 0.99f;
  double threshold = 0.5;
  int channels = 1;
  bool deterministic = false;
  bool verbose = false;
  float rmsprop_rho = 0.9f;
  float rmsprop_epsilon = 1e-7f;
  float bce_clip = 1e-7f;
  bool dropout_second_block_only = false;

  // Throws UsageError on any out-of-range value. Called before any work.
  void validate() const;

  ModelSpec model_spec() const;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double learning_rate = 0.0;
  double seconds = 0.0;
  EvalReport val_slice;
  std::optional<EvalReport> val_series;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> logs;
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
  int best_epoch = -1;
};

// Full training loop: per-epoch LR schedule, shuffled batches,
// forward/BCE/backward/RMSprop, validation in inference mode, one checkpoint
// per epoch plus best-by-macro-F1 and final copies, and a structured log at
// <out_dir>/training_log.json.
TrainResult train(const TrainConfig& config);

struct EvalOptions {
  double threshold = 0.5;
  std::int64_t batch_size = 32;
};

// Inference over every slice of a split; fills counts, optionally groups
// slices into series by subfolder for a series-level report, and writes the
// per-slice CSV (path,probability,predicted,true) when csv_path is set.
EvalReport evaluate_split(Model& model, const std::filesystem::path& data_root,
                          const std::string& split, const EvalOptions& options,
                          const std::filesystem::path& csv_path,
                          std::optional<EvalReport>* series_report = nullptr);

struct SeriesPrediction {
  std::string series_id;
  std::int64_t covid_votes = 0;
  std::int64_t noncovid_votes = 0;
  int label = 0;
  bool tie = false;
};

// Slice-level inference + majority vote per series; rows ordered by
// series_id. Writes CSV when csv_path is set.
std::vector<SeriesPrediction> predict_series(Model& model,
                                             const std::filesystem::path& test_root,
                                             const EvalOptions& options,
                                             const std::filesystem::path& csv_path);

}  // namespace teli
