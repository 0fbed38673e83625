#include "teli/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "json.hpp"
#include "teli/kernels.hpp"
#include "teli/optim.hpp"

namespace teli {

namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

void TrainConfig::validate() const {
  if (model != "telinet" && model != "vgg16") {
    throw UsageError("model must be telinet or vgg16, got '" + model + "'");
  }
  if (data_root.empty()) throw UsageError("dataset root is required");
  if (out_dir.empty()) throw UsageError("output directory is required");
  if (epochs < 0) throw UsageError("epochs must be >= 0");
  if (batch_size < 1) throw UsageError("batch size must be >= 1");
  if (initial_lr <= 0.0) throw UsageError("learning rate must be positive");
  if (lr_decay <= 0.0 || lr_decay > 1.0) throw UsageError("lr decay must be in (0,1]");
  if (dropout_rate < 0.0f || dropout_rate >= 1.0f) {
    throw UsageError("dropout rate must be in [0,1)");
  }
  if (leaky_alpha < 0.0f) throw UsageError("leaky alpha must be >= 0");
  if (bn_epsilon <= 0.0f) throw UsageError("batchnorm epsilon must be positive");
  if (bn_momentum <= 0.0f || bn_momentum >= 1.0f) {
    throw UsageError("batchnorm momentum must be in (0,1)");
  }
  if (threshold < 0.0 || threshold > 1.0) throw UsageError("threshold must be in [0,1]");
  if (channels != 1 && channels != 3) throw UsageError("channels must be 1 or 3");
  if (rmsprop_rho <= 0.0f || rmsprop_rho >= 1.0f) throw UsageError("rho must be in (0,1)");
  if (rmsprop_epsilon <= 0.0f) throw UsageError("rmsprop epsilon must be positive");
}

ModelSpec TrainConfig::model_spec() const {
  if (model == "telinet") {
    TelinetConfig mc;
    mc.channels = channels;
    mc.leaky_alpha = leaky_alpha;
    mc.dropout_rate = dropout_rate;
    mc.dropout_second_block_only = dropout_second_block_only;
    mc.bn_epsilon = bn_epsilon;
    mc.bn_momentum = bn_momentum;
    return telinet_spec(mc);
  }
  Vgg16Config mc;
  mc.channels = channels;
  return vgg16_spec(mc);
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

namespace {

struct SlicePrediction {
  const DatasetEntry* entry;
  float probability;
  int predicted;
};

std::vector<SlicePrediction> score_entries(Model& model,
                                           const std::vector<DatasetEntry>& entries,
                                           double threshold, std::int64_t batch_size) {
  const ModelSpec& spec = model.spec();
  const int channels = static_cast<int>(spec.channels);
  const std::int64_t target = spec.height;
  const std::int64_t n = static_cast<std::int64_t>(entries.size());
  std::vector<SlicePrediction> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t first = 0; first < n; first += batch_size) {
    const std::int64_t count = std::min(batch_size, n - first);
    Batch batch = load_batch(entries, first, count, channels, target);
    Tensor probs = model.forward(batch.images, Mode::Inference);
    for (std::int64_t i = 0; i < count; ++i) {
      const float p = probs[i];
      out.push_back({&entries[static_cast<std::size_t>(first + i)], p,
                     p >= threshold ? 1 : 0});
    }
  }
  return out;
}

void write_slice_csv(const fs::path& csv_path, const std::vector<SlicePrediction>& slices) {
  if (csv_path.empty()) return;
  std::ofstream f(csv_path, std::ios::trunc);
  if (!f) throw DataError("cannot open CSV for writing: " + csv_path.string());
  f << "path,probability,predicted,true\n";
  char buf[64];
  for (const auto& s : slices) {
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(s.probability));
    f << s.entry->path.string() << ',' << buf << ',' << s.predicted << ',' << s.entry->label
      << "\n";
  }
  if (!f) throw DataError("failed writing CSV: " + csv_path.string());
}

// Series id for a slice under <split>/<class>/: present only when the slice
// sits in a subfolder of its class folder.
std::optional<std::string> series_key(const fs::path& class_root, const fs::path& file) {
  const fs::path rel = fs::relative(file, class_root);
  if (!rel.has_parent_path() || rel.parent_path().empty()) return std::nullopt;
  return (class_root.filename() / rel.parent_path()).string();
}

}  // namespace

EvalReport evaluate_split(Model& model, const fs::path& data_root, const std::string& split,
                          const EvalOptions& options, const fs::path& csv_path,
                          std::optional<EvalReport>* series_report) {
  DatasetIndex index = scan_split(data_root, split);
  const auto slices = score_entries(model, index.entries, options.threshold,
                                    options.batch_size);
  write_slice_csv(csv_path, slices);

  ConfusionCounts counts;
  for (const auto& s : slices) counts.add(s.predicted, s.entry->label);
  EvalReport report = compute_report(counts);

  if (series_report != nullptr) {
    *series_report = std::nullopt;
    // group by (class folder, series subfolder); the class folder is two
    // levels above only when slices are nested one level deeper
    std::map<std::string, std::pair<int, std::vector<int>>> groups;
    bool any_nested = false;
    const fs::path split_dir = data_root / split;
    for (const auto& s : slices) {
      // class folder = the path component directly under the split folder
      fs::path rel = fs::relative(s.entry->path, split_dir);
      auto it = rel.begin();
      if (it == rel.end()) continue;
      const fs::path class_dir = split_dir / *it;
      auto key = series_key(class_dir, s.entry->path);
      if (!key) continue;
      any_nested = true;
      auto& group = groups[*key];
      group.first = s.entry->label;
      group.second.push_back(s.predicted);
    }
    if (any_nested) {
      ConfusionCounts series_counts;
      for (const auto& [key, group] : groups) {
        series_counts.add(majority_vote(group.second).label, group.first);
      }
      *series_report = compute_report(series_counts);
    }
  }
  return report;
}

std::vector<SeriesPrediction> predict_series(Model& model, const fs::path& test_root,
                                             const EvalOptions& options,
                                             const fs::path& csv_path) {
  const std::vector<SeriesIndex> series_list = scan_test_series(test_root);
  std::vector<SeriesPrediction> rows;
  rows.reserve(series_list.size());
  for (const SeriesIndex& series : series_list) {
    std::vector<DatasetEntry> entries;
    entries.reserve(series.slice_paths.size());
    for (const auto& p : series.slice_paths) entries.push_back({p, 0});
    const auto slices = score_entries(model, entries, options.threshold, options.batch_size);
    std::vector<int> labels;
    labels.reserve(slices.size());
    for (const auto& s : slices) labels.push_back(s.predicted);
    const VoteResult vote = majority_vote(labels);
    rows.push_back({series.series_id, vote.positive_votes, vote.negative_votes, vote.label,
                    vote.tie});
  }
  if (!csv_path.empty()) {
    std::ofstream f(csv_path, std::ios::trunc);
    if (!f) throw DataError("cannot open CSV for writing: " + csv_path.string());
    f << "series_id,covid_vote_count,noncovid_vote_count,series_label,tie_flag\n";
    for (const auto& r : rows) {
      f << r.series_id << ',' << r.covid_votes << ',' << r.noncovid_votes << ',' << r.label
        << ',' << (r.tie ? 1 : 0) << "\n";
    }
    if (!f) throw DataError("failed writing CSV: " + csv_path.string());
  }
  return rows;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

namespace {

nlohmann::json log_to_json(const EpochLog& log) {
  nlohmann::json j;
  j["epoch"] = log.epoch;
  j["mean_loss"] = log.mean_loss;
  j["learning_rate"] = log.learning_rate;
  j["seconds"] = log.seconds;
  j["val_macro_f1"] = log.val_slice.macro_f1;
  j["val_accuracy"] = log.val_slice.accuracy;
  if (log.val_series) j["val_series_macro_f1"] = log.val_series->macro_f1;
  return j;
}

}  // namespace

TrainResult train(const TrainConfig& config) {
  config.validate();
  set_strict_deterministic(config.deterministic);

  // dataset problems must surface before any training work
  DatasetIndex train_index = scan_split(config.data_root, "train");
  (void)scan_split(config.data_root, "validation");

  fs::create_directories(config.out_dir);

  TrainResult result;
  result.model = build_model(config.model_spec(), config.seed);

  Rmsprop optimizer({config.initial_lr, config.rmsprop_rho, config.rmsprop_epsilon});
  const LrSchedule schedule{config.initial_lr, config.lr_decay};
  const std::int64_t image_size = result.model.spec().height;

  double best_macro_f1 = -1.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = clock_type::now();
    const double lr = lr_at_epoch(schedule, epoch);
    optimizer.set_learning_rate(lr);

    BatchStream stream(train_index, config.batch_size, config.seed, epoch,
                       config.channels, image_size);
    double loss_sum = 0.0;
    std::int64_t batch_count = 0;
    while (auto batch = stream.next()) {
      Tensor probs = result.model.forward(batch->images, Mode::Train);
      BceResult bce = bce_loss(probs, batch->labels, config.bce_clip);
      if (!std::isfinite(bce.mean_loss)) {
        throw NumericError("NaN loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_count));
      }
      result.model.backward(bce.grad);
      optimizer.step(result.model.params());
      loss_sum += bce.mean_loss;
      ++batch_count;
      if (config.verbose) {
        std::printf("  epoch %d batch %lld loss %.6f\n", epoch,
                    static_cast<long long>(batch_count - 1), bce.mean_loss);
      }
    }

    EpochLog log;
    log.epoch = epoch;
    log.mean_loss = batch_count > 0 ? loss_sum / static_cast<double>(batch_count) : 0.0;
    log.learning_rate = lr;
    EvalOptions val_options{config.threshold, config.batch_size};
    log.val_slice = evaluate_split(result.model, config.data_root, "validation", val_options,
                                   fs::path(), &log.val_series);

    char checkpoint_name[64];
    std::snprintf(checkpoint_name, sizeof(checkpoint_name), "epoch_%04d.ckpt", epoch);
    const fs::path ckpt_path = config.out_dir / checkpoint_name;
    save_checkpoint(result.model, &optimizer, epoch, config.seed, ckpt_path);
    result.final_checkpoint = ckpt_path;

    if (log.val_slice.macro_f1 > best_macro_f1) {
      best_macro_f1 = log.val_slice.macro_f1;
      result.best_epoch = epoch;
      result.best_checkpoint = config.out_dir / "best.ckpt";
      fs::copy_file(ckpt_path, result.best_checkpoint, fs::copy_options::overwrite_existing);
    }

    log.seconds = std::chrono::duration<double>(clock_type::now() - t0).count();
    std::printf("epoch %d  loss %.6f  lr %.6g  val_macro_f1 %.4f  (%.1fs)\n", epoch,
                log.mean_loss, lr, log.val_slice.macro_f1, log.seconds);
    std::fflush(stdout);
    result.logs.push_back(std::move(log));
  }

  if (config.epochs == 0) {
    // nothing trained; still leave a loadable snapshot of the initialization
    result.final_checkpoint = config.out_dir / "epoch_init.ckpt";
    save_checkpoint(result.model, nullptr, 0, config.seed, result.final_checkpoint);
  }

  nlohmann::json jlog = nlohmann::json::array();
  for (const auto& log : result.logs) jlog.push_back(log_to_json(log));
  std::ofstream lf(config.out_dir / "training_log.json", std::ios::trunc);
  lf << jlog.dump(2) << "\n";

  return result;
}

}  // namespace teli
