// Command-line front end: train, evaluate, predict-series, summary,
// make-fixture. Exit codes: 0 success, 1 usage error, 2 data error,
// 3 numerical failure.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "teli/dataset.hpp"
#include "teli/kernels.hpp"
#include "teli/model.hpp"
#include "teli/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

int run_train(const teli::TrainConfig& config) {
  teli::TrainResult result = teli::train(config);
  if (!result.best_checkpoint.empty()) {
    std::printf("best epoch %d (val macro-F1 %.4f): %s\n", result.best_epoch,
                result.logs[static_cast<std::size_t>(result.best_epoch)].val_slice.macro_f1,
                result.best_checkpoint.string().c_str());
  }
  return 0;
}

int run_evaluate(const std::string& checkpoint, const std::string& data_root,
                 const std::string& split, double threshold, std::int64_t batch_size,
                 std::string csv_path, std::string report_path) {
  teli::LoadedCheckpoint loaded = teli::load_checkpoint(checkpoint);
  if (csv_path.empty()) csv_path = split + "_predictions.csv";
  if (report_path.empty()) report_path = split + "_report.json";

  std::optional<teli::EvalReport> series_report;
  teli::EvalOptions options{threshold, batch_size};
  teli::EvalReport report =
      teli::evaluate_split(loaded.model, data_root, split, options, csv_path, &series_report);

  std::fputs(report.to_text().c_str(), stdout);
  if (series_report) {
    std::printf("series_macro_f1 %.6f\n", series_report->macro_f1);
  }
  std::ofstream rf(report_path, std::ios::trunc);
  rf << report.to_json() << "\n";
  std::printf("per-slice CSV: %s\nreport: %s\n", csv_path.c_str(), report_path.c_str());
  return 0;
}

int run_predict_series(const std::string& checkpoint, const std::string& test_root,
                       double threshold, std::int64_t batch_size, std::string csv_path) {
  teli::LoadedCheckpoint loaded = teli::load_checkpoint(checkpoint);
  if (csv_path.empty()) csv_path = "series_predictions.csv";
  teli::EvalOptions options{threshold, batch_size};
  const auto rows = teli::predict_series(loaded.model, test_root, options, csv_path);
  for (const auto& r : rows) {
    std::printf("%s -> %s (%lld covid / %lld non-covid)%s\n", r.series_id.c_str(),
                r.label == 1 ? "covid" : "non-covid", static_cast<long long>(r.covid_votes),
                static_cast<long long>(r.noncovid_votes), r.tie ? " [tie]" : "");
  }
  std::printf("series CSV: %s\n", csv_path.c_str());
  return 0;
}

int run_summary(const std::string& model_name) {
  teli::ModelSpec spec;
  if (model_name == "telinet") {
    spec = teli::telinet_spec();
  } else if (model_name == "vgg16") {
    spec = teli::vgg16_spec();
  } else {
    throw teli::UsageError("model must be telinet or vgg16, got '" + model_name + "'");
  }
  teli::Model model = teli::build_model(spec, std::nullopt);
  std::fputs(model.summary().c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TeliNet CT-slice classifier"};
  app.require_subcommand(1);

  teli::TrainConfig train_config;
  std::string data_root, out_dir;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--model", train_config.model, "telinet|vgg16")
      ->capture_default_str();
  train_cmd->add_option("--data", data_root, "dataset root")->required();
  train_cmd->add_option("--epochs", train_config.epochs, "number of epochs")->required();
  train_cmd->add_option("--batch-size", train_config.batch_size, "mini-batch size")
      ->capture_default_str();
  train_cmd->add_option("--lr", train_config.initial_lr, "initial learning rate")
      ->capture_default_str();
  train_cmd->add_option("--lr-decay", train_config.lr_decay, "per-epoch LR factor")
      ->capture_default_str();
  train_cmd->add_option("--seed", train_config.seed, "RNG seed")->capture_default_str();
  train_cmd->add_option("--channels", train_config.channels, "input channels (1 or 3)")
      ->capture_default_str();
  train_cmd->add_option("--out", out_dir, "checkpoint/log output directory")->required();
  train_cmd->add_option("--dropout", train_config.dropout_rate, "dropout rate")
      ->capture_default_str();
  train_cmd->add_option("--alpha", train_config.leaky_alpha, "LeakyReLU slope")
      ->capture_default_str();
  train_cmd->add_option("--bn-momentum", train_config.bn_momentum, "batchnorm EMA momentum")
      ->capture_default_str();
  train_cmd->add_option("--threshold", train_config.threshold, "decision threshold")
      ->capture_default_str();
  train_cmd->add_flag("--deterministic", train_config.deterministic,
                      "strict-deterministic mode (single-threaded kernels)");
  train_cmd->add_flag("--verbose", train_config.verbose, "log every batch");
  train_cmd->add_flag("--dropout-second-block-only", train_config.dropout_second_block_only,
                      "apply dropout only after the second dense block");

  std::string checkpoint, split = "validation", csv_path, report_path;
  double threshold = 0.5;
  std::int64_t batch_size = 32;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a labeled split");
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--data", data_root, "dataset root")->required();
  eval_cmd->add_option("--split", split, "train|validation")->capture_default_str();
  eval_cmd->add_option("--threshold", threshold, "decision threshold")->capture_default_str();
  eval_cmd->add_option("--batch-size", batch_size, "inference batch size")
      ->capture_default_str();
  eval_cmd->add_option("--csv", csv_path, "per-slice CSV output path");
  eval_cmd->add_option("--report", report_path, "JSON report output path");

  std::string test_root;
  auto* predict_cmd = app.add_subcommand("predict-series", "Label test series by majority vote");
  predict_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  predict_cmd->add_option("--test", test_root, "test root with one folder per series")
      ->required();
  predict_cmd->add_option("--threshold", threshold, "decision threshold")
      ->capture_default_str();
  predict_cmd->add_option("--batch-size", batch_size, "inference batch size")
      ->capture_default_str();
  predict_cmd->add_option("--csv", csv_path, "series CSV output path");

  std::string model_name = "telinet";
  auto* summary_cmd = app.add_subcommand("summary", "Print the layer table");
  summary_cmd->add_option("--model", model_name, "telinet|vgg16")->capture_default_str();

  std::string fixture_dir;
  auto* fixture_cmd = app.add_subcommand("make-fixture", "Write the synthetic demo dataset");
  fixture_cmd->add_option("--out", fixture_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      train_config.data_root = data_root;
      train_config.out_dir = out_dir;
      return run_train(train_config);
    }
    if (*eval_cmd) {
      return run_evaluate(checkpoint, data_root, split, threshold, batch_size, csv_path,
                          report_path);
    }
    if (*predict_cmd) {
      return run_predict_series(checkpoint, test_root, threshold, batch_size, csv_path);
    }
    if (*summary_cmd) {
      return run_summary(model_name);
    }
    if (*fixture_cmd) {
      teli::make_fixture(fixture_dir);
      std::printf("fixture written to %s\n", fixture_dir.c_str());
      return 0;
    }
  } catch (const teli::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const teli::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const teli::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
