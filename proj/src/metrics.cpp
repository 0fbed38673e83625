#include "teli/metrics.hpp"

#include <sstream>

#include "json.hpp"

namespace teli {

void ConfusionCounts::add(int predicted, int truth) {
  if ((predicted != 0 && predicted != 1) || (truth != 0 && truth != 1)) {
    throw Error("confusion labels must be 0 or 1, got predicted=" + std::to_string(predicted) +
                " true=" + std::to_string(truth));
  }
  if (predicted == 1 && truth == 1) ++tp;
  else if (predicted == 1 && truth == 0) ++fp;
  else if (predicted == 0 && truth == 1) ++fn;
  else ++tn;
}

namespace {

ClassMetrics class_metrics(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  ClassMetrics m;
  if (tp + fp == 0) {
    m.precision_zero_denominator = true;
  } else {
    m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  if (tp + fn == 0) {
    m.recall_zero_denominator = true;
  } else {
    m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  if (m.precision + m.recall == 0.0) {
    m.f1_zero_denominator = true;
  } else {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

}  // namespace

EvalReport compute_report(const ConfusionCounts& counts) {
  if (counts.total() == 0) throw Error("compute_report on zero scored items");
  EvalReport report;
  report.counts = counts;
  report.covid = class_metrics(counts.tp, counts.fp, counts.fn);
  // non-covid metrics are the mirror image: tn plays the true-positive role
  report.non_covid = class_metrics(counts.tn, counts.fn, counts.fp);
  report.macro_f1 = 0.5 * (report.covid.f1 + report.non_covid.f1);
  report.accuracy =
      static_cast<double>(counts.tp + counts.tn) / static_cast<double>(counts.total());
  return report;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os.precision(6);
  os << "precision_covid " << covid.precision << "\n";
  os << "recall_covid " << covid.recall << "\n";
  os << "f1_covid " << covid.f1 << "\n";
  os << "precision_noncovid " << non_covid.precision << "\n";
  os << "recall_noncovid " << non_covid.recall << "\n";
  os << "f1_noncovid " << non_covid.f1 << "\n";
  os << "macro_f1 " << macro_f1 << "\n";
  os << "accuracy " << accuracy << "\n";
  os << "tp " << counts.tp << "\n";
  os << "fp " << counts.fp << "\n";
  os << "fn " << counts.fn << "\n";
  os << "tn " << counts.tn << "\n";
  return os.str();
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["precision_covid"] = covid.precision;
  j["recall_covid"] = covid.recall;
  j["f1_covid"] = covid.f1;
  j["precision_noncovid"] = non_covid.precision;
  j["recall_noncovid"] = non_covid.recall;
  j["f1_noncovid"] = non_covid.f1;
  j["macro_f1"] = macro_f1;
  j["accuracy"] = accuracy;
  j["tp"] = counts.tp;
  j["fp"] = counts.fp;
  j["fn"] = counts.fn;
  j["tn"] = counts.tn;
  nlohmann::json flags = nlohmann::json::array();
  auto note = [&](const ClassMetrics& m, const std::string& cls) {
    if (m.precision_zero_denominator) flags.push_back("precision_" + cls);
    if (m.recall_zero_denominator) flags.push_back("recall_" + cls);
    if (m.f1_zero_denominator) flags.push_back("f1_" + cls);
  };
  note(covid, "covid");
  note(non_covid, "noncovid");
  j["zero_denominator"] = std::move(flags);
  return j.dump(2);
}

std::vector<int> threshold_predictions(const Tensor& probabilities, double threshold) {
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(probabilities.numel()));
  for (std::int64_t i = 0; i < probabilities.numel(); ++i) {
    labels.push_back(probabilities[i] >= threshold ? 1 : 0);
  }
  return labels;
}

VoteResult majority_vote(const std::vector<int>& slice_labels) {
  if (slice_labels.empty()) throw Error("majority_vote on empty slice list");
  VoteResult res;
  for (int label : slice_labels) {
    if (label != 0 && label != 1) {
      throw Error("majority_vote labels must be 0 or 1, got " + std::to_string(label));
    }
    if (label == 1) ++res.positive_votes;
    else ++res.negative_votes;
  }
  res.tie = res.positive_votes == res.negative_votes;
  res.label = res.positive_votes >= res.negative_votes ? 1 : 0;
  return res;
}

}  // namespace teli
