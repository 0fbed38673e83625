#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "teli/tensor.hpp"

namespace teli {

// covid is the positive class (label 1).
struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }

  void add(int predicted, int truth);

  // merge is associative and commutative, so counts can be sharded and summed
  ConfusionCounts& operator+=(const ConfusionCounts& other) {
    tp += other.tp;
    fp += other.fp;
    fn += other.fn;
    tn += other.tn;
    return *this;
  }
};

struct ClassMetrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  bool precision_zero_denominator = false;
  bool recall_zero_denominator = false;
  bool f1_zero_denominator = false;
};

struct EvalReport {
  ClassMetrics covid;
  ClassMetrics non_covid;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  ConfusionCounts counts;

  std::string to_text() const;
  std::string to_json() const;
};

EvalReport compute_report(const ConfusionCounts& counts);

// label 1 iff p >= threshold
std::vector<int> threshold_predictions(const Tensor& probabilities, double threshold);

struct VoteResult {
  int label = 0;
  std::int64_t positive_votes = 0;
  std::int64_t negative_votes = 0;
  bool tie = false;  // exact ties go to covid and are flagged
};

VoteResult majority_vote(const std::vector<int>& slice_labels);

}  // namespace teli
