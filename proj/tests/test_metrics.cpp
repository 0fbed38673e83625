#include <algorithm>

#include "doctest.h"
#include "helpers.hpp"
#include "teli/metrics.hpp"

using teli::ConfusionCounts;

TEST_CASE("accumulate increments exactly one cell") {
  ConfusionCounts counts;
  counts.add(1, 1);
  CHECK(counts.tp == 1);
  counts.add(1, 0);
  CHECK(counts.fp == 1);
  counts.add(0, 1);
  CHECK(counts.fn == 1);
  counts.add(0, 0);
  CHECK(counts.tn == 1);
  CHECK(counts.total() == 4);
  CHECK_THROWS_AS(counts.add(2, 0), teli::Error);
}

TEST_CASE("symmetric confusion gives 0.8 across the board") {
  ConfusionCounts counts{8, 2, 2, 8};
  teli::EvalReport report = teli::compute_report(counts);
  CHECK(report.covid.precision == 0.8);
  CHECK(report.covid.recall == 0.8);
  CHECK(report.covid.f1 == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(report.non_covid.precision == 0.8);
  CHECK(report.non_covid.recall == 0.8);
  CHECK(report.non_covid.f1 == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(report.macro_f1 == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(report.accuracy == 0.8);
}

TEST_CASE("zero-denominator cells are flagged, never NaN") {
  ConfusionCounts counts{0, 0, 5, 5};
  teli::EvalReport report = teli::compute_report(counts);
  CHECK(report.covid.precision == 0.0);
  CHECK(report.covid.precision_zero_denominator);
  CHECK(report.covid.f1 == 0.0);
  CHECK(report.covid.f1_zero_denominator);
  // non-covid: precision 5/10, recall 5/5, f1 = 2*(0.5*1)/(0.5+1) = 2/3
  CHECK(report.non_covid.precision == 0.5);
  CHECK(report.non_covid.recall == 1.0);
  CHECK(report.non_covid.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(report.macro_f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(report.accuracy == 0.5);

  CHECK_THROWS_AS(teli::compute_report(ConfusionCounts{}), teli::Error);
}

TEST_CASE("report is permutation-invariant in the scored stream") {
  const std::vector<std::pair<int, int>> stream = {{1, 1}, {0, 1}, {1, 0}, {0, 0},
                                                   {1, 1}, {1, 1}, {0, 0}, {1, 0}};
  ConfusionCounts forward_counts;
  for (const auto& [p, t] : stream) forward_counts.add(p, t);
  ConfusionCounts reverse_counts;
  for (auto it = stream.rbegin(); it != stream.rend(); ++it) {
    reverse_counts.add(it->first, it->second);
  }
  const auto a = teli::compute_report(forward_counts);
  const auto b = teli::compute_report(reverse_counts);
  CHECK(a.macro_f1 == b.macro_f1);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.counts.tp == b.counts.tp);
}

TEST_CASE("macro F1 is symmetric under class swap") {
  ConfusionCounts counts{7, 3, 2, 11};
  // swapping the positive class maps tp<->tn and fp<->fn
  ConfusionCounts swapped{11, 2, 3, 7};
  CHECK(teli::compute_report(counts).macro_f1 == teli::compute_report(swapped).macro_f1);
}

TEST_CASE("accuracy is exactly (tp+tn)/total") {
  ConfusionCounts counts{3, 1, 2, 10};
  CHECK(teli::compute_report(counts).accuracy == 13.0 / 16.0);
}

TEST_CASE("merging sharded counts is addition") {
  ConfusionCounts a{1, 2, 3, 4}, b{10, 20, 30, 40};
  a += b;
  CHECK(a.tp == 11);
  CHECK(a.fp == 22);
  CHECK(a.fn == 33);
  CHECK(a.tn == 44);
}

TEST_CASE("threshold boundary is inclusive") {
  teli::Tensor probs({3, 1}, {0.5f, 0.4999f, 0.9f});
  auto labels = teli::threshold_predictions(probs, 0.5);
  CHECK(labels == std::vector<int>{1, 0, 1});

  auto all_ones = teli::threshold_predictions(probs, 0.0);
  CHECK(all_ones == std::vector<int>{1, 1, 1});
}

TEST_CASE("majority vote with the covid tie rule") {
  std::vector<int> series(30, 1);
  series.insert(series.end(), 20, 0);
  auto vote = teli::majority_vote(series);
  CHECK(vote.label == 1);
  CHECK(vote.positive_votes == 30);
  CHECK(!vote.tie);

  CHECK(teli::majority_vote({0, 0, 0, 1}).label == 0);

  auto tie = teli::majority_vote({1, 0});
  CHECK(tie.label == 1);
  CHECK(tie.tie);

  CHECK_THROWS_AS(teli::majority_vote({}), teli::Error);
}

TEST_CASE("majority vote ignores slice order") {
  std::vector<int> labels = {1, 0, 1, 1, 0, 0, 1};
  auto sorted_labels = labels;
  std::sort(sorted_labels.begin(), sorted_labels.end());
  CHECK(teli::majority_vote(labels).label == teli::majority_vote(sorted_labels).label);
}

TEST_CASE("report serialization carries the documented keys") {
  teli::EvalReport report = teli::compute_report(ConfusionCounts{8, 2, 2, 8});
  const std::string text = report.to_text();
  for (const char* key : {"precision_covid", "recall_covid", "f1_covid", "precision_noncovid",
                          "recall_noncovid", "f1_noncovid", "macro_f1", "accuracy", "tp", "fp",
                          "fn", "tn"}) {
    CHECK(text.find(key) != std::string::npos);
    CHECK(report.to_json().find(key) != std::string::npos);
  }
}
