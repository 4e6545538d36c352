#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fairinv {

/// |P(ŷ=1 | s=a) − P(ŷ=1 | s=b)|, maximised over group pairs when s has more
/// than two values. Throws DataError if fewer than two groups are present.
double delta_dp(std::span<const int> pred, std::span<const int> s);

/// Absolute true-positive-rate gap between groups (max pairwise for >2).
/// Throws DataError if a present group has no y=1 member.
double delta_eo(std::span<const int> pred, std::span<const int> y, std::span<const int> s);

/// Mann–Whitney AUC, ties counted as one half. O(n log n).
double auc(std::span<const double> scores, std::span<const int> y);

/// 2TP / (2TP + FP + FN); 0 when the denominator is 0.
double f1(std::span<const int> pred, std::span<const int> y);

/// Hard predictions at probability 0.5: ŷ = 1 iff logit > 0.
std::vector<int> threshold_logits(std::span<const double> logits);

struct GroupStat {
  int group = 0;
  std::size_t count = 0;
  std::size_t positives = 0;  // y = 1 members
  double positive_rate = 0.0;  // P(ŷ=1 | s)
  double tpr = 0.0;            // P(ŷ=1 | y=1, s); 0 if no positives
};

struct MetricsReport {
  std::string variant;
  std::string sens_attr;
  std::uint64_t seed = 0;
  std::string config_hash;
  double auc = 0.0;
  double f1 = 0.0;
  double delta_dp = 0.0;
  double delta_eo = 0.0;
  double accuracy = 0.0;
  std::size_t n_eval = 0;
  std::vector<GroupStat> groups;
  double seconds = 0.0;
};

/// Assembles every metric from logits restricted to `nodes`.
MetricsReport compute_report(std::span<const double> logits, std::span<const int> y,
                             std::span<const int> s, std::span<const std::size_t> nodes);

/// One JSON object with a fixed key order.
std::string report_to_json(const MetricsReport& report, bool include_timing = true);
MetricsReport report_from_json(const std::string& text);

std::string results_csv_header();
/// Timing column last so determinism checks can drop it.
std::string results_csv_row(const MetricsReport& report);

}  // namespace fairinv
