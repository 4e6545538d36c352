#include <doctest.h>

#include <cmath>

#include "fairinv/error.hpp"
#include "fairinv/metrics.hpp"
#include "fairinv/tensor.hpp"

using namespace fairinv;

namespace {

// Counting oracles written straight from the definitions.
double rate(const std::vector<int>& pred, const std::vector<int>& s, int g,
            const std::vector<int>* y) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (s[i] != g || (y && (*y)[i] != 1)) continue;
    den += 1;
    num += pred[i];
  }
  return num / den;
}

double brute_auc(const std::vector<double>& sc, const std::vector<int>& y) {
  double good = 0, pairs = 0;
  for (std::size_t i = 0; i < sc.size(); ++i) {
    for (std::size_t j = 0; j < sc.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1;
      good += sc[i] > sc[j] ? 1.0 : (sc[i] == sc[j] ? 0.5 : 0.0);
    }
  }
  return good / pairs;
}

}  // namespace

TEST_CASE("delta_dp examples") {
  const std::vector<int> s{0, 0, 0, 0, 1, 1, 1, 1};
  CHECK(delta_dp(std::vector<int>{1, 0, 1, 0, 1, 1, 1, 0}, s) == 0.25);
  CHECK(delta_dp(std::vector<int>{1, 0, 1, 0, 0, 1, 0, 1}, s) == 0.0);
  CHECK(delta_dp(std::vector<int>(8, 1), s) == 0.0);
  CHECK_THROWS_AS(delta_dp(std::vector<int>{1, 0}, std::vector<int>{1, 1}), DataError);
  CHECK(delta_dp(std::vector<int>{1, 0, 0}, std::vector<int>{0, 1, 2}) == 1.0);
}

TEST_CASE("delta_eo examples") {
  const std::vector<int> y{1, 1, 1, 1, 0, 0};
  const std::vector<int> s{0, 0, 1, 1, 0, 1};
  CHECK(delta_eo(std::vector<int>{1, 0, 1, 1, 0, 0}, y, s) == 0.5);
  CHECK(delta_eo(y, y, s) == 0.0);
  CHECK_THROWS_AS(delta_eo(std::vector<int>{1, 0}, std::vector<int>{1, 0},
                           std::vector<int>{0, 1}),
                  DataError);
}

TEST_CASE("auc and f1 examples") {
  CHECK(auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}) == 1.0);
  CHECK(auc(std::vector<double>(6, 0.3), std::vector<int>{1, 0, 1, 0, 0, 1}) == 0.5);
  CHECK(f1(std::vector<int>{1, 0, 1}, std::vector<int>{1, 0, 1}) == 1.0);
  CHECK(f1(std::vector<int>{0, 0, 0}, std::vector<int>{1, 0, 1}) == 0.0);
  // TP=2, FP=1, FN=1
  CHECK(f1(std::vector<int>{1, 1, 1, 0, 0}, std::vector<int>{1, 1, 0, 1, 0}) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(threshold_logits(std::vector<double>{0.0, 1e-9, -2}) == std::vector<int>{0, 1, 0});
}

TEST_CASE("metrics equal brute-force counting on random instances") {
  Rng rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 4 + rng.below(197);
    const int groups = 2 + static_cast<int>(rng.below(2));
    std::vector<double> sc(n);
    std::vector<int> y(n), s(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      sc[i] = std::round(rng.normal() * 4) / 4;  // many ties
      y[i] = rng.bernoulli(0.4);
      s[i] = static_cast<int>(rng.below(groups));
      pred[i] = rng.bernoulli(0.5);
    }
    // make every group present with a positive
    for (int g = 0; g < groups; ++g) {
      s[static_cast<std::size_t>(g)] = g;
      y[static_cast<std::size_t>(g)] = 1;
    }
    y[n - 1] = 0;
    s[n - 1] = 0;

    double dp = 0, eo = 0;
    for (int a = 0; a < groups; ++a) {
      for (int b = a + 1; b < groups; ++b) {
        dp = std::max(dp, std::fabs(rate(pred, s, a, nullptr) - rate(pred, s, b, nullptr)));
        eo = std::max(eo, std::fabs(rate(pred, s, a, &y) - rate(pred, s, b, &y)));
      }
    }
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      tp += pred[i] && y[i];
      fp += pred[i] && !y[i];
      fn += !pred[i] && y[i];
    }
    CHECK(std::fabs(delta_dp(pred, s) - dp) <= 1e-12);
    CHECK(std::fabs(delta_eo(pred, y, s) - eo) <= 1e-12);
    CHECK(std::fabs(auc(sc, y) - brute_auc(sc, y)) <= 1e-12);
    CHECK(std::fabs(f1(pred, y) - 2 * tp / (2 * tp + fp + fn)) <= 1e-12);
    ++checked;
  }
  CHECK(checked == 1000);
}

TEST_CASE("random scores have AUC near one half") {
  Rng rng(77);
  std::vector<double> sc(200);
  std::vector<int> y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    sc[i] = rng.uniform();
    y[i] = static_cast<int>(i % 2);
  }
  CHECK(std::fabs(auc(sc, y) - 0.5) < 0.1);
}

TEST_CASE("report assembly and serialization") {
  const std::vector<double> logits{2.0, -1.0, 0.5, -3.0, 1.0, -0.5};
  const std::vector<int> y{1, 0, 1, 0, 0, 1};
  const std::vector<int> s{0, 0, 0, 1, 1, 1};
  const std::vector<std::size_t> nodes{0, 1, 2, 3, 4, 5};
  MetricsReport r = compute_report(logits, y, s, nodes);
  CHECK(r.n_eval == 6);
  CHECK(r.groups.size() == 2);
  CHECK(r.groups[0].positive_rate == doctest::Approx(2.0 / 3.0));
  CHECK(r.groups[1].positive_rate == doctest::Approx(1.0 / 3.0));
  CHECK(r.delta_dp == doctest::Approx(1.0 / 3.0));
  CHECK(r.accuracy == doctest::Approx(4.0 / 6.0));

  r.variant = "fairinv";
  r.sens_attr = "S";
  r.seed = 3;
  r.config_hash = "00ff";
  r.seconds = 1.5;
  const MetricsReport back = report_from_json(report_to_json(r));
  CHECK(back.auc == r.auc);
  CHECK(back.delta_eo == r.delta_eo);
  CHECK(back.variant == "fairinv");
  CHECK(back.groups.size() == 2);
  CHECK(report_to_json(back) == report_to_json(r));
  CHECK(report_to_json(r, false).find("seconds") == std::string::npos);

  const std::string row = results_csv_row(r);
  CHECK(row.rfind("fairinv,S,3,00ff,", 0) == 0);
  CHECK(row.substr(row.rfind(',') + 1) == "1.500000");
  CHECK(results_csv_header().substr(results_csv_header().rfind(',') + 1) == "seconds");
}
