#include "fairinv/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include <json.hpp>

#include "fairinv/error.hpp"
#include "fairinv/io.hpp"

namespace fairinv {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": length mismatch");
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

double delta_dp(std::span<const int> pred, std::span<const int> s) {
  require_same_length(pred.size(), s.size(), "delta_dp");
  std::map<int, std::pair<std::size_t, std::size_t>> counts;  // group -> (positives, total)
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto& c = counts[s[i]];
    c.first += pred[i] == 1 ? 1 : 0;
    ++c.second;
  }
  if (counts.size() < 2) throw DataError("delta_dp: needs two non-empty groups");
  double lo = 1.0, hi = 0.0;
  for (const auto& [g, c] : counts) {
    const double rate = static_cast<double>(c.first) / static_cast<double>(c.second);
    lo = std::min(lo, rate);
    hi = std::max(hi, rate);
  }
  return hi - lo;
}

double delta_eo(std::span<const int> pred, std::span<const int> y, std::span<const int> s) {
  require_same_length(pred.size(), s.size(), "delta_eo");
  require_same_length(y.size(), s.size(), "delta_eo");
  std::map<int, std::pair<std::size_t, std::size_t>> counts;  // group -> (TP, positives)
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto& c = counts[s[i]];
    if (y[i] == 1) {
      c.first += pred[i] == 1 ? 1 : 0;
      ++c.second;
    }
  }
  if (counts.size() < 2) throw DataError("delta_eo: needs two non-empty groups");
  double lo = 1.0, hi = 0.0;
  for (const auto& [g, c] : counts) {
    if (c.second == 0) {
      throw DataError("delta_eo: group " + std::to_string(g) + " has no positive labels");
    }
    const double tpr = static_cast<double>(c.first) / static_cast<double>(c.second);
    lo = std::min(lo, tpr);
    hi = std::max(hi, tpr);
  }
  return hi - lo;
}

double auc(std::span<const double> scores, std::span<const int> y) {
  require_same_length(scores.size(), y.size(), "auc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos = 0.0;
  double rank_sum = 0.0;  // sum of (1-based, tie-averaged) ranks of positives
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (y[idx[k]] == 1) {
        rank_sum += avg_rank;
        pos += 1.0;
      }
    }
    i = j;
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) throw DataError("auc: undefined with a single class");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double f1(std::span<const int> pred, std::span<const int> y) {
  require_same_length(pred.size(), y.size(), "f1");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (pred[i] == 1 && y[i] == 1) tp += 1;
    if (pred[i] == 1 && y[i] == 0) fp += 1;
    if (pred[i] == 0 && y[i] == 1) fn += 1;
  }
  const double denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2 * tp / denom;
}

std::vector<int> threshold_logits(std::span<const double> logits) {
  std::vector<int> pred(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) pred[i] = logits[i] > 0.0 ? 1 : 0;
  return pred;
}

MetricsReport compute_report(std::span<const double> logits, std::span<const int> y,
                             std::span<const int> s, std::span<const std::size_t> nodes) {
  std::vector<double> scores;
  std::vector<int> ys, ss;
  for (std::size_t v : nodes) {
    scores.push_back(logits[v]);
    ys.push_back(y[v]);
    ss.push_back(s[v]);
  }
  const auto pred = threshold_logits(scores);
  MetricsReport r;
  r.n_eval = nodes.size();
  r.auc = auc(scores, ys);
  r.f1 = f1(pred, ys);
  r.delta_dp = delta_dp(pred, ss);
  r.delta_eo = delta_eo(pred, ys, ss);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == ys[i] ? 1 : 0;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());

  std::map<int, GroupStat> groups;
  std::map<int, std::size_t> tp;
  std::map<int, std::size_t> predicted;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto& g = groups[ss[i]];
    g.group = ss[i];
    ++g.count;
    predicted[ss[i]] += static_cast<std::size_t>(pred[i]);
    if (ys[i] == 1) {
      ++g.positives;
      tp[ss[i]] += static_cast<std::size_t>(pred[i]);
    }
  }
  for (auto& [id, g] : groups) {
    g.positive_rate = static_cast<double>(predicted[id]) / static_cast<double>(g.count);
    g.tpr = g.positives ? static_cast<double>(tp[id]) / static_cast<double>(g.positives) : 0.0;
    r.groups.push_back(g);
  }
  return r;
}

std::string report_to_json(const MetricsReport& r, bool include_timing) {
  nlohmann::ordered_json j;
  j["variant"] = r.variant;
  j["sens_attr"] = r.sens_attr;
  j["seed"] = r.seed;
  j["config_hash"] = r.config_hash;
  j["auc"] = r.auc;
  j["f1"] = r.f1;
  j["delta_dp"] = r.delta_dp;
  j["delta_eo"] = r.delta_eo;
  j["accuracy"] = r.accuracy;
  j["n_eval"] = r.n_eval;
  nlohmann::ordered_json groups = nlohmann::ordered_json::array();
  for (const auto& g : r.groups) {
    nlohmann::ordered_json jg;
    jg["group"] = g.group;
    jg["count"] = g.count;
    jg["positives"] = g.positives;
    jg["positive_rate"] = g.positive_rate;
    jg["tpr"] = g.tpr;
    groups.push_back(jg);
  }
  j["groups"] = groups;
  if (include_timing) j["seconds"] = r.seconds;
  return j.dump(2);
}

MetricsReport report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MetricsReport r;
  r.variant = j.at("variant").get<std::string>();
  r.sens_attr = j.at("sens_attr").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.auc = j.at("auc").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.delta_dp = j.at("delta_dp").get<double>();
  r.delta_eo = j.at("delta_eo").get<double>();
  r.accuracy = j.value("accuracy", 0.0);
  r.n_eval = j.at("n_eval").get<std::size_t>();
  for (const auto& jg : j.at("groups")) {
    GroupStat g;
    g.group = jg.at("group").get<int>();
    g.count = jg.at("count").get<std::size_t>();
    g.positives = jg.at("positives").get<std::size_t>();
    g.positive_rate = jg.at("positive_rate").get<double>();
    g.tpr = jg.at("tpr").get<double>();
    r.groups.push_back(g);
  }
  r.seconds = j.value("seconds", 0.0);
  return r;
}

std::string results_csv_header() {
  return "variant,sens_attr,seed,config_hash,auc,f1,delta_dp,delta_eo,accuracy,n_eval,seconds";
}

std::string results_csv_row(const MetricsReport& r) {
  return r.variant + ',' + r.sens_attr + ',' + std::to_string(r.seed) + ',' + r.config_hash + ',' +
         format_double(r.auc) + ',' + format_double(r.f1) + ',' + format_double(r.delta_dp) + ',' +
         format_double(r.delta_eo) + ',' + format_double(r.accuracy) + ',' +
         std::to_string(r.n_eval) + ',' + fixed(r.seconds);
}

}  // namespace fairinv
