#include "fairinv/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <array>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>

#include "fairinv/error.hpp"
#include "fairinv/io.hpp"

namespace fairinv {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string seed_dir_name(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

std::string manifest_value(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + "=", 0) == 0) return line.substr(key.size() + 1);
  }
  return {};
}

std::vector<std::string> manifest_values(const std::string& text, const std::string& key) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + "=", 0) == 0) out.push_back(line.substr(key.size() + 1));
  }
  return out;
}

std::vector<std::string> variants_for(const RunConfig& cfg) {
  std::vector<std::string> v{"erm"};
  if (cfg.variant != "erm") v.push_back(cfg.variant);
  return v;
}

}  // namespace

PreparedData prepare_data(const RunConfig& cfg, std::uint64_t seed) {
  PreparedData d;
  if (cfg.source == "scm") {
    ScmConfig sc = cfg.scm;
    sc.seed = cfg.scm.seed + seed;
    ScmGraph sg = scm_generate(sc);
    d.graph = std::move(sg.graph);
    d.train_attr = cfg.sensitive.empty() ? sg.sensitive_names.front() : cfg.sensitive.front();
  } else {
    LoadOptions opt;
    opt.label_column = cfg.label;
    opt.sensitive_columns = cfg.sensitive;
    opt.drop_columns = cfg.drop;
    opt.binarize_at_median = cfg.binarize_median;
    d.graph = load_dataset(cfg.node_file, cfg.edge_file, opt);
    d.train_attr = cfg.sensitive.front();
  }
  d.graph.sensitive(d.train_attr);  // throws on an unknown attribute
  if (cfg.append_sensitive) d.graph = append_sensitive(d.graph, d.train_attr);
  if (cfg.eval_attrs.empty()) {
    for (const auto& [name, values] : d.graph.sensitive()) d.eval_attrs.push_back(name);
  } else {
    for (const auto& a : cfg.eval_attrs) d.graph.sensitive(a);
    d.eval_attrs = cfg.eval_attrs;
  }
  return d;
}

SapStage run_sap_stage(const RunConfig& cfg, const Graph& graph, const Propagator& prop,
                       const Split& split, std::uint64_t seed, bool random_scores) {
  const auto t0 = Clock::now();
  SapStage st;
  st.phi = train_erm(graph, prop, split, cfg.phi_config(seed));
  const SapInputs in = prepare_sap(graph, prop, st.phi.params, split);
  SapConfig sc = cfg.sap_config(seed);
  sc.random_scores = random_scores;
  st.rounds = run_sap(in, sc);
  st.seconds = seconds_since(t0);
  return st;
}

std::vector<MetricsReport> evaluate_attrs(const RunConfig& cfg, std::span<const double> logits,
                                          const PreparedData& data, const Split& split,
                                          const std::string& variant, std::uint64_t seed) {
  std::vector<MetricsReport> out;
  const std::string hash = config_hash(cfg);
  for (const auto& attr : data.eval_attrs) {
    MetricsReport r = compute_report(logits, data.graph.labels(), data.graph.sensitive(attr), split.test);
    r.variant = variant;
    r.sens_attr = attr;
    r.seed = seed;
    r.config_hash = hash;
    out.push_back(std::move(r));
  }
  return out;
}

PipelineRun run_variant(const RunConfig& cfg, const PreparedData& data, const Propagator& prop,
                        const Split& split, std::uint64_t seed, const std::string& variant,
                        const SapStage* shared) {
  const auto t0 = Clock::now();
  PipelineRun run;
  run.variant = variant;
  const Graph& graph = data.graph;
  std::vector<double> logits;
  if (variant == "erm") {
    TrainResult res = train_erm(graph, prop, split, cfg.erm_config(seed));
    run.model = std::move(res.params);
    run.erm_history = std::move(res.history);
    logits = predict_logits(prop, graph.features(), run.model);
  } else {
    if (variant != "fairinv" && variant != "minus_vi" && variant != "minus_sap" &&
        variant != "minus_sil") {
      throw ConfigError("unknown variant '" + variant + "'");
    }
    SapStage own;
    const SapStage* stage = shared;
    double stage_seconds = 0.0;
    if (variant == "minus_vi" || stage == nullptr) {
      own = run_sap_stage(cfg, graph, prop, split, seed, variant == "minus_vi");
      stage = &own;
    } else {
      stage_seconds = stage->seconds;
    }
    run.phi = stage->phi.params;
    run.rounds = stage->rounds;
    if (variant == "minus_sap") {
      run.rounds = oracle_partition_rounds(run.rounds, graph.sensitive(data.train_attr), cfg.t);
    }
    SilConfig sc = cfg.sil_config(seed);
    sc.monitor_attr = data.train_attr;
    if (variant == "minus_sil") sc.objective = SilObjective::IrmPenalty;
    const SilProblem problem{&graph, &prop, &split, &run.rounds};
    SilResult res = train_fairinv(problem, sc);
    run.model = std::move(res.params);
    run.sil_history = std::move(res.history);
    run.notes = std::move(res.notes);
    logits = sil_predict(prop, graph.features(), run.model, sc.eval_mode, &run.rounds.front(),
                         sc.renormalize);
    run.seconds += stage_seconds;
  }
  run.seconds += seconds_since(t0);
  run.reports = evaluate_attrs(cfg, logits, data, split, variant, seed);
  for (auto& r : run.reports) r.seconds = run.seconds;
  return run;
}

// ---- tables --------------------------------------------------------------------

std::string results_csv(std::vector<MetricsReport> reports) {
  std::stable_sort(reports.begin(), reports.end(),
                   [](const MetricsReport& a, const MetricsReport& b) { return a.seed < b.seed; });
  std::string out = results_csv_header() + "\n";
  for (const auto& r : reports) out += results_csv_row(r) + "\n";
  return out;
}

std::string summary_markdown(const std::vector<MetricsReport>& reports) {
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::vector<const MetricsReport*>> groups;
  for (const auto& r : reports) {
    const auto key = std::make_pair(r.variant, r.sens_attr);
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(&r);
  }
  auto cell = [](const std::vector<const MetricsReport*>& rs, double MetricsReport::*field) {
    double mean = 0.0;
    for (const auto* r : rs) mean += r->*field;
    mean /= static_cast<double>(rs.size());
    double var = 0.0;
    for (const auto* r : rs) var += (r->*field - mean) * (r->*field - mean);
    var /= static_cast<double>(rs.size());
    return fixed(100.0 * mean, 2) + " ± " + fixed(100.0 * std::sqrt(var), 2);
  };
  std::ostringstream out;
  out << "| variant | attribute | seeds | AUC (%) | F1 (%) | ΔDP (%) | ΔEO (%) |\n"
      << "|---|---|---|---|---|---|---|\n";
  for (const auto& key : keys) {
    const auto& rs = groups[key];
    out << "| " << key.first << " | " << key.second << " | " << rs.size() << " | "
        << cell(rs, &MetricsReport::auc) << " | " << cell(rs, &MetricsReport::f1) << " | "
        << cell(rs, &MetricsReport::delta_dp) << " | " << cell(rs, &MetricsReport::delta_eo)
        << " |\n";
  }
  return out.str();
}

// ---- train ---------------------------------------------------------------------

namespace {

void save_run(const PipelineRun& run, const Graph& graph, const fs::path& dir,
              std::vector<std::string>& report_files) {
  save_params(run.model, dir / (run.variant + ".params"));
  if (run.variant == "erm") {
    write_file_atomic(dir / "erm_history.csv", history_csv(run.erm_history));
  } else {
    save_params(run.phi, dir / (run.variant + "_phi.params"));
    write_file_atomic(dir / (run.variant + "_history.csv"), sil_history_csv(run.sil_history));
    for (const auto& r : run.rounds) save_round(r, graph, dir / "partitions" / run.variant);
    if (!run.notes.empty()) {
      std::string notes;
      for (const auto& n : run.notes) notes += n + "\n";
      write_file_atomic(dir / (run.variant + "_notes.txt"), notes);
    }
  }
  fs::create_directories(dir / "reports");
  for (const auto& r : run.reports) {
    const std::string name = "reports/" + r.variant + "_" + r.sens_attr + ".json";
    write_file_atomic(dir / name, report_to_json(r) + "\n");
    report_files.push_back(name);
  }
}

std::vector<MetricsReport> try_resume(const fs::path& dir, const std::string& hash) {
  const fs::path manifest = dir / "manifest.txt";
  if (!fs::exists(manifest)) return {};
  const std::string text = read_file(manifest);
  if (manifest_value(text, "status") != "complete" || manifest_value(text, "config_hash") != hash) {
    return {};
  }
  std::vector<MetricsReport> out;
  for (const auto& f : manifest_values(text, "report")) {
    out.push_back(report_from_json(read_file(dir / f)));
  }
  return out;
}

}  // namespace

CommandResult cmd_train(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  fs::create_directories(out);
  const std::string hash = config_hash(cfg);
  write_file_atomic(out / "config.ini", serialize_config(cfg));
  CommandResult result;
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path dir = out / seed_dir_name(seed);
    auto resumed = try_resume(dir, hash);
    if (!resumed.empty()) {
      result.reports.insert(result.reports.end(), resumed.begin(), resumed.end());
      continue;
    }
    fs::create_directories(dir);
    const PreparedData data = prepare_data(cfg, seed);
    const Split split = split_nodes(data.graph, cfg.split, seed);
    const Propagator prop = make_propagator(data.graph, cfg.backbone);
    std::vector<std::string> report_files;
    for (const auto& variant : variants_for(cfg)) {
      const PipelineRun run = run_variant(cfg, data, prop, split, seed, variant);
      save_run(run, data.graph, dir, report_files);
      result.reports.insert(result.reports.end(), run.reports.begin(), run.reports.end());
    }
    std::string manifest = "config_hash=" + hash + "\nseed=" + std::to_string(seed) + "\n";
    for (const auto& f : report_files) manifest += "report=" + f + "\n";
    manifest += "status=complete\n";
    write_file_atomic(dir / "manifest.txt", manifest);
    write_file_atomic(out / "results.csv", results_csv(result.reports));
  }
  result.table = summary_markdown(result.reports);
  write_file_atomic(out / "results.csv", results_csv(result.reports));
  write_file_atomic(out / "summary.md", result.table);
  return result;
}

// ---- eval-multi ------------------------------------------------------------------

CommandResult cmd_eval_multi(const RunConfig& cfg, const fs::path& checkpoint,
                             const std::vector<std::string>& attrs, std::uint64_t seed,
                             const fs::path& out) {
  RunConfig c = cfg;
  if (!attrs.empty()) c.eval_attrs = attrs;
  const PreparedData data = prepare_data(c, seed);
  const Split split = split_nodes(data.graph, c.split, seed);
  const ModelParams model = load_params(checkpoint);
  const Propagator prop = make_propagator(data.graph, model.kind);
  const auto logits = predict_logits(prop, data.graph.features(), model);
  CommandResult result;
  result.reports = evaluate_attrs(c, logits, data, split, "checkpoint", seed);
  std::ostringstream table;
  table << "| attribute | AUC (%) | F1 (%) | ΔDP (%) | ΔEO (%) |\n|---|---|---|---|---|\n";
  for (const auto& r : result.reports) {
    table << "| " << r.sens_attr << " | " << fixed(100 * r.auc, 2) << " | " << fixed(100 * r.f1, 2)
          << " | " << fixed(100 * r.delta_dp, 2) << " | " << fixed(100 * r.delta_eo, 2) << " |\n";
  }
  result.table = table.str();
  fs::create_directories(out);
  write_file_atomic(out / "eval_multi.csv", results_csv(result.reports));
  write_file_atomic(out / "eval_multi.md", result.table);
  return result;
}

// ---- ablate ----------------------------------------------------------------------

CommandResult cmd_ablate(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  CommandResult result;
  for (std::uint64_t seed : cfg.seeds) {
    const PreparedData data = prepare_data(cfg, seed);
    const Split split = split_nodes(data.graph, cfg.split, seed);
    const Propagator prop = make_propagator(data.graph, cfg.backbone);
    const SapStage stage = run_sap_stage(cfg, data.graph, prop, split, seed);
    for (const char* v : {"fairinv", "minus_vi", "minus_sap", "minus_sil"}) {
      const PipelineRun run = run_variant(cfg, data, prop, split, seed, v, &stage);
      result.reports.insert(result.reports.end(), run.reports.begin(), run.reports.end());
    }
  }
  result.table = summary_markdown(result.reports);
  fs::create_directories(out);
  write_file_atomic(out / "ablation.csv", results_csv(result.reports));
  write_file_atomic(out / "ablation.md", result.table);
  return result;
}

// ---- sweep -----------------------------------------------------------------------

CommandResult cmd_sweep(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  CommandResult result;
  std::ostringstream csv;
  csv << "alpha,lr_sp,seed,sens_attr,auc,f1,delta_dp,delta_eo,status\n";
  // (alpha, lr_sp) -> (sum auc, sum dp, count)
  std::map<std::pair<double, double>, std::array<double, 3>> grid;
  for (std::uint64_t seed : cfg.seeds) {
    const PreparedData data = prepare_data(cfg, seed);
    const Split split = split_nodes(data.graph, cfg.split, seed);
    const Propagator prop = make_propagator(data.graph, cfg.backbone);
    for (double lr_sp : cfg.sweep_lr_sps) {
      RunConfig c = cfg;
      c.lr_sp = lr_sp;
      std::optional<SapStage> stage;
      std::string failure;
      try {
        stage = run_sap_stage(c, data.graph, prop, split, seed);
      } catch (const NumericError& e) {
        failure = "numeric";
      }
      for (double alpha : cfg.sweep_alphas) {
        c.alpha = alpha;
        std::string status = failure.empty() ? "ok" : failure;
        std::vector<MetricsReport> reports;
        if (stage) {
          try {
            reports = run_variant(c, data, prop, split, seed, "fairinv", &*stage).reports;
          } catch (const DegeneratePartitionError&) {
            status = "degenerate";
          } catch (const NumericError&) {
            status = "numeric";
          }
        }
        if (reports.empty()) {
          csv << format_double(alpha) << ',' << format_double(lr_sp) << ',' << seed << ','
              << data.train_attr << ",,,,," << status << '\n';
          continue;
        }
        for (const auto& r : reports) {
          csv << format_double(alpha) << ',' << format_double(lr_sp) << ',' << seed << ','
              << r.sens_attr << ',' << format_double(r.auc) << ',' << format_double(r.f1) << ','
              << format_double(r.delta_dp) << ',' << format_double(r.delta_eo) << ",ok\n";
          if (r.sens_attr == data.train_attr) {
            auto& g = grid[{alpha, lr_sp}];
            g[0] += r.auc;
            g[1] += r.delta_dp;
            g[2] += 1.0;
          }
        }
        result.reports.insert(result.reports.end(), reports.begin(), reports.end());
      }
    }
  }
  std::ostringstream table;
  table << "AUC / ΔDP (%) on the training attribute; rows α, columns lr_sp\n\n| α \\ lr_sp |";
  for (double lr : cfg.sweep_lr_sps) table << ' ' << format_double(lr) << " |";
  table << "\n|---|";
  for (std::size_t i = 0; i < cfg.sweep_lr_sps.size(); ++i) table << "---|";
  table << '\n';
  for (double a : cfg.sweep_alphas) {
    table << "| " << format_double(a) << " |";
    for (double lr : cfg.sweep_lr_sps) {
      const auto it = grid.find({a, lr});
      if (it == grid.end() || it->second[2] == 0) {
        table << " n/a |";
      } else {
        table << ' ' << fixed(100 * it->second[0] / it->second[2], 1) << " / "
              << fixed(100 * it->second[1] / it->second[2], 1) << " |";
      }
    }
    table << '\n';
  }
  result.table = table.str();
  fs::create_directories(out);
  write_file_atomic(out / "sweep.csv", csv.str());
  write_file_atomic(out / "sweep.md", result.table);
  return result;
}

// ---- time ------------------------------------------------------------------------

TimingResult cmd_time(const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  TimingResult res;
  const std::uint64_t base = cfg.seeds.front();
  std::ostringstream csv;
  csv << "k,repeat,seed,seconds\n";
  for (std::size_t r = 0; r < cfg.time_repeats; ++r) {
    const std::uint64_t seed = base + r;
    const PreparedData data = prepare_data(cfg, seed);
    const Split split = split_nodes(data.graph, cfg.split, seed);
    const Propagator prop = make_propagator(data.graph, cfg.backbone);
    for (std::size_t k : {std::size_t{1}, std::size_t{3}}) {
      RunConfig c = cfg;
      c.k = k;
      const double secs = run_variant(c, data, prop, split, seed, "fairinv").seconds;
      (k == 1 ? res.k1_seconds : res.k3_seconds).push_back(secs);
      csv << k << ',' << r << ',' << seed << ',' << fixed(secs, 6) << '\n';
    }
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  const double m1 = mean(res.k1_seconds);
  const double m3 = mean(res.k3_seconds);
  std::ostringstream table;
  table << "| model | repeats | mean seconds |\n|---|---|---|\n"
        << "| FairINV-1 | " << res.k1_seconds.size() << " | " << fixed(m1, 3) << " |\n"
        << "| FairINV-3 | " << res.k3_seconds.size() << " | " << fixed(m3, 3) << " |\n"
        << "\nFairINV-3 / FairINV-1 = " << fixed(m1 > 0 ? m3 / m1 : 0.0, 2) << "\n";
  res.table = table.str();
  fs::create_directories(out);
  write_file_atomic(out / "time.csv", csv.str());
  write_file_atomic(out / "time.md", res.table);
  return res;
}

// ---- gen-scm / inspect-partition -------------------------------------------------

void cmd_gen_scm(const RunConfig& cfg, std::uint64_t seed, const fs::path& out) {
  if (cfg.source != "scm") throw ConfigError("gen-scm needs data.source = scm");
  ScmConfig sc = cfg.scm;
  sc.seed = cfg.scm.seed + seed;
  const ScmGraph sg = scm_generate(sc);
  fs::create_directories(out);
  save_graph(sg.graph, out, "scm");
}

std::string cmd_inspect_partition(const RunConfig& cfg, std::uint64_t seed, const fs::path& out) {
  const PreparedData data = prepare_data(cfg, seed);
  const Split split = split_nodes(data.graph, cfg.split, seed);
  const Propagator prop = make_propagator(data.graph, cfg.backbone);
  const SapStage stage = run_sap_stage(cfg, data.graph, prop, split, seed);
  fs::create_directories(out);
  std::ostringstream table;
  table << "| round | seed | penalty (first) | penalty (last) |";
  for (const auto& [name, values] : data.graph.sensitive()) table << " agreement " << name << " |";
  table << "\n|---|---|---|---|";
  for (std::size_t i = 0; i < data.graph.sensitive().size(); ++i) table << "---|";
  table << '\n';
  for (const auto& r : stage.rounds) {
    save_round(r, data.graph, out);
    table << "| " << r.index << " | " << r.seed << " | " << format_double(r.penalty_history.front())
          << " | " << format_double(r.penalty_history.back()) << " |";
    for (const auto& [name, values] : data.graph.sensitive()) {
      table << ' ' << fixed(partition_agreement(r.P, values), 4) << " |";
    }
    table << '\n';
  }
  write_file_atomic(out / "partition.md", table.str());
  return table.str();
}

}  // namespace fairinv
