#include "fairinv/config.hpp"

#include <functional>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fairinv/error.hpp"
#include "fairinv/io.hpp"

namespace fairinv {

namespace {

double to_double(const std::string& key, const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + s + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + s + "'");
  }
  return std::stoull(s);
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + s + "'");
}

std::vector<std::string> to_list(const std::string& s) {
  std::vector<std::string> out;
  if (boost::algorithm::trim_copy(s).empty()) return out;
  boost::algorithm::split(out, s, boost::is_any_of(","));
  for (auto& x : out) boost::algorithm::trim(x);
  return out;
}

std::string join(const std::vector<std::string>& v) { return boost::algorithm::join(v, ","); }

std::string bool_str(bool b) { return b ? "true" : "false"; }

template <typename T, typename F>
std::string join_map(const std::vector<T>& v, F f) {
  std::vector<std::string> s;
  for (const auto& x : v) s.push_back(f(x));
  return join(s);
}

std::string selection_str(Selection s) { return s == Selection::BestVal ? "best_val" : "last"; }

Selection parse_selection(const std::string& s) {
  if (s == "best_val") return Selection::BestVal;
  if (s == "last") return Selection::Last;
  throw ConfigError("config: selection must be best_val or last, got '" + s + "'");
}

struct Binding {
  const char* section;
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define NUM(sec, name, field)                                                      \
  Binding {                                                                        \
    sec, name, [](const RunConfig& c) { return format_double(c.field); },          \
        [](RunConfig& c, const std::string& s) { c.field = to_double(name, s); } \
  }
#define INT(sec, name, field)                                                                  \
  Binding {                                                                                    \
    sec, name, [](const RunConfig& c) { return std::to_string(c.field); },                     \
        [](RunConfig& c, const std::string& s) {                                               \
          c.field = static_cast<decltype(c.field)>(to_u64(name, s));                           \
        }                                                                                      \
  }
#define BOOL(sec, name, field)                                                 \
  Binding {                                                                    \
    sec, name, [](const RunConfig& c) { return bool_str(c.field); },           \
        [](RunConfig& c, const std::string& s) { c.field = to_bool(name, s); } \
  }
#define STR(sec, name, field)                                         \
  Binding {                                                           \
    sec, name, [](const RunConfig& c) { return c.field; },            \
        [](RunConfig& c, const std::string& s) { c.field = s; }       \
  }
#define LIST(sec, name, field)                                             \
  Binding {                                                                \
    sec, name, [](const RunConfig& c) { return join(c.field); },           \
        [](RunConfig& c, const std::string& s) { c.field = to_list(s); }   \
  }

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      STR("data", "source", source),
      STR("data", "node_file", node_file),
      STR("data", "edge_file", edge_file),
      STR("data", "label", label),
      LIST("data", "sensitive", sensitive),
      LIST("data", "drop", drop),
      LIST("data", "binarize_median", binarize_median),
      BOOL("data", "append_sensitive", append_sensitive),
      LIST("data", "eval_attrs", eval_attrs),
      Binding{"data", "split",
              [](const RunConfig& c) {
                return format_double(c.split.train) + "," + format_double(c.split.val) + "," +
                       format_double(c.split.test);
              },
              [](RunConfig& c, const std::string& s) {
                const auto parts = to_list(s);
                if (parts.size() != 3) throw ConfigError("config: split expects train,val,test");
                c.split = {to_double("split", parts[0]), to_double("split", parts[1]),
                           to_double("split", parts[2])};
              }},

      INT("scm", "n", scm.n),
      INT("scm", "d", scm.d),
      NUM("scm", "beta_sy", scm.beta_sy),
      NUM("scm", "beta_sg_feat", scm.beta_sg_feat),
      NUM("scm", "beta_sg_homo", scm.beta_sg_homo),
      NUM("scm", "avg_degree", scm.avg_degree),
      INT("scm", "seed", scm.seed),
      INT("scm", "num_sensitive", scm.num_sensitive),
      NUM("scm", "merit_scale", scm.merit_scale),
      NUM("scm", "label_bias_scale", scm.label_bias_scale),
      NUM("scm", "label_offset", scm.label_offset),
      NUM("scm", "signal_strength", scm.signal_strength),
      NUM("scm", "leak_scale", scm.leak_scale),
      NUM("scm", "noise", scm.noise),
      NUM("scm", "label_homophily", scm.label_homophily),

      Binding{"model", "backbone", [](const RunConfig& c) { return to_string(c.backbone); },
              [](RunConfig& c, const std::string& s) { c.backbone = parse_backbone(s); }},
      INT("model", "hidden", hidden),

      NUM("train", "lr", lr),
      INT("train", "epochs", epochs),
      NUM("train", "weight_decay", weight_decay),
      INT("train", "epochs_phi", epochs_phi),
      Binding{"train", "selection", [](const RunConfig& c) { return selection_str(c.selection); },
              [](RunConfig& c, const std::string& s) { c.selection = parse_selection(s); }},

      INT("sap", "k", k),
      INT("sap", "t", t),
      INT("sap", "epochs_sap", epochs_sap),
      NUM("sap", "lr_sp", lr_sp),
      NUM("sap", "weight_decay", sap_weight_decay),
      Binding{"sap", "q_mode", [](const RunConfig& c) { return to_string(c.q_mode); },
              [](RunConfig& c, const std::string& s) { c.q_mode = parse_edge_mode(s); }},
      BOOL("sap", "renormalize", sap_renormalize),
      BOOL("sap", "single_norm", single_norm),

      NUM("sil", "alpha", alpha),
      Binding{"sil", "mode", [](const RunConfig& c) { return to_string(c.f_mode); },
              [](RunConfig& c, const std::string& s) { c.f_mode = parse_edge_mode(s); }},
      Binding{"sil", "eval_mode", [](const RunConfig& c) { return to_string(c.eval_mode); },
              [](RunConfig& c, const std::string& s) { c.eval_mode = parse_edge_mode(s); }},
      Binding{"sil", "rule", [](const RunConfig& c) { return to_string(c.rule); },
              [](RunConfig& c, const std::string& s) { c.rule = parse_group_rule(s); }},
      INT("sil", "min_group_size", min_group_size),
      BOOL("sil", "mean_over_rounds", mean_over_rounds),
      BOOL("sil", "pooled", pooled),
      NUM("sil", "irm_weight", irm_weight),

      Binding{"run", "seeds",
              [](const RunConfig& c) {
                return join_map(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
              },
              [](RunConfig& c, const std::string& s) {
                c.seeds.clear();
                for (const auto& x : to_list(s)) c.seeds.push_back(to_u64("seeds", x));
              }},
      STR("run", "variant", variant),
      STR("run", "out", out),

      Binding{"sweep", "alphas",
              [](const RunConfig& c) { return join_map(c.sweep_alphas, format_double); },
              [](RunConfig& c, const std::string& s) {
                c.sweep_alphas.clear();
                for (const auto& x : to_list(s)) c.sweep_alphas.push_back(to_double("alphas", x));
              }},
      Binding{"sweep", "lr_sps",
              [](const RunConfig& c) { return join_map(c.sweep_lr_sps, format_double); },
              [](RunConfig& c, const std::string& s) {
                c.sweep_lr_sps.clear();
                for (const auto& x : to_list(s)) c.sweep_lr_sps.push_back(to_double("lr_sps", x));
              }},
      INT("time", "repeats", time_repeats),
  };
  return table;
}

#undef NUM
#undef INT
#undef BOOL
#undef STR
#undef LIST

const std::set<std::string> kVariants = {"erm", "fairinv", "minus_vi", "minus_sap", "minus_sil"};

}  // namespace

void RunConfig::validate() const {
  if (source != "scm" && source != "files") {
    throw ConfigError("config: data.source must be scm or files, got '" + source + "'");
  }
  if (source == "files") {
    if (node_file.empty() || edge_file.empty() || label.empty()) {
      throw ConfigError("config: files source needs node_file, edge_file and label");
    }
    if (sensitive.empty()) throw ConfigError("config: files source needs a sensitive column");
  } else {
    scm.validate();
  }
  if (!(split.train > 0 && split.val > 0 && split.test > 0) ||
      split.train + split.val + split.test > 1.0 + 1e-12) {
    throw ConfigError("config: split ratios must be positive and sum to at most 1");
  }
  if (!kVariants.count(variant)) throw ConfigError("config: unknown variant '" + variant + "'");
  if (seeds.empty()) throw ConfigError("config: run.seeds is empty");
  phi_config(0).validate();
  erm_config(0).validate();
  sap_config(0).validate();
  sil_config(0).validate();
}

TrainConfig RunConfig::phi_config(std::uint64_t seed) const {
  TrainConfig c;
  c.epochs = epochs_phi;
  c.lr = lr;
  c.weight_decay = weight_decay;
  c.seed = seed;
  c.backbone = backbone;
  c.hidden = hidden;
  c.selection = selection;
  return c;
}

TrainConfig RunConfig::erm_config(std::uint64_t seed) const {
  TrainConfig c = phi_config(seed);
  c.epochs = epochs;
  return c;
}

SapConfig RunConfig::sap_config(std::uint64_t seed) const {
  SapConfig c;
  c.k = k;
  c.t = t;
  c.epochs = epochs_sap;
  c.lr_sp = lr_sp;
  c.weight_decay = sap_weight_decay;
  c.seed = seed * 1000;
  c.q_mode = q_mode;
  c.renormalize = sap_renormalize;
  c.single_norm = single_norm;
  return c;
}

SilConfig RunConfig::sil_config(std::uint64_t seed) const {
  SilConfig c;
  c.alpha = alpha;
  c.epochs = epochs;
  c.lr = lr;
  c.weight_decay = weight_decay;
  c.seed = seed;
  c.backbone = backbone;
  c.hidden = hidden;
  c.rule = rule;
  c.mode = f_mode;
  c.renormalize = sap_renormalize;
  c.eval_mode = eval_mode;
  c.min_group_size = min_group_size;
  c.mean_over_rounds = mean_over_rounds;
  c.pooled = pooled;
  c.irm_weight = irm_weight;
  c.selection = selection;
  return c;
}

RunConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  std::set<std::string> known;
  for (const auto& b : bindings()) known.insert(std::string(b.section) + "." + b.key);
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config: key '" + section + "' outside a section");
    }
    for (const auto& [key, value] : body) {
      if (!known.count(section + "." + key)) {
        throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
      }
    }
  }
  RunConfig cfg;
  for (const auto& b : bindings()) {
    const auto path = boost::property_tree::ptree::path_type(std::string(b.section) + "." + b.key, '.');
    if (auto v = tree.get_optional<std::string>(path)) b.set(cfg, boost::algorithm::trim_copy(*v));
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path));
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& b : bindings()) {
    if (section != b.section) {
      if (!section.empty()) out << '\n';
      section = b.section;
      out << '[' << section << "]\n";
    }
    out << b.key << " = " << b.get(cfg) << '\n';
  }
  return out.str();
}

std::string config_hash(const RunConfig& cfg) {
  RunConfig c = cfg;
  c.out.clear();
  c.seeds.clear();
  return hex64(fnv1a64(serialize_config(c)));
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

}  // namespace fairinv
