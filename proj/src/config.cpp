#include "crossfuse/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "crossfuse/error.hpp"
#include "crossfuse/eval.hpp"

namespace crossfuse {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_num(const std::string& key, const std::string& v) {
  T out{};
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError(key + ": cannot parse '" + v + "' as a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_num<T>(key, trim(item)));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) out += ',';
    if constexpr (std::is_floating_point_v<T>)
      out += format_real(v[k]);
    else
      out += std::to_string(v[k]);
  }
  return out;
}

std::string delimiter_name(char d) {
  if (d == 0) return "auto";
  if (d == '\t') return "tab";
  if (d == ',') return "comma";
  return std::string(1, d);
}

char parse_delimiter(const std::string& key, const std::string& v) {
  if (v == "auto") return 0;
  if (v == "tab") return '\t';
  if (v == "comma") return ',';
  if (v.size() == 1) return v[0];
  throw ConfigError(key + ": expected auto, tab, comma or a single character");
}

struct Key {
  std::string section;
  std::string name;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define REAL_KEY(sec, nm, field)                                                               \
  Key{sec, nm, [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_num<Real>(k, v); }, \
      [](const RunConfig& c) { return format_real(c.field); }}
#define INT_KEY(sec, nm, field)                                                                \
  Key{sec, nm,                                                                                 \
      [](RunConfig& c, const std::string& k, const std::string& v) {                           \
        c.field = static_cast<decltype(c.field)>(parse_num<long long>(k, v));                  \
      },                                                                                       \
      [](const RunConfig& c) { return std::to_string(c.field); }}
#define BOOL_KEY(sec, nm, field)                                                               \
  Key{sec, nm, [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_bool(k, v); }, \
      [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }}
#define STR_KEY(sec, nm, field)                                                                \
  Key{sec, nm, [](RunConfig& c, const std::string&, const std::string& v) { c.field = v; },     \
      [](const RunConfig& c) { return c.field; }}

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = {
      STR_KEY("paths", "interactions", paths.interactions),
      STR_KEY("paths", "user_attributes", paths.user_attributes),
      STR_KEY("paths", "item_attributes", paths.item_attributes),
      STR_KEY("paths", "item_categories", paths.item_categories),
      STR_KEY("paths", "aux_users", paths.aux_users),
      STR_KEY("paths", "aux_items", paths.aux_items),
      STR_KEY("paths", "output", paths.output),

      INT_KEY("data", "user_col", schema.user_col),
      INT_KEY("data", "item_col", schema.item_col),
      INT_KEY("data", "rating_col", schema.rating_col),
      INT_KEY("data", "timestamp_col", schema.timestamp_col),
      Key{"data", "delimiter",
          [](RunConfig& c, const std::string& k, const std::string& v) { c.schema.delimiter = parse_delimiter(k, v); },
          [](const RunConfig& c) { return delimiter_name(c.schema.delimiter); }},
      BOOL_KEY("data", "header", schema.header),
      REAL_KEY("data", "train_ratio", ratios.train),
      REAL_KEY("data", "validation_ratio", ratios.validation),
      REAL_KEY("data", "test_ratio", ratios.test),

      REAL_KEY("graph", "epsilon_user", model.epsilon_user),
      REAL_KEY("graph", "epsilon_item", model.epsilon_item),
      Key{"graph", "similarity",
          [](RunConfig& c, const std::string& k, const std::string& v) {
            if (v == "cosine")
              c.model.similarity.norm = SimilarityNorm::Cosine;
            else if (v == "squared-norm")
              c.model.similarity.norm = SimilarityNorm::SquaredNorm;
            else
              throw ConfigError(k + ": expected cosine or squared-norm");
          },
          [](const RunConfig& c) {
            return std::string(c.model.similarity.norm == SimilarityNorm::Cosine ? "cosine" : "squared-norm");
          }},
      INT_KEY("graph", "max_neighbors", model.similarity.max_neighbors),

      INT_KEY("backbone", "layers", model.backbone.layers),
      INT_KEY("backbone", "dim", model.backbone.dim),
      REAL_KEY("backbone", "lambda_reg", model.backbone.lambda_reg),
      Key{"backbone", "alphas",
          [](RunConfig& c, const std::string& k, const std::string& v) { c.model.backbone.alphas = parse_list<Real>(k, v); },
          [](const RunConfig& c) { return join(c.model.backbone.alphas); }},

      Key{"auxnet", "hidden",
          [](RunConfig& c, const std::string& k, const std::string& v) {
            auto h = parse_list<long long>(k, v);
            c.model.aux.hidden.assign(h.begin(), h.end());
          },
          [](const RunConfig& c) { return join(c.model.aux.hidden); }},
      INT_KEY("auxnet", "gcn_layers", model.aux.gcn_layers),
      REAL_KEY("auxnet", "bn_momentum", model.aux.bn_momentum),
      REAL_KEY("auxnet", "bn_eps", model.aux.bn_eps),

      REAL_KEY("train", "eta1", model.train.eta1),
      REAL_KEY("train", "eta2", model.train.eta2),
      INT_KEY("train", "epochs", model.train.epochs),
      INT_KEY("train", "aux_epochs", model.train.aux_epochs),
      INT_KEY("train", "aux_batch_size", model.train.aux_batch_size),
      INT_KEY("train", "batch_size", model.train.batch_size),
      Key{"train", "optimizer",
          [](RunConfig& c, const std::string&, const std::string& v) { c.model.train.optimizer = parse_optimizer(v); },
          [](const RunConfig& c) { return std::string(optimizer_name(c.model.train.optimizer)); }},
      INT_KEY("train", "patience", model.train.patience),
      INT_KEY("train", "seed", model.train.seed),
      INT_KEY("train", "select_n", model.train.select_n),
      INT_KEY("train", "checkpoint_every", checkpoint_every),

      Key{"fusion", "variant",
          [](RunConfig& c, const std::string&, const std::string& v) { c.model.fusion.variant = parse_variant(v); },
          [](const RunConfig& c) { return std::string(variant_name(c.model.fusion.variant)); }},
      Key{"fusion", "graph_loss",
          [](RunConfig& c, const std::string&, const std::string& v) { c.model.fusion.graph_loss = parse_graph_loss(v); },
          [](const RunConfig& c) { return std::string(graph_loss_name(c.model.fusion.graph_loss)); }},
      REAL_KEY("fusion", "lambda1", model.fusion.lambda1),
      REAL_KEY("fusion", "lambda2", model.fusion.lambda2),
      BOOL_KEY("fusion", "apply_to_negatives", model.fusion.apply_to_negatives),

      Key{"eval", "cutoffs",
          [](RunConfig& c, const std::string& k, const std::string& v) { c.eval.cutoffs = parse_list<int>(k, v); },
          [](const RunConfig& c) { return join(c.eval.cutoffs); }},
      INT_KEY("eval", "kl_top_categories", eval.kl_top_categories),
      INT_KEY("eval", "kl_list_length", eval.kl_list_length),
      BOOL_KEY("eval", "per_user", eval.per_user),
  };
  return keys;
}

#undef REAL_KEY
#undef INT_KEY
#undef BOOL_KEY
#undef STR_KEY

const Key* find_key(const std::string& section, const std::string& name) {
  for (const auto& k : registry())
    if (k.section == section && k.name == name) return &k;
  return nullptr;
}

bool known_section(const std::string& s) {
  for (const auto& k : registry())
    if (k.section == s) return true;
  return false;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  if (eval.cutoffs.empty()) throw ConfigError("eval.cutoffs must list at least one cutoff");
  for (int n : eval.cutoffs)
    if (n < 1) throw ConfigError("eval.cutoffs must be >= 1");
  if (eval.kl_top_categories < 1) throw ConfigError("eval.kl_top_categories must be >= 1");
  if (eval.kl_list_length < 1) throw ConfigError("eval.kl_list_length must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  if (model.aux.dim != model.backbone.dim)
    throw ConfigError("auxnet dimension follows backbone.dim; they must agree");
}

std::vector<std::string> preset_names() { return {"default", "ml1m-lightgcn", "ml1m-gin"}; }

void apply_preset(RunConfig& cfg, const std::string& name) {
  auto& m = cfg.model;
  if (name == "default") {
  } else if (name == "ml1m-lightgcn") {
    m.train.eta1 = 0.001;
    m.epsilon_user = 0.3;
    m.fusion.lambda1 = 0.05;
    m.fusion.lambda2 = 0.001;
  } else if (name == "ml1m-gin") {
    // Hyperparameters tuned for a GIN host; the shipped backbone is still
    // the LightGCN-style propagation.
    m.train.eta1 = 0.01;
    m.epsilon_user = 0.5;
    m.fusion.lambda1 = 0.1;
    m.fusion.lambda2 = 0.05;
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
  }
  m.fusion.variant = FusionVariant::Cross;
  cfg.preset = name;
}

void set_config_value(RunConfig& cfg, const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) {
    if (dotted_key == "preset") return apply_preset(cfg, value);
    throw ConfigError("unknown config key '" + dotted_key + "'");
  }
  const auto* key = find_key(dotted_key.substr(0, dot), dotted_key.substr(dot + 1));
  if (!key) throw ConfigError("unknown config key '" + dotted_key + "'");
  key->set(cfg, dotted_key, value);
  cfg.model.aux.dim = cfg.model.backbone.dim;
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  struct Line {
    std::size_t number;
    std::string section, key, value;
  };
  std::vector<Line> lines;
  std::string section;
  std::string preset;
  std::istringstream in(text);
  std::string raw;
  for (std::size_t n = 1; std::getline(in, raw); ++n) {
    auto hash = raw.find_first_of("#;");
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(n);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!known_section(section)) throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    Line l{n, section, trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1))};
    if (l.section.empty()) {
      if (l.key != "preset") throw ConfigError(where + ": unknown top-level key '" + l.key + "'");
      preset = l.value;
      continue;
    }
    if (!find_key(l.section, l.key))
      throw ConfigError(where + ": unknown key '" + l.key + "' in [" + l.section + "]");
    lines.push_back(std::move(l));
  }
  RunConfig cfg;
  if (!preset.empty()) apply_preset(cfg, preset);
  for (const auto& l : lines) {
    try {
      find_key(l.section, l.key)->set(cfg, l.section + "." + l.key, l.value);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(l.number) + ": " + e.what());
    }
  }
  cfg.model.aux.dim = cfg.model.backbone.dim;
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string config_snapshot(const RunConfig& cfg) {
  std::string out;
  if (!cfg.preset.empty()) out += "preset = " + cfg.preset + "\n\n";
  std::string section;
  for (const auto& k : registry()) {
    if (k.section != section) {
      section = k.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += k.name + " = " + k.get(cfg) + "\n";
  }
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : registry()) out.push_back(k.section + "." + k.name);
  return out;
}

}  // namespace crossfuse
