#include "longtail/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace longtail {

namespace {

struct KeyValueStore {
  std::map<std::string, std::string> values;
  std::map<std::string, bool> consumed;

  std::optional<std::string> take(const std::string& key) {
    auto it = values.find(key);
    if (it == values.end()) return std::nullopt;
    consumed[key] = true;
    return it->second;
  }

  void check_all_consumed() const {
    for (const auto& [key, _] : values) {
      if (!consumed.count(key)) throw ConfigError("unknown config key: " + key);
    }
  }
};

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": bad number '" + value + "'");
  }
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const std::int64_t v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": bad integer '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key " + key + ": bad boolean '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : value) {
    if (c == sep) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& value) {
  std::vector<std::size_t> sizes;
  for (const auto& part : split_list(value, 'x')) {
    const std::int64_t v = parse_int(key, part);
    if (v < 1) throw ConfigError("config key " + key + ": sizes must be >= 1");
    sizes.push_back(static_cast<std::size_t>(v));
  }
  if (sizes.empty()) throw ConfigError("config key " + key + ": empty size list");
  return sizes;
}

void parse_csl_field(CslConfig& cfg, const std::string& key, const std::string& field,
                     const std::string& value) {
  if (field == "techniques") {
    cfg.techniques.clear();
    if (value != "none") {
      for (const auto& name : split_list(value, '+')) {
        cfg.techniques.insert(technique_from_string(name));
      }
    }
  } else if (field == "gamma") {
    cfg.gamma = parse_double(key, value);
  } else if (field == "steps") {
    cfg.steps = parse_int(key, value);
  } else if (field == "batch_size") {
    cfg.batch_size = static_cast<int>(parse_int(key, value));
  } else if (field == "lr") {
    cfg.lr = parse_double(key, value);
  } else if (field == "decay_factor") {
    cfg.decay_factor = parse_double(key, value);
  } else if (field == "decay_interval") {
    cfg.decay_interval = parse_int(key, value);
  } else if (field == "hidden") {
    cfg.hidden = parse_sizes(key, value);
  } else if (field == "optimizer") {
    if (value == "sgd") {
      cfg.optimizer = OptKind::Sgd;
    } else if (value == "adam") {
      cfg.optimizer = OptKind::Adam;
    } else {
      throw ConfigError("config key " + key + ": expected sgd|adam");
    }
  } else if (field == "eval_every") {
    cfg.eval_every = parse_int(key, value);
  } else if (field == "patience") {
    cfg.patience = static_cast<int>(parse_int(key, value));
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

void parse_fsl_field(FslMethodSpec& spec, const std::string& key,
                     const std::string& field, const std::string& value) {
  FslConfig& cfg = spec.config;
  if (field == "method") {
    cfg.method = fsl_method_from_string(value);
  } else if (field == "train") {
    if (value == "episodic") {
      spec.episodic = true;
    } else if (value == "batch") {
      spec.episodic = false;
    } else {
      throw ConfigError("config key " + key + ": expected episodic|batch");
    }
  } else if (field == "n_way") {
    cfg.train_episode.n_way = static_cast<int>(parse_int(key, value));
  } else if (field == "k_shot") {
    cfg.train_episode.k_shot = static_cast<int>(parse_int(key, value));
  } else if (field == "q_query") {
    cfg.train_episode.q_query = static_cast<int>(parse_int(key, value));
  } else if (field == "steps") {
    cfg.steps = parse_int(key, value);
  } else if (field == "batch_size") {
    cfg.batch_size = static_cast<int>(parse_int(key, value));
  } else if (field == "lr") {
    cfg.lr = parse_double(key, value);
  } else if (field == "decay_factor") {
    cfg.decay_factor = parse_double(key, value);
  } else if (field == "decay_interval") {
    cfg.decay_interval = parse_int(key, value);
  } else if (field == "embed_dim") {
    cfg.embed_dim = static_cast<std::size_t>(parse_int(key, value));
  } else if (field == "embed_hidden") {
    cfg.embed_hidden = parse_sizes(key, value);
  } else if (field == "relation_hidden") {
    cfg.relation_hidden = parse_sizes(key, value);
  } else if (field == "inner_steps") {
    cfg.inner_steps = static_cast<int>(parse_int(key, value));
  } else if (field == "inner_lr") {
    cfg.inner_lr = parse_double(key, value);
  } else if (field == "bpp_scale") {
    cfg.bpp_scale = parse_double(key, value);
  } else if (field == "bpp_finetune_steps") {
    cfg.bpp_finetune_steps = static_cast<int>(parse_int(key, value));
  } else if (field == "bpp_finetune_lr") {
    cfg.bpp_finetune_lr = parse_double(key, value);
  } else if (field == "eval_every") {
    cfg.eval_every = parse_int(key, value);
  } else if (field == "patience") {
    cfg.patience = static_cast<int>(parse_int(key, value));
  } else if (field == "val_episodes") {
    cfg.val_episodes = static_cast<int>(parse_int(key, value));
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

}  // namespace

std::uint64_t ExperimentConfig::hash() const { return fnv1a_hash(raw_text); }

std::uint64_t ExperimentConfig::section_hash(const std::string& method_name) const {
  // Method-section lines + global lines that change training inputs.
  std::ostringstream relevant;
  std::istringstream in(raw_text);
  std::string line;
  const std::string csl_prefix = "csl." + method_name + ".";
  const std::string fsl_prefix = "fsl." + method_name + ".";
  while (std::getline(in, line)) {
    const bool global = line.rfind("data.", 0) == 0 || line.rfind("split.", 0) == 0 ||
                        line.rfind("group.", 0) == 0 || line.rfind("seed", 0) == 0 ||
                        line.rfind("support.", 0) == 0;
    if (global || line.rfind(csl_prefix, 0) == 0 || line.rfind(fsl_prefix, 0) == 0) {
      relevant << line << '\n';
    }
  }
  return fnv1a_hash(relevant.str(), fnv1a_hash(method_name));
}

ExperimentConfig parse_config_text(const std::string& text) {
  KeyValueStore store;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> key_order;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string stripped;
    for (char c : line) {
      if (c == '#') break;
      stripped.push_back(c);
    }
    while (!stripped.empty() && (stripped.back() == ' ' || stripped.back() == '\t')) {
      stripped.pop_back();
    }
    std::size_t start = 0;
    while (start < stripped.size() && (stripped[start] == ' ' || stripped[start] == '\t')) {
      ++start;
    }
    stripped = stripped.substr(start);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key=value");
    }
    const std::string key = stripped.substr(0, eq);
    if (store.values.count(key)) {
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key " +
                        key);
    }
    store.values[key] = stripped.substr(eq + 1);
    key_order.push_back(key);
  }

  ExperimentConfig cfg;
  cfg.raw_text = text;

  if (auto v = store.take("seed")) {
    cfg.seed = static_cast<std::uint64_t>(parse_int("seed", *v));
  }
  if (auto v = store.take("threads")) cfg.threads = static_cast<int>(parse_int("threads", *v));
  if (auto v = store.take("data.source")) {
    if (*v != "synthetic" && *v != "csv") {
      throw ConfigError("data.source must be synthetic or csv");
    }
    cfg.data_source = *v;
  }
  if (auto v = store.take("data.csv_path")) cfg.csv_path = *v;
  if (cfg.data_source == "csv" && cfg.csv_path.empty()) {
    throw ConfigError("data.source=csv requires data.csv_path");
  }
  if (auto v = store.take("data.synthetic.classes")) {
    cfg.synthetic.classes = static_cast<int>(parse_int("data.synthetic.classes", *v));
  }
  if (auto v = store.take("data.synthetic.dims")) {
    cfg.synthetic.dims = static_cast<int>(parse_int("data.synthetic.dims", *v));
  }
  if (auto v = store.take("data.synthetic.zipf_s")) {
    cfg.synthetic.zipf_s = parse_double("data.synthetic.zipf_s", *v);
  }
  if (auto v = store.take("data.synthetic.max_count")) {
    cfg.synthetic.max_count = static_cast<int>(parse_int("data.synthetic.max_count", *v));
  }
  if (auto v = store.take("data.synthetic.sigma")) {
    cfg.synthetic.sigma = parse_double("data.synthetic.sigma", *v);
  }
  if (auto v = store.take("data.synthetic.noise")) {
    cfg.synthetic.noise = parse_double("data.synthetic.noise", *v);
  }
  if (auto v = store.take("split.dev_fraction")) {
    cfg.dev_fraction = parse_double("split.dev_fraction", *v);
  }
  if (auto v = store.take("split.val_fraction")) {
    cfg.val_fraction = parse_double("split.val_fraction", *v);
  }
  if (auto v = store.take("split.min_train_per_class")) {
    cfg.min_train_per_class =
        static_cast<int>(parse_int("split.min_train_per_class", *v));
  }
  if (auto v = store.take("group.common_dev")) {
    cfg.thresholds.common_dev = static_cast<int>(parse_int("group.common_dev", *v));
  }
  if (auto v = store.take("group.rare_dev")) {
    cfg.thresholds.rare_dev = static_cast<int>(parse_int("group.rare_dev", *v));
  }
  if (auto v = store.take("group.rare_test")) {
    cfg.thresholds.rare_test = static_cast<int>(parse_int("group.rare_test", *v));
  }
  if (auto v = store.take("eval.runs")) {
    cfg.eval_runs = static_cast<int>(parse_int("eval.runs", *v));
    if (cfg.eval_runs < 1) throw ConfigError("eval.runs must be >= 1");
  }
  if (auto v = store.take("eval.standard.enabled")) {
    cfg.standard_eval_enabled = parse_bool("eval.standard.enabled", *v);
  }
  if (auto v = store.take("eval.standard.n_way")) {
    cfg.standard_episode.n_way = static_cast<int>(parse_int("eval.standard.n_way", *v));
  }
  if (auto v = store.take("eval.standard.k_shot")) {
    cfg.standard_episode.k_shot = static_cast<int>(parse_int("eval.standard.k_shot", *v));
  }
  if (auto v = store.take("eval.standard.q_query")) {
    cfg.standard_episode.q_query =
        static_cast<int>(parse_int("eval.standard.q_query", *v));
  }
  if (auto v = store.take("eval.standard.episodes")) {
    cfg.standard_episodes = static_cast<int>(parse_int("eval.standard.episodes", *v));
  }
  if (auto v = store.take("support.shots_per_class")) {
    if (*v != "ALL") {
      const int shots = static_cast<int>(parse_int("support.shots_per_class", *v));
      if (shots < 1) throw ConfigError("support.shots_per_class must be >= 1 or ALL");
      cfg.support_shots = shots;
    }
  }

  // Method sections, in first-appearance order.
  std::vector<std::string> csl_names, fsl_names, ensemble_names;
  for (const auto& key : key_order) {
    auto parts = split_list(key, '.');
    if (parts.size() == 3 && parts[0] == "csl") {
      if (std::find(csl_names.begin(), csl_names.end(), parts[1]) == csl_names.end()) {
        csl_names.push_back(parts[1]);
      }
    } else if (parts.size() == 3 && parts[0] == "fsl") {
      if (std::find(fsl_names.begin(), fsl_names.end(), parts[1]) == fsl_names.end()) {
        fsl_names.push_back(parts[1]);
      }
    } else if (parts.size() == 3 && parts[0] == "ensemble") {
      if (std::find(ensemble_names.begin(), ensemble_names.end(), parts[1]) ==
          ensemble_names.end()) {
        ensemble_names.push_back(parts[1]);
      }
    }
  }
  for (const auto& name : csl_names) {
    CslMethodSpec spec;
    spec.name = name;
    const std::string prefix = "csl." + name + ".";
    for (const auto& [key, value] : store.values) {
      if (key.rfind(prefix, 0) == 0) {
        store.consumed[key] = true;
        try {
          parse_csl_field(spec.config, key, key.substr(prefix.size()), value);
        } catch (const std::invalid_argument& e) {
          throw ConfigError("config key " + key + ": " + e.what());
        }
      }
    }
    spec.config.validate();
    cfg.csl_methods.push_back(std::move(spec));
  }
  for (const auto& name : fsl_names) {
    FslMethodSpec spec;
    spec.name = name;
    bool method_known = true;
    try {
      spec.config.method = fsl_method_from_string(name);
    } catch (const std::invalid_argument&) {
      method_known = false;  // must be set by an explicit `method` key
    }
    const std::string prefix = "fsl." + name + ".";
    for (const auto& [key, value] : store.values) {
      if (key.rfind(prefix, 0) == 0) {
        store.consumed[key] = true;
        try {
          parse_fsl_field(spec, key, key.substr(prefix.size()), value);
          if (key == prefix + "method") method_known = true;
        } catch (const std::invalid_argument& e) {
          throw ConfigError("config key " + key + ": " + e.what());
        }
      }
    }
    if (!method_known) {
      throw ConfigError("fsl section '" + name +
                        "' needs an explicit method key (its name is not a method)");
    }
    spec.episodic = !is_batch_method(spec.config.method);
    spec.config.validate();
    cfg.fsl_methods.push_back(std::move(spec));
  }
  for (const auto& name : ensemble_names) {
    EnsembleMethodSpec spec;
    spec.name = name;
    const std::string prefix = "ensemble." + name + ".";
    if (auto v = store.take(prefix + "members")) {
      spec.members = split_list(*v, '+');
    } else {
      throw ConfigError("ensemble." + name + " requires a members list");
    }
    if (auto v = store.take(prefix + "routing")) {
      spec.routing = parse_bool(prefix + "routing", *v);
    }
    if (spec.members.empty()) throw ConfigError("ensemble." + name + ": empty members");
    auto known = [&](const std::string& member) {
      for (const auto& m : cfg.csl_methods) {
        if (m.name == member) return true;
      }
      for (const auto& m : cfg.fsl_methods) {
        if (m.name == member) return true;
      }
      return false;
    };
    for (const auto& member : spec.members) {
      if (!known(member)) {
        throw ConfigError("ensemble." + name + ": unknown member " + member);
      }
    }
    cfg.ensembles.push_back(std::move(spec));
  }

  store.check_all_consumed();
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace longtail
