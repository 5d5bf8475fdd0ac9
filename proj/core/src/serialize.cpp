#include "longtail/serialize.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace longtail {

namespace {

void write_params(std::ofstream& out, const MlpParams& p) {
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const Matrix& w = p.weights[l];
    for (std::size_t r = 0; r < w.rows; ++r) {
      for (std::size_t c = 0; c < w.cols; ++c) {
        out << l << ',' << r << ',' << c << ',' << format_double_exact(w(r, c)) << '\n';
      }
      out << l << ',' << r << ",-1," << format_double_exact(p.biases[l][r]) << '\n';
    }
  }
}

void read_params(std::istream& in, MlpParams& p, std::size_t n_rows) {
  std::string line;
  for (std::size_t i = 0; i < n_rows; ++i) {
    if (!std::getline(in, line)) throw ParseError("model file: truncated weight block");
    std::size_t l, r;
    long c;
    char value[64];
    if (std::sscanf(line.c_str(), "%zu,%zu,%ld,%63s", &l, &r, &c, value) != 4) {
      throw ParseError("model file: bad weight row: " + line);
    }
    if (l >= p.weights.size() || r >= p.weights[l].rows) {
      throw ParseError("model file: weight index out of range: " + line);
    }
    const double v = std::strtod(value, nullptr);
    if (c < 0) {
      p.biases[l][r] = v;
    } else if (static_cast<std::size_t>(c) < p.weights[l].cols) {
      p.weights[l](r, static_cast<std::size_t>(c)) = v;
    } else {
      throw ParseError("model file: weight index out of range: " + line);
    }
  }
}

std::size_t param_rows(const MlpParams& p) {
  std::size_t n = 0;
  for (const auto& w : p.weights) n += w.rows * (w.cols + 1);
  return n;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

void write_layer_sizes(std::ofstream& out, const char* key, const MlpParams& p) {
  out << key;
  for (std::size_t s : p.layer_sizes()) out << ',' << s;
  out << '\n';
}

std::vector<std::size_t> parse_layer_sizes(const std::vector<std::string>& fields) {
  std::vector<std::size_t> sizes;
  for (std::size_t i = 1; i < fields.size(); ++i) {
    sizes.push_back(static_cast<std::size_t>(std::stoul(fields[i])));
  }
  if (sizes.size() < 2) throw ParseError("model file: bad layer sizes");
  return sizes;
}

std::map<std::string, std::vector<std::string>> read_header(std::istream& in) {
  std::map<std::string, std::vector<std::string>> header;
  std::string line;
  while (std::getline(in, line)) {
    if (line == "weights") break;
    auto fields = split_csv(line);
    if (fields.empty()) throw ParseError("model file: empty header line");
    header[fields[0]] = fields;
  }
  return header;
}

}  // namespace

std::string format_double_exact(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void save_csl_model(const CslModel& model, const std::string& path,
                    std::uint64_t config_hash) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csl_model: cannot open " + path);
  out << "longtail-model,1\nkind,csl\n";
  out << "config_hash," << config_hash << '\n';
  out << "registry_hash," << model.registry.hash() << '\n';
  write_layer_sizes(out, "layers", model.net);
  out << "priors";
  for (double p : model.priors) out << ',' << format_double_exact(p);
  out << '\n';
  out << "prior_correction," << (model.prior_correction ? 1 : 0) << '\n';
  out << "weights\n";
  write_params(out, model.net);
  out << "end\n";
  if (!out) throw std::runtime_error("save_csl_model: write failed for " + path);
}

CslModel load_csl_model(const std::string& path, const ClassRegistry& registry) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_csl_model: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "longtail-model,1") {
    throw ParseError("load_csl_model: bad magic in " + path);
  }
  auto header = read_header(in);
  if (!header.count("kind") || header["kind"].at(1) != "csl") {
    throw ParseError("load_csl_model: not a csl model: " + path);
  }
  if (!header.count("registry_hash") ||
      std::stoull(header["registry_hash"].at(1)) != registry.hash()) {
    throw ParseError("load_csl_model: registry hash mismatch in " + path);
  }
  CslModel model;
  model.registry = registry;
  model.net = MlpParams::zeros(parse_layer_sizes(header.at("layers")));
  const auto& priors = header.at("priors");
  for (std::size_t i = 1; i < priors.size(); ++i) {
    model.priors.push_back(std::strtod(priors[i].c_str(), nullptr));
  }
  if (model.priors.size() != registry.size()) {
    throw ParseError("load_csl_model: priors length mismatch in " + path);
  }
  model.prior_correction = header.at("prior_correction").at(1) == "1";
  read_params(in, model.net, param_rows(model.net));
  if (!std::getline(in, line) || line != "end") {
    throw ParseError("load_csl_model: missing end marker in " + path);
  }
  return model;
}

void save_meta_model(const MetaModel& model, std::uint64_t registry_hash,
                     const std::string& path, std::uint64_t config_hash) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_meta_model: cannot open " + path);
  out << "longtail-model,1\nkind,fsl\n";
  out << "config_hash," << config_hash << '\n';
  out << "registry_hash," << registry_hash << '\n';
  out << "method," << fsl_method_to_string(model.method) << '\n';
  write_layer_sizes(out, "layers", model.embedder);
  if (model.relation) write_layer_sizes(out, "relation_layers", *model.relation);
  const FslConfig& c = model.config;
  out << "cfg,episode," << c.train_episode.n_way << ',' << c.train_episode.k_shot << ','
      << c.train_episode.q_query << '\n';
  out << "cfg,inner," << c.inner_steps << ',' << format_double_exact(c.inner_lr) << '\n';
  out << "cfg,bpp," << format_double_exact(c.bpp_scale) << ',' << c.bpp_finetune_steps
      << ',' << format_double_exact(c.bpp_finetune_lr) << '\n';
  out << "weights\n";
  write_params(out, model.embedder);
  if (model.relation) {
    out << "relation_weights\n";
    write_params(out, *model.relation);
  }
  out << "end\n";
  if (!out) throw std::runtime_error("save_meta_model: write failed for " + path);
}

MetaModel load_meta_model(const std::string& path,
                          std::uint64_t expected_registry_hash) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_meta_model: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "longtail-model,1") {
    throw ParseError("load_meta_model: bad magic in " + path);
  }
  auto header = read_header(in);
  if (!header.count("kind") || header["kind"].at(1) != "fsl") {
    throw ParseError("load_meta_model: not an fsl model: " + path);
  }
  if (expected_registry_hash != 0 &&
      std::stoull(header.at("registry_hash").at(1)) != expected_registry_hash) {
    throw ParseError("load_meta_model: registry hash mismatch in " + path);
  }
  MetaModel model;
  model.method = fsl_method_from_string(header.at("method").at(1));
  model.config.method = model.method;
  model.embedder = MlpParams::zeros(parse_layer_sizes(header.at("layers")));
  model.config.embed_dim = model.embedder.output_dim();
  if (header.count("relation_layers")) {
    model.relation = MlpParams::zeros(parse_layer_sizes(header.at("relation_layers")));
  }
  // read_header keeps only the last row per key; re-scan for cfg rows.
  {
    std::ifstream again(path);
    std::string l2;
    while (std::getline(again, l2) && l2 != "weights") {
      auto f = split_csv(l2);
      if (f.size() >= 2 && f[0] == "cfg") {
        if (f[1] == "episode" && f.size() == 5) {
          model.config.train_episode = {std::stoi(f[2]), std::stoi(f[3]), std::stoi(f[4])};
        } else if (f[1] == "inner" && f.size() == 4) {
          model.config.inner_steps = std::stoi(f[2]);
          model.config.inner_lr = std::strtod(f[3].c_str(), nullptr);
        } else if (f[1] == "bpp" && f.size() == 5) {
          model.config.bpp_scale = std::strtod(f[2].c_str(), nullptr);
          model.config.bpp_finetune_steps = std::stoi(f[3]);
          model.config.bpp_finetune_lr = std::strtod(f[4].c_str(), nullptr);
        }
      }
    }
  }
  read_params(in, model.embedder, param_rows(model.embedder));
  if (model.relation) {
    if (!std::getline(in, line) || line != "relation_weights") {
      throw ParseError("load_meta_model: missing relation block in " + path);
    }
    read_params(in, *model.relation, param_rows(*model.relation));
  }
  if (!std::getline(in, line) || line != "end") {
    throw ParseError("load_meta_model: missing end marker in " + path);
  }
  return model;
}

std::uint64_t read_model_config_hash(const std::string& path) {
  std::ifstream in(path);
  if (!in) return 0;
  std::string line;
  while (std::getline(in, line) && line != "weights") {
    auto fields = split_csv(line);
    if (fields.size() == 2 && fields[0] == "config_hash") {
      try {
        return std::stoull(fields[1]);
      } catch (const std::exception&) {
        return 0;
      }
    }
  }
  return 0;
}

}  // namespace longtail
