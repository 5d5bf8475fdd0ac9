#include "longtail/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace longtail {

namespace {

bool valid_label(const std::string& label) {
  if (label.empty()) return false;
  for (char c : label) {
    const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                    (c >= '0' && c <= '9') || c == '_' || c == ' ' || c == '-';
    if (!ok) return false;
  }
  return true;
}

std::vector<std::string> split_fields(const std::string& line) {
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

// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back;
  for (int prec = 1; prec <= 16; ++prec) {
    char probe[32];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
    back = std::strtod(probe, nullptr);
    if (back == v) return probe;
  }
  return buf;
}

}  // namespace

std::map<std::string, int> Dataset::class_counts() const {
  std::map<std::string, int> counts;
  for (const auto& ex : examples) counts[ex.label] += 1;
  return counts;
}

std::vector<std::string> Dataset::labels() const {
  std::vector<std::string> out;
  for (const auto& [label, _] : class_counts()) out.push_back(label);
  return out;
}

std::map<std::string, std::vector<std::size_t>> Dataset::class_index() const {
  std::map<std::string, std::vector<std::size_t>> idx;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    idx[examples[i].label].push_back(i);
  }
  return idx;
}

void Dataset::validate() const {
  std::set<std::int64_t> ids;
  for (const auto& ex : examples) {
    if (ex.features.size() != dim) {
      throw std::invalid_argument("Dataset: inconsistent feature dimension");
    }
    for (double v : ex.features) {
      if (!std::isfinite(v)) throw std::invalid_argument("Dataset: non-finite feature");
    }
    if (!ids.insert(ex.id).second) {
      throw std::invalid_argument("Dataset: duplicate example id");
    }
  }
}

Dataset ingest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("ingest_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("ingest_csv: empty file " + path);
  auto header = split_fields(line);
  if (header.size() != 4 || header[0] != "id" || header[1] != "label" ||
      header[2] != "timestamp" || header[3].rfind("dim=", 0) != 0) {
    throw ParseError("ingest_csv: bad header at line 1 (expected id,label,timestamp,dim=D)");
  }
  std::size_t dim = 0;
  try {
    dim = static_cast<std::size_t>(std::stoul(header[3].substr(4)));
  } catch (const std::exception&) {
    throw ParseError("ingest_csv: bad dimension in header at line 1");
  }
  if (dim == 0) throw ParseError("ingest_csv: dimension must be > 0 at line 1");

  Dataset ds;
  ds.dim = dim;
  std::set<std::int64_t> ids;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_fields(line);
    if (fields.size() != 3 + dim) {
      throw ParseError("ingest_csv: line " + std::to_string(line_no) + ": expected " +
                       std::to_string(3 + dim) + " fields, got " +
                       std::to_string(fields.size()));
    }
    FeatureExample ex;
    try {
      ex.id = std::stoll(fields[0]);
      ex.timestamp = std::stoll(fields[2]);
    } catch (const std::exception&) {
      throw ParseError("ingest_csv: line " + std::to_string(line_no) +
                       ": bad id or timestamp");
    }
    ex.label = fields[1];
    if (!valid_label(ex.label)) {
      throw ParseError("ingest_csv: line " + std::to_string(line_no) + ": bad label");
    }
    ex.features.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      const char* s = fields[3 + i].c_str();
      char* end = nullptr;
      ex.features[i] = std::strtod(s, &end);
      if (end == s || *end != '\0' || !std::isfinite(ex.features[i])) {
        throw ParseError("ingest_csv: line " + std::to_string(line_no) +
                         ": bad feature value");
      }
    }
    if (!ids.insert(ex.id).second) {
      throw ParseError("ingest_csv: line " + std::to_string(line_no) +
                       ": duplicate id " + fields[0]);
    }
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

void export_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_csv: cannot open " + path);
  out << "id,label,timestamp,dim=" << ds.dim << "\n";
  for (const auto& ex : ds.examples) {
    out << ex.id << ',' << ex.label << ',' << ex.timestamp;
    for (double v : ex.features) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw std::runtime_error("export_csv: write failed for " + path);
}

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.classes < 3) throw std::invalid_argument("generate_synthetic: classes < 3");
  if (spec.dims < 2) throw std::invalid_argument("generate_synthetic: dims < 2");
  if (spec.zipf_s <= 0.0) throw std::invalid_argument("generate_synthetic: zipf_s <= 0");
  if (spec.max_count < 1) throw std::invalid_argument("generate_synthetic: max_count < 1");
  if (spec.sigma <= 0.0) throw std::invalid_argument("generate_synthetic: sigma <= 0");
  if (spec.noise < 0.0 || spec.noise >= 1.0) {
    throw std::invalid_argument("generate_synthetic: noise out of [0, 1)");
  }

  Rng rng = Rng::stream(seed, "synthetic", 0);
  const std::size_t d = static_cast<std::size_t>(spec.dims);

  // Per-class means on the unit sphere.
  std::vector<Vector> means(static_cast<std::size_t>(spec.classes));
  for (auto& mu : means) {
    mu.resize(d);
    double n = 0.0;
    do {
      for (double& v : mu) v = rng.normal();
      n = norm(mu);
    } while (n < 1e-12);
    for (double& v : mu) v /= n;
  }

  Dataset ds;
  ds.dim = d;
  std::int64_t next_id = 0;
  for (int c = 0; c < spec.classes; ++c) {
    const double rank = static_cast<double>(c + 1);
    const int count = static_cast<int>(
        std::ceil(static_cast<double>(spec.max_count) * std::pow(rank, -spec.zipf_s)));
    char label[16];
    std::snprintf(label, sizeof(label), "class_%03d", c);
    for (int i = 0; i < count; ++i) {
      FeatureExample ex;
      ex.id = next_id++;
      ex.label = label;
      ex.features.resize(d);
      const double spread =
          (spec.noise > 0.0 && rng.uniform() < spec.noise) ? 3.0 * spec.sigma : spec.sigma;
      for (std::size_t j = 0; j < d; ++j) {
        ex.features[j] = means[static_cast<std::size_t>(c)][j] + spread * rng.normal();
      }
      ds.examples.push_back(std::move(ex));
    }
  }
  // Timestamps: a random permutation of 0..n-1.
  std::vector<std::int64_t> stamps(ds.examples.size());
  for (std::size_t i = 0; i < stamps.size(); ++i) stamps[i] = static_cast<std::int64_t>(i);
  rng.shuffle(stamps);
  for (std::size_t i = 0; i < ds.examples.size(); ++i) ds.examples[i].timestamp = stamps[i];
  return ds;
}

std::pair<Dataset, Dataset> temporal_split(const Dataset& ds, double dev_fraction) {
  if (dev_fraction <= 0.0 || dev_fraction >= 1.0) {
    throw std::invalid_argument("temporal_split: fraction out of (0, 1)");
  }
  std::vector<std::size_t> order(ds.examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ea = ds.examples[a];
    const auto& eb = ds.examples[b];
    if (ea.timestamp != eb.timestamp) return ea.timestamp < eb.timestamp;
    return ea.id < eb.id;
  });
  const std::size_t n_dev = static_cast<std::size_t>(
      std::ceil(dev_fraction * static_cast<double>(order.size())));
  Dataset dev, test;
  dev.dim = test.dim = ds.dim;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_dev ? dev : test).examples.push_back(ds.examples[order[i]]);
  }
  return {std::move(dev), std::move(test)};
}

std::pair<Dataset, Dataset> stratified_train_val_split(const Dataset& dev,
                                                       double val_fraction,
                                                       int min_train_per_class) {
  if (val_fraction <= 0.0 || val_fraction >= 1.0) {
    throw std::invalid_argument("stratified_train_val_split: fraction out of (0, 1)");
  }
  Dataset train, val;
  train.dim = val.dim = dev.dim;
  for (auto& [label, indices] : dev.class_index()) {
    std::vector<std::size_t> order = indices;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto& ea = dev.examples[a];
      const auto& eb = dev.examples[b];
      if (ea.timestamp != eb.timestamp) return ea.timestamp < eb.timestamp;
      return ea.id < eb.id;
    });
    const int n = static_cast<int>(order.size());
    int n_val = 0;
    if (n > min_train_per_class) {
      n_val = std::max(1, static_cast<int>(std::ceil(val_fraction * n)));
      n_val = std::min(n_val, n - min_train_per_class);
      n_val = std::max(n_val, 0);
    }
    // Most recent examples go to val.
    for (int i = 0; i < n; ++i) {
      (i < n - n_val ? train : val).examples.push_back(dev.examples[order[static_cast<std::size_t>(i)]]);
    }
  }
  return {std::move(train), std::move(val)};
}

int ClassRegistry::index(const std::string& label) const {
  auto it = index_of.find(label);
  if (it == index_of.end()) {
    throw std::invalid_argument("ClassRegistry: unknown label " + label);
  }
  return it->second;
}

std::string ClassRegistry::final_label(const std::string& original) const {
  auto it = relabel.find(original);
  if (it == relabel.end()) {
    throw std::invalid_argument("ClassRegistry: unknown original label " + original);
  }
  return it->second;
}

std::vector<int> ClassRegistry::group_indices(ClassGroup g) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].group == g) out.push_back(static_cast<int>(i));
  }
  return out;
}

ClassGroup ClassRegistry::group_of(int class_index) const {
  return classes.at(static_cast<std::size_t>(class_index)).group;
}

std::uint64_t ClassRegistry::hash() const {
  std::ostringstream os;
  for (const auto& e : classes) {
    os << e.label << '|' << e.dev_count << '|' << e.test_count << '|'
       << (e.group == ClassGroup::Common ? 'C' : 'R') << ';';
  }
  return fnv1a_hash(os.str());
}

ClassRegistry build_class_registry(const Dataset& dev, const Dataset& test,
                                   const GroupThresholds& thresholds) {
  auto dev_counts = dev.class_counts();
  auto test_counts = test.class_counts();
  std::set<std::string> vocab;
  for (const auto& [l, _] : dev_counts) vocab.insert(l);
  for (const auto& [l, _] : test_counts) vocab.insert(l);
  if (vocab.empty()) throw std::invalid_argument("build_class_registry: empty class vocabulary");
  if (vocab.count(kOtherLabel)) {
    throw std::invalid_argument("build_class_registry: reserved label 'Other' present in data");
  }

  ClassRegistry reg;
  int other_dev = 0, other_test = 0;
  std::map<std::string, ClassRegistry::Entry> kept;
  for (const auto& label : vocab) {
    const int dc = dev_counts.count(label) ? dev_counts[label] : 0;
    const int tc = test_counts.count(label) ? test_counts[label] : 0;
    if (dc > thresholds.common_dev) {
      kept[label] = {label, dc, tc, ClassGroup::Common};
      reg.relabel[label] = label;
    } else if (dc > thresholds.rare_dev && tc > thresholds.rare_test) {
      kept[label] = {label, dc, tc, ClassGroup::Rare};
      reg.relabel[label] = label;
    } else {
      other_dev += dc;
      other_test += tc;
      reg.relabel[label] = kOtherLabel;
    }
  }
  // "Other" counts as a common class regardless of its aggregated size; it
  // only exists when some class was actually absorbed.
  if (other_dev > 0 || other_test > 0) {
    kept[kOtherLabel] = {kOtherLabel, other_dev, other_test, ClassGroup::Common};
    reg.relabel[kOtherLabel] = kOtherLabel;
  }

  for (auto& [label, entry] : kept) {
    reg.index_of[label] = static_cast<int>(reg.classes.size());
    reg.classes.push_back(entry);
  }
  return reg;
}

Dataset apply_registry_labels(const Dataset& ds, const ClassRegistry& registry) {
  Dataset out;
  out.dim = ds.dim;
  out.examples = ds.examples;
  for (auto& ex : out.examples) ex.label = registry.final_label(ex.label);
  return out;
}

void EpisodeSpec::validate() const {
  if (n_way < 2) throw std::invalid_argument("EpisodeSpec: N must be >= 2");
  if (k_shot < 1) throw std::invalid_argument("EpisodeSpec: k must be >= 1");
  if (q_query < 1) throw std::invalid_argument("EpisodeSpec: q must be >= 1");
}

Episode sample_episode(const Dataset& source, const EpisodeSpec& spec,
                       const std::vector<std::string>& class_pool, Rng& rng) {
  spec.validate();
  auto index = source.class_index();
  std::vector<std::string> eligible;
  for (const auto& label : class_pool) {
    auto it = index.find(label);
    if (it != index.end() &&
        it->second.size() >= static_cast<std::size_t>(spec.k_shot + spec.q_query)) {
      eligible.push_back(label);
    }
  }
  if (eligible.size() < static_cast<std::size_t>(spec.n_way)) {
    throw EpisodeInfeasible(
        "sample_episode: need " + std::to_string(spec.n_way) + " classes with >= " +
        std::to_string(spec.k_shot + spec.q_query) + " examples, have " +
        std::to_string(eligible.size()));
  }
  // Uniform class choice without replacement.
  std::vector<std::string> chosen = eligible;
  for (int i = 0; i < spec.n_way; ++i) {
    const std::size_t j =
        static_cast<std::size_t>(i) +
        static_cast<std::size_t>(rng.uniform_int(chosen.size() - static_cast<std::size_t>(i)));
    std::swap(chosen[static_cast<std::size_t>(i)], chosen[j]);
  }
  chosen.resize(static_cast<std::size_t>(spec.n_way));

  Episode ep;
  ep.class_labels = chosen;
  for (int c = 0; c < spec.n_way; ++c) {
    std::vector<std::size_t> pool = index[chosen[static_cast<std::size_t>(c)]];
    const int need = spec.k_shot + spec.q_query;
    for (int i = 0; i < need; ++i) {
      const std::size_t j =
          static_cast<std::size_t>(i) +
          static_cast<std::size_t>(rng.uniform_int(pool.size() - static_cast<std::size_t>(i)));
      std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    for (int i = 0; i < spec.k_shot; ++i) {
      ep.support.emplace_back(source.examples[pool[static_cast<std::size_t>(i)]], c);
    }
    for (int i = spec.k_shot; i < need; ++i) {
      ep.query.emplace_back(source.examples[pool[static_cast<std::size_t>(i)]], c);
    }
  }
  return ep;
}

Dataset build_support_set(const Dataset& dev, const ClassRegistry& registry,
                          std::optional<int> shots_per_class, Rng& rng) {
  auto index = dev.class_index();
  Dataset out;
  out.dim = dev.dim;
  for (const auto& entry : registry.classes) {
    auto it = index.find(entry.label);
    if (it == index.end() || it->second.empty()) {
      throw std::invalid_argument("build_support_set: class missing from dev: " +
                                  entry.label);
    }
    std::vector<std::size_t> pool = it->second;
    std::size_t take = pool.size();
    if (shots_per_class) {
      if (*shots_per_class < 1) {
        throw std::invalid_argument("build_support_set: shots_per_class must be >= 1");
      }
      take = std::min<std::size_t>(take, static_cast<std::size_t>(*shots_per_class));
      for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(pool.size() - i));
        std::swap(pool[i], pool[j]);
      }
    }
    for (std::size_t i = 0; i < take; ++i) {
      out.examples.push_back(dev.examples[pool[i]]);
    }
  }
  return out;
}

ClassPools standard_class_pools(const Dataset& ds, double train_fraction,
                                double val_fraction, Rng& rng) {
  if (train_fraction <= 0.0 || val_fraction <= 0.0 ||
      train_fraction + val_fraction >= 1.0) {
    throw std::invalid_argument("standard_class_pools: bad fractions");
  }
  std::vector<std::string> labels = ds.labels();
  if (labels.size() < 3) {
    throw std::invalid_argument("standard_class_pools: need at least 3 classes");
  }
  rng.shuffle(labels);
  const std::size_t n = labels.size();
  const std::size_t n_train = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n))));
  std::size_t n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n))));
  if (n_train + n_val >= n) n_val = n - n_train - 1;
  if (n_val == 0 || n_train + n_val >= n) {
    throw std::invalid_argument("standard_class_pools: too few classes for split");
  }
  ClassPools pools;
  pools.train.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_train));
  pools.val.assign(labels.begin() + static_cast<std::ptrdiff_t>(n_train),
                   labels.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  pools.test.assign(labels.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                    labels.end());
  return pools;
}

std::pair<std::vector<std::string>, std::vector<std::string>> realworld_class_pools(
    const ClassRegistry& registry) {
  std::vector<const ClassRegistry::Entry*> order;
  for (const auto& e : registry.classes) order.push_back(&e);
  std::sort(order.begin(), order.end(),
            [](const ClassRegistry::Entry* a, const ClassRegistry::Entry* b) {
              if (a->dev_count != b->dev_count) return a->dev_count > b->dev_count;
              return a->label < b->label;
            });
  std::vector<std::string> train, val;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i % 2 == 0 ? train : val).push_back(order[i]->label);
  }
  return {std::move(train), std::move(val)};
}

std::vector<std::string> feasible_classes(const Dataset& source,
                                          const std::vector<std::string>& pool,
                                          const EpisodeSpec& spec) {
  auto index = source.class_index();
  std::vector<std::string> out;
  for (const auto& label : pool) {
    auto it = index.find(label);
    if (it != index.end() &&
        it->second.size() >= static_cast<std::size_t>(spec.k_shot + spec.q_query)) {
      out.push_back(label);
    }
  }
  return out;
}

}  // namespace longtail
