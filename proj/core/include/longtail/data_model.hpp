#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "longtail/numerics.hpp"
#include "longtail/rng.hpp"

namespace longtail {

// One labeled embedding vector; timestamp is an ordering proxy.
struct FeatureExample {
  std::int64_t id = 0;
  std::string label;
  std::int64_t timestamp = 0;
  Vector features;
};

struct Dataset {
  std::vector<FeatureExample> examples;
  std::size_t dim = 0;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }

  // Per-class example counts, ordered by label.
  std::map<std::string, int> class_counts() const;
  std::vector<std::string> labels() const;
  // Indices into `examples`, grouped per class.
  std::map<std::string, std::vector<std::size_t>> class_index() const;

  void validate() const;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EpisodeInfeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// CSV schema: header `id,label,timestamp,dim=D`; rows `id,label,timestamp,v0..v{D-1}`.
Dataset ingest_csv(const std::string& path);
void export_csv(const Dataset& ds, const std::string& path);

struct SyntheticSpec {
  int classes = 50;       // C >= 3
  int dims = 16;          // D >= 2
  double zipf_s = 1.2;    // > 0
  int max_count = 800;    // head-class count
  double sigma = 0.35;    // cluster spread, > 0
  double noise = 0.0;     // heavy-tail corruption fraction in [0, 1)
};

// Class of rank r (1-based) gets ceil(max_count * r^-s) examples around a
// per-class mean on the unit sphere; timestamps are a random permutation.
Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Sort by (timestamp, id); first ceil(fraction * n) examples form dev.
std::pair<Dataset, Dataset> temporal_split(const Dataset& ds, double dev_fraction);

// Per class with more than min_train_per_class examples, the most recent
// ceil(val_fraction * n_c) (at least 1, never cutting train below
// min_train_per_class) go to val; smaller classes stay wholly in train.
std::pair<Dataset, Dataset> stratified_train_val_split(const Dataset& dev,
                                                       double val_fraction,
                                                       int min_train_per_class);

enum class ClassGroup { Common, Rare };

struct GroupThresholds {
  int common_dev = 100;  // common: dev count > common_dev
  int rare_dev = 20;     // rare: dev count > rare_dev ...
  int rare_test = 5;     // ... and test count > rare_test
};

constexpr const char* kOtherLabel = "Other";

// Class catalog after absorption of extremely rare classes into "Other".
struct ClassRegistry {
  struct Entry {
    std::string label;
    int dev_count = 0;
    int test_count = 0;
    ClassGroup group = ClassGroup::Common;
  };
  std::vector<Entry> classes;  // index = class id, sorted by label
  std::unordered_map<std::string, int> index_of;
  // Original label -> final label ("Other" for absorbed classes).
  std::unordered_map<std::string, std::string> relabel;

  std::size_t size() const { return classes.size(); }
  int index(const std::string& label) const;
  std::string final_label(const std::string& original) const;
  std::vector<int> group_indices(ClassGroup g) const;
  ClassGroup group_of(int class_index) const;
  std::uint64_t hash() const;
};

ClassRegistry build_class_registry(const Dataset& dev, const Dataset& test,
                                   const GroupThresholds& thresholds);

// Rewrites absorbed labels to "Other"; other examples pass through.
Dataset apply_registry_labels(const Dataset& ds, const ClassRegistry& registry);

struct EpisodeSpec {
  int n_way = 5;
  int k_shot = 5;
  int q_query = 10;

  void validate() const;
};

// Support/query carry episode-local class indices in [0, N).
struct Episode {
  std::vector<std::pair<FeatureExample, int>> support;
  std::vector<std::pair<FeatureExample, int>> query;
  std::vector<std::string> class_labels;
};

Episode sample_episode(const Dataset& source, const EpisodeSpec& spec,
                       const std::vector<std::string>& class_pool, Rng& rng);

// Per class min(cap, available) dev examples without replacement;
// nullopt = ALL. Covers every registry class.
Dataset build_support_set(const Dataset& dev, const ClassRegistry& registry,
                          std::optional<int> shots_per_class, Rng& rng);

// Standard protocol: train/val/test class pools are pairwise disjoint.
struct ClassPools {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

ClassPools standard_class_pools(const Dataset& ds, double train_fraction,
                                double val_fraction, Rng& rng);

// Real-world protocol: classes split between the episodic train and val
// pools by round-robin over descending dev counts (ties by label).
std::pair<std::vector<std::string>, std::vector<std::string>> realworld_class_pools(
    const ClassRegistry& registry);

// Classes from `pool` with at least k+q examples in `source`.
std::vector<std::string> feasible_classes(const Dataset& source,
                                          const std::vector<std::string>& pool,
                                          const EpisodeSpec& spec);

}  // namespace longtail
