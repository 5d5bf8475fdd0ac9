#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "longtail/data_model.hpp"

using namespace longtail;

namespace {

Dataset tiny_dataset() {
  Dataset ds;
  ds.dim = 2;
  std::int64_t id = 0;
  auto add = [&](const std::string& label, int n) {
    for (int i = 0; i < n; ++i) {
      ds.examples.push_back({id, label, id, {double(id), -double(id)}});
      ++id;
    }
  };
  add("a", 4);
  add("b", 4);
  add("c", 4);
  return ds;
}

std::string write_temp(const std::string& contents) {
  static int counter = 0;
  std::string path = "/tmp/longtail_test_" + std::to_string(counter++) + ".csv";
  std::ofstream(path) << contents;
  return path;
}

}  // namespace

TEST_CASE("csv ingest accepts a well-formed file") {
  const std::string path = write_temp(
      "id,label,timestamp,dim=2\n"
      "1,melanoma,100,0.5,-0.25\n"
      "2,acne,90,1,2\n");
  const Dataset ds = ingest_csv(path);
  REQUIRE(ds.size() == 2);
  CHECK(ds.dim == 2);
  CHECK(ds.examples[0].label == "melanoma");
  CHECK(ds.examples[1].features[1] == doctest::Approx(2.0));
  std::remove(path.c_str());
}

TEST_CASE("csv ingest reports the offending line for a short row") {
  const std::string path = write_temp(
      "id,label,timestamp,dim=2\n"
      "1,a,100,0.5,0.5\n"
      "2,b,90,0.5\n");
  try {
    ingest_csv(path);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("csv ingest rejects duplicate ids and bad labels") {
  const std::string dup = write_temp(
      "id,label,timestamp,dim=1\n1,a,1,0.0\n1,b,2,0.0\n");
  CHECK_THROWS_AS(ingest_csv(dup), ParseError);
  std::remove(dup.c_str());
  const std::string bad = write_temp(
      "id,label,timestamp,dim=1\n1,a|b,1,0.0\n");
  CHECK_THROWS_AS(ingest_csv(bad), ParseError);
  std::remove(bad.c_str());
}

TEST_CASE("csv export then ingest is field-identical") {
  Dataset ds;
  ds.dim = 3;
  ds.examples.push_back({7, "x", 42, {0.1, -1.0 / 3.0, 1e-17}});
  ds.examples.push_back({8, "y z", 43, {2.5, 0.0, -0.0}});
  const std::string path = "/tmp/longtail_roundtrip.csv";
  export_csv(ds, path);
  const Dataset back = ingest_csv(path);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.examples[i].id == ds.examples[i].id);
    CHECK(back.examples[i].label == ds.examples[i].label);
    CHECK(back.examples[i].timestamp == ds.examples[i].timestamp);
    for (std::size_t d = 0; d < ds.dim; ++d) {
      CHECK(back.examples[i].features[d] == ds.examples[i].features[d]);
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("synthetic counts follow the zipf formula") {
  SyntheticSpec spec;
  spec.classes = 3;
  spec.dims = 2;
  spec.max_count = 8;
  spec.zipf_s = 1.0;
  spec.sigma = 0.1;
  const Dataset ds = generate_synthetic(spec, 1);
  auto counts = ds.class_counts();
  REQUIRE(counts.size() == 3);
  // ceil(8/1), ceil(8/2), ceil(8/3)
  std::vector<int> want = {8, 4, 3};
  std::size_t i = 0;
  for (const auto& [label, c] : counts) CHECK(c == want[i++]);
}

TEST_CASE("synthetic s near zero is balanced") {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.dims = 2;
  spec.max_count = 10;
  spec.zipf_s = 1e-12;
  spec.sigma = 0.1;
  const Dataset ds = generate_synthetic(spec, 1);
  for (const auto& [label, c] : ds.class_counts()) CHECK(c == 10);
}

TEST_CASE("synthetic generation is bit-identical under one seed") {
  SyntheticSpec spec;
  spec.classes = 5;
  spec.dims = 3;
  spec.max_count = 20;
  const Dataset a = generate_synthetic(spec, 77);
  const Dataset b = generate_synthetic(spec, 77);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.examples[i].id == b.examples[i].id);
    CHECK(a.examples[i].timestamp == b.examples[i].timestamp);
    CHECK(a.examples[i].features == b.examples[i].features);
  }
  SyntheticSpec bad;
  bad.classes = 2;
  CHECK_THROWS_AS(generate_synthetic(bad, 1), std::invalid_argument);
}

TEST_CASE("temporal split puts the earliest fraction into dev") {
  Dataset ds = tiny_dataset();  // 12 examples, timestamps 0..11
  auto [dev, test] = temporal_split(ds, 0.75);
  CHECK(dev.size() == 9);
  CHECK(test.size() == 3);
  std::int64_t max_dev = -1, min_test = 1 << 20;
  for (const auto& e : dev.examples) max_dev = std::max(max_dev, e.timestamp);
  for (const auto& e : test.examples) min_test = std::min(min_test, e.timestamp);
  CHECK(max_dev <= min_test);
}

TEST_CASE("temporal split handles halves and breaks timestamp ties by id") {
  Dataset ds;
  ds.dim = 1;
  ds.examples.push_back({4, "a", 5, {0.0}});
  ds.examples.push_back({2, "a", 5, {0.0}});
  ds.examples.push_back({3, "a", 5, {0.0}});
  ds.examples.push_back({1, "a", 5, {0.0}});
  auto [dev, test] = temporal_split(ds, 0.5);
  REQUIRE(dev.size() == 2);
  REQUIRE(test.size() == 2);
  CHECK(dev.examples[0].id == 1);
  CHECK(dev.examples[1].id == 2);
  CHECK(test.examples[0].id == 3);
  CHECK(test.examples[1].id == 4);
}

TEST_CASE("stratified split keeps tiny classes wholly in train") {
  Dataset ds;
  ds.dim = 1;
  ds.examples.push_back({1, "solo", 0, {0.0}});
  for (int i = 0; i < 20; ++i) ds.examples.push_back({10 + i, "big", i, {0.0}});
  auto [train, val] = stratified_train_val_split(ds, 0.05, 10);
  // "solo" fully in train; "big" gives ceil(0.05*20)=1 to val.
  int solo_train = 0, big_val = 0;
  for (const auto& e : train.examples) solo_train += e.label == "solo";
  for (const auto& e : val.examples) {
    CHECK(e.label == "big");
    ++big_val;
  }
  CHECK(solo_train == 1);
  CHECK(big_val == 1);
  CHECK(train.size() + val.size() == ds.size());
  // Disjoint by id.
  std::set<std::int64_t> ids;
  for (const auto& e : train.examples) ids.insert(e.id);
  for (const auto& e : val.examples) CHECK(ids.count(e.id) == 0);
}

TEST_CASE("registry groups classes by dev and test thresholds") {
  Dataset devset, testset;
  devset.dim = testset.dim = 1;
  std::int64_t id = 0;
  auto add = [&](Dataset& ds, const std::string& label, int n) {
    for (int i = 0; i < n; ++i) ds.examples.push_back({id++, label, 0, {0.0}});
  };
  add(devset, "common1", 150);
  add(testset, "common1", 30);
  add(devset, "rare1", 50);
  add(testset, "rare1", 10);
  add(devset, "rare_but_unseen", 50);
  add(testset, "rare_but_unseen", 2);  // fails the test-count threshold
  add(devset, "tiny", 5);
  add(testset, "tiny", 1);
  const ClassRegistry reg = build_class_registry(devset, testset, GroupThresholds{});
  REQUIRE(reg.size() == 3);  // common1, rare1, Other
  CHECK(reg.group_of(reg.index("common1")) == ClassGroup::Common);
  CHECK(reg.group_of(reg.index("rare1")) == ClassGroup::Rare);
  CHECK(reg.group_of(reg.index("Other")) == ClassGroup::Common);
  CHECK(reg.final_label("tiny") == "Other");
  CHECK(reg.final_label("rare_but_unseen") == "Other");
  CHECK(reg.final_label("rare1") == "rare1");
  const Dataset relabeled = apply_registry_labels(devset, reg);
  auto counts = relabeled.class_counts();
  CHECK(counts["Other"] == 55);
}

TEST_CASE("registry rejects the reserved label in input data") {
  Dataset devset, testset;
  devset.dim = testset.dim = 1;
  devset.examples.push_back({1, "Other", 0, {0.0}});
  CHECK_THROWS_AS(build_class_registry(devset, testset, GroupThresholds{}),
                  std::invalid_argument);
}

TEST_CASE("registry hash tracks membership and grouping") {
  Dataset devset, testset;
  devset.dim = testset.dim = 1;
  std::int64_t id = 0;
  for (int i = 0; i < 150; ++i) devset.examples.push_back({id++, "a", 0, {0.0}});
  for (int i = 0; i < 50; ++i) devset.examples.push_back({id++, "b", 0, {0.0}});
  for (int i = 0; i < 10; ++i) testset.examples.push_back({id++, "b", 0, {0.0}});
  const ClassRegistry r1 = build_class_registry(devset, testset, GroupThresholds{});
  const ClassRegistry r2 = build_class_registry(devset, testset, GroupThresholds{});
  CHECK(r1.hash() == r2.hash());
  devset.examples.push_back({id++, "b", 0, {0.0}});
  const ClassRegistry r3 = build_class_registry(devset, testset, GroupThresholds{});
  CHECK(r1.hash() != r3.hash());
}

TEST_CASE("episode sampling yields exact counts with disjoint support and query") {
  Dataset ds = tiny_dataset();
  Rng rng(3);
  EpisodeSpec spec{2, 1, 1};
  const Episode ep = sample_episode(ds, spec, ds.labels(), rng);
  CHECK(ep.support.size() == 2);
  CHECK(ep.query.size() == 2);
  std::set<std::int64_t> support_ids;
  for (const auto& [e, c] : ep.support) support_ids.insert(e.id);
  for (const auto& [e, c] : ep.query) CHECK(support_ids.count(e.id) == 0);
}

TEST_CASE("episode sampling fails when the pool is too small") {
  Dataset ds = tiny_dataset();  // 3 classes
  Rng rng(3);
  EpisodeSpec spec{5, 1, 1};
  CHECK_THROWS_AS(sample_episode(ds, spec, ds.labels(), rng), EpisodeInfeasible);
}

TEST_CASE("episode class selection is uniform over the pool") {
  Dataset ds;
  ds.dim = 1;
  std::int64_t id = 0;
  for (int c = 0; c < 6; ++c) {
    for (int i = 0; i < 4; ++i) {
      ds.examples.push_back({id++, "c" + std::to_string(c), 0, {0.0}});
    }
  }
  Rng rng(9);
  EpisodeSpec spec{2, 1, 1};
  std::map<std::string, int> seen;
  const int episodes = 6000;
  for (int e = 0; e < episodes; ++e) {
    const Episode ep = sample_episode(ds, spec, ds.labels(), rng);
    for (const auto& l : ep.class_labels) seen[l]++;
  }
  // Each class appears in 2/6 of episodes; 3 sigma of binomial(6000, 1/3).
  const double expect = episodes * 2.0 / 6.0;
  const double sigma = std::sqrt(episodes * (2.0 / 6.0) * (4.0 / 6.0));
  for (const auto& [label, n] : seen) CHECK(std::abs(n - expect) < 3.5 * sigma);
}

TEST_CASE("support set capping") {
  Dataset devset, testset;
  devset.dim = testset.dim = 1;
  std::int64_t id = 0;
  for (int i = 0; i < 120; ++i) devset.examples.push_back({id++, "big", i, {0.0}});
  for (int i = 0; i < 30; ++i) devset.examples.push_back({id++, "mid", i, {0.0}});
  for (int i = 0; i < 10; ++i) testset.examples.push_back({id++, "big", 0, {0.0}});
  for (int i = 0; i < 10; ++i) testset.examples.push_back({id++, "mid", 0, {0.0}});
  const ClassRegistry reg = build_class_registry(devset, testset, GroupThresholds{});

  Rng rng_all(1);
  const Dataset all = build_support_set(devset, reg, std::nullopt, rng_all);
  CHECK(all.size() == devset.size());

  Rng rng_cap(1);
  const Dataset capped = build_support_set(devset, reg, 5, rng_cap);
  auto counts = capped.class_counts();
  CHECK(counts["big"] == 5);
  CHECK(counts["mid"] == 5);
  Rng rng_cap2(1);
  const Dataset capped2 = build_support_set(devset, reg, 5, rng_cap2);
  for (std::size_t i = 0; i < capped.size(); ++i) {
    CHECK(capped.examples[i].id == capped2.examples[i].id);
  }

  Rng rng_big(1);
  const Dataset clamp = build_support_set(devset, reg, 500, rng_big);
  CHECK(clamp.size() == devset.size());
}

TEST_CASE("standard class pools are pairwise disjoint") {
  Dataset wide;
  wide.dim = 1;
  std::int64_t id = 0;
  for (int c = 0; c < 10; ++c) {
    for (int i = 0; i < 3; ++i) {
      wide.examples.push_back({id++, "c" + std::to_string(c), 0, {0.0}});
    }
  }
  Rng rng(5);
  const ClassPools pools = standard_class_pools(wide, 0.6, 0.2, rng);
  CHECK(pools.train.size() == 6);
  CHECK(pools.val.size() == 2);
  CHECK(pools.test.size() == 2);
  std::set<std::string> all;
  for (const auto& p : {pools.train, pools.val, pools.test}) {
    for (const auto& l : p) CHECK(all.insert(l).second);
  }
}

TEST_CASE("real-world pools cover every class exactly once and are disjoint") {
  Dataset devset, testset;
  devset.dim = testset.dim = 1;
  std::int64_t id = 0;
  for (int c = 0; c < 7; ++c) {
    const int n = 120 - 10 * c;
    for (int i = 0; i < n; ++i) {
      devset.examples.push_back({id++, "c" + std::to_string(c), 0, {0.0}});
    }
    for (int i = 0; i < 10; ++i) {
      testset.examples.push_back({id++, "c" + std::to_string(c), 0, {0.0}});
    }
  }
  const ClassRegistry reg = build_class_registry(devset, testset, GroupThresholds{});
  const auto [train, val] = realworld_class_pools(reg);
  CHECK(train.size() + val.size() == reg.size());
  std::set<std::string> seen;
  for (const auto& l : train) CHECK(seen.insert(l).second);
  for (const auto& l : val) CHECK(seen.insert(l).second);
}

TEST_CASE("feasible classes require k+q examples") {
  Dataset ds;
  ds.dim = 1;
  std::int64_t id = 0;
  for (int i = 0; i < 10; ++i) ds.examples.push_back({id++, "big", 0, {0.0}});
  for (int i = 0; i < 3; ++i) ds.examples.push_back({id++, "small", 0, {0.0}});
  EpisodeSpec spec{2, 2, 3};
  const auto feasible = feasible_classes(ds, ds.labels(), spec);
  REQUIRE(feasible.size() == 1);
  CHECK(feasible[0] == "big");
}
