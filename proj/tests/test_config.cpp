#include <doctest.h>

#include "longtail/config.hpp"

using namespace longtail;

TEST_CASE("defaults survive an empty config") {
  const ExperimentConfig cfg = parse_config_text("");
  CHECK(cfg.seed == 42);
  CHECK(cfg.data_source == "synthetic");
  CHECK(cfg.dev_fraction == doctest::Approx(0.75));
  CHECK(cfg.eval_runs == 2);
  CHECK(!cfg.standard_eval_enabled);
  CHECK(!cfg.support_shots.has_value());
  CHECK(cfg.csl_methods.empty());
  CHECK(cfg.fsl_methods.empty());
}

TEST_CASE("key parsing: comments, blanks, and whitespace") {
  const std::string text =
      "# a comment\n"
      "\n"
      "  seed=7   # trailing comment\n"
      "threads=3\r\n"
      "data.synthetic.classes=12\n";
  const ExperimentConfig cfg = parse_config_text(text);
  CHECK(cfg.seed == 7);
  CHECK(cfg.threads == 3);
  CHECK(cfg.synthetic.classes == 12);
}

TEST_CASE("unknown keys are rejected") {
  CHECK_THROWS_AS(parse_config_text("data.synthetic.classs=10\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("nonsense=1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("csl.base.stepz=10\n"), ConfigError);
}

TEST_CASE("malformed lines and duplicate keys are rejected") {
  CHECK_THROWS_AS(parse_config_text("justakey\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("=value\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("seed=1\nseed=2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("seed=abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("eval.standard.enabled=maybe\n"), ConfigError);
}

TEST_CASE("csl method sections") {
  const std::string text =
      "csl.fancy.techniques=focal+ifw\n"
      "csl.fancy.gamma=1.5\n"
      "csl.fancy.steps=123\n"
      "csl.fancy.hidden=32x16\n"
      "csl.fancy.optimizer=sgd\n"
      "csl.plain.techniques=none\n";
  const ExperimentConfig cfg = parse_config_text(text);
  REQUIRE(cfg.csl_methods.size() == 2);
  const CslMethodSpec& fancy = cfg.csl_methods[0];
  CHECK(fancy.name == "fancy");
  CHECK(fancy.config.has(Technique::FocalLoss));
  CHECK(fancy.config.has(Technique::Ifw));
  CHECK(!fancy.config.has(Technique::Upsampling));
  CHECK(fancy.config.gamma == doctest::Approx(1.5));
  CHECK(fancy.config.steps == 123);
  CHECK(fancy.config.hidden == std::vector<std::size_t>{32, 16});
  CHECK(fancy.config.optimizer == OptKind::Sgd);
  CHECK(cfg.csl_methods[1].config.techniques.empty());

  CHECK_THROWS_AS(parse_config_text("csl.x.techniques=warp\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("csl.x.optimizer=rmsprop\n"), ConfigError);
}

TEST_CASE("fsl method sections infer the method from the section name") {
  const std::string text =
      "fsl.proto.n_way=7\n"
      "fsl.proto.k_shot=2\n"
      "fsl.proto.steps=50\n"
      "fsl.mine.method=knn\n"
      "fsl.mine.embed_dim=16\n";
  const ExperimentConfig cfg = parse_config_text(text);
  REQUIRE(cfg.fsl_methods.size() == 2);
  CHECK(cfg.fsl_methods[0].config.method == FslMethod::Proto);
  CHECK(cfg.fsl_methods[0].config.train_episode.n_way == 7);
  CHECK(cfg.fsl_methods[0].episodic);
  CHECK(cfg.fsl_methods[1].config.method == FslMethod::Knn);
  CHECK(cfg.fsl_methods[1].config.embed_dim == 16);
  CHECK(!cfg.fsl_methods[1].episodic);

  // A section whose name is not a method needs an explicit method key.
  CHECK_THROWS_AS(parse_config_text("fsl.custom.steps=10\n"), ConfigError);
}

TEST_CASE("ensemble sections validate their members") {
  const std::string text =
      "csl.base.techniques=none\n"
      "fsl.knn.steps=10\n"
      "ensemble.duo.members=base+knn\n"
      "ensemble.duo.routing=true\n";
  const ExperimentConfig cfg = parse_config_text(text);
  REQUIRE(cfg.ensembles.size() == 1);
  CHECK(cfg.ensembles[0].members == std::vector<std::string>{"base", "knn"});
  CHECK(cfg.ensembles[0].routing);

  CHECK_THROWS_AS(parse_config_text("ensemble.e.members=ghost\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("ensemble.e.routing=true\n"), ConfigError);
}

TEST_CASE("support shots accept ALL or a positive count") {
  CHECK(!parse_config_text("support.shots_per_class=ALL\n").support_shots.has_value());
  CHECK(parse_config_text("support.shots_per_class=25\n").support_shots == 25);
  CHECK_THROWS_AS(parse_config_text("support.shots_per_class=0\n"), ConfigError);
}

TEST_CASE("config hash tracks the raw bytes") {
  const ExperimentConfig a = parse_config_text("seed=1\n");
  const ExperimentConfig b = parse_config_text("seed=1\n");
  const ExperimentConfig c = parse_config_text("seed=2\n");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
}

TEST_CASE("section hashes isolate methods from each other") {
  const std::string base =
      "seed=5\n"
      "data.synthetic.classes=10\n"
      "csl.a.steps=100\n"
      "csl.b.steps=200\n";
  const ExperimentConfig cfg = parse_config_text(base);
  // Changing method b leaves a's section hash alone.
  const ExperimentConfig changed = parse_config_text(
      "seed=5\n"
      "data.synthetic.classes=10\n"
      "csl.a.steps=100\n"
      "csl.b.steps=999\n");
  CHECK(cfg.section_hash("a") == changed.section_hash("a"));
  CHECK(cfg.section_hash("b") != changed.section_hash("b"));

  // Changing shared data keys invalidates every section.
  const ExperimentConfig data_changed = parse_config_text(
      "seed=5\n"
      "data.synthetic.classes=11\n"
      "csl.a.steps=100\n"
      "csl.b.steps=200\n");
  CHECK(cfg.section_hash("a") != data_changed.section_hash("a"));

  // Distinct methods never share a hash even with identical settings.
  const ExperimentConfig twin = parse_config_text(
      "csl.a.steps=100\n"
      "csl.b.steps=100\n");
  CHECK(twin.section_hash("a") != twin.section_hash("b"));
}

TEST_CASE("csv source requires a path") {
  CHECK_THROWS_AS(parse_config_text("data.source=csv\n"), ConfigError);
  const ExperimentConfig cfg =
      parse_config_text("data.source=csv\ndata.csv_path=/tmp/x.csv\n");
  CHECK(cfg.data_source == "csv");
  CHECK(cfg.csv_path == "/tmp/x.csv");
  CHECK_THROWS_AS(parse_config_text("data.source=parquet\n"), ConfigError);
}
