#include "longtail/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>

#include <json.hpp>

#include "longtail/csl.hpp"
#include "longtail/fsl.hpp"
#include "longtail/serialize.hpp"

namespace fs = std::filesystem;

namespace longtail {

namespace {

struct OutputTracker {
  std::vector<fs::path> created;

  void note(const fs::path& p) { created.push_back(p); }
  void remove_all() {
    for (const auto& p : created) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }
};

struct LockFile {
  fs::path path;
  bool held = false;

  explicit LockFile(const fs::path& dir) : path(dir / ".lock") {
    if (fs::exists(path)) {
      throw std::runtime_error("output directory is locked by another process: " +
                               path.string());
    }
    std::ofstream out(path);
    out << "longtail\n";
    held = true;
  }
  ~LockFile() {
    if (held) {
      std::error_code ec;
      fs::remove(path, ec);
    }
  }
};

std::uint64_t run_seed(std::uint64_t master, const std::string& method, int run) {
  return Rng::stream(master, "run-" + method, static_cast<std::uint64_t>(run)).next_u64();
}

bool stage_in(const std::set<Stage>& stages, Stage s) { return stages.count(s) > 0; }

std::string group_name(ClassGroup g) {
  return g == ClassGroup::Common ? "common" : "rare";
}

void write_registry_csv(const ClassRegistry& registry, const fs::path& path) {
  std::ofstream out(path);
  out << "label,dev_count,test_count,group\n";
  for (const auto& e : registry.classes) {
    out << e.label << ',' << e.dev_count << ',' << e.test_count << ','
        << group_name(e.group) << '\n';
  }
}

struct MemberModels {
  bool is_csl = false;
  std::vector<CslModel> csl_runs;
  std::vector<MetaModel> fsl_runs;
  // one all-way predictor per run, shared support set
  std::vector<std::shared_ptr<FslAllWayPredictor>> fsl_predictors;

  Predictor predictor(int run) const {
    if (is_csl) {
      const CslModel* model = &csl_runs[static_cast<std::size_t>(run)];
      return [model](const Vector& x) { return predict_csl(*model, x); };
    }
    auto pred = fsl_predictors[static_cast<std::size_t>(run)];
    return [pred](const Vector& x) { return pred->predict(x); };
  }
};

nlohmann::json report_json(const MetricReport& r) {
  nlohmann::json j;
  auto put = [&](const char* key, const std::optional<MetricValue>& mv) {
    if (mv) j[key] = {{"value", mv->value}, {"ci_halfwidth", mv->ci_halfwidth}};
  };
  put("top1_accuracy", r.top1);
  put("balanced_accuracy_all", r.ba_all);
  put("balanced_accuracy_common", r.ba_common);
  put("balanced_accuracy_rare", r.ba_rare);
  j["E"] = r.runs;
  return j;
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& config, const std::string& out_dir) {
  return run_experiment(config, out_dir,
                        {Stage::Synth, Stage::Split, Stage::TrainCsl, Stage::MetaTrain,
                         Stage::EvalRealworld, Stage::Ensemble, Stage::Report});
}

RunReport run_experiment(const ExperimentConfig& config, const std::string& out_dir,
                         const std::set<Stage>& stages) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  fs::create_directories(fs::path(out_dir) / "models");
  fs::create_directories(fs::path(out_dir) / "plots");
  LockFile lock{fs::path(out_dir)};
  OutputTracker outputs;

  RunReport report;
  report.config_hash = config.hash();
  report.master_seed = config.seed;

  try {
    // --- data ---
    Dataset raw;
    if (config.data_source == "synthetic") {
      raw = generate_synthetic(config.synthetic, config.seed);
    } else {
      raw = ingest_csv(config.csv_path);
      raw.validate();
    }
    if (stage_in(stages, Stage::Synth) && config.data_source == "synthetic") {
      const fs::path p = fs::path(out_dir) / "dataset.csv";
      outputs.note(p);
      export_csv(raw, p.string());
    }

    // --- splits and registry ---
    auto [dev, test] = temporal_split(raw, config.dev_fraction);
    const ClassRegistry registry = build_class_registry(dev, test, config.thresholds);
    const Dataset dev_r = apply_registry_labels(dev, registry);
    const Dataset test_r = apply_registry_labels(test, registry);
    auto [train, val] = stratified_train_val_split(dev_r, config.val_fraction,
                                                   config.min_train_per_class);
    Rng support_rng = Rng::stream(config.seed, "support", 0);
    const Dataset support_all =
        build_support_set(dev_r, registry, config.support_shots, support_rng);
    for (const auto& e : registry.classes) report.class_labels.push_back(e.label);

    if (stage_in(stages, Stage::Split)) {
      for (const auto& [name, ds] :
           std::vector<std::pair<std::string, const Dataset*>>{
               {"dev", &dev_r}, {"test", &test_r}, {"train", &train}, {"val", &val}}) {
        const fs::path p = fs::path(out_dir) / (name + ".csv");
        outputs.note(p);
        export_csv(*ds, p.string());
      }
      const fs::path p = fs::path(out_dir) / "registry.csv";
      outputs.note(p);
      write_registry_csv(registry, p);
    }

    const bool need_models =
        stage_in(stages, Stage::TrainCsl) || stage_in(stages, Stage::MetaTrain) ||
        stage_in(stages, Stage::EvalRealworld) || stage_in(stages, Stage::Ensemble) ||
        stage_in(stages, Stage::EvalStandard) || stage_in(stages, Stage::Report);

    std::map<std::string, MemberModels> models;
    const auto [rw_train_pool, rw_val_pool] = realworld_class_pools(registry);

    if (need_models) {
      for (const auto& spec : config.csl_methods) {
        MemberModels& mm = models[spec.name];
        mm.is_csl = true;
        for (int r = 0; r < config.eval_runs; ++r) {
          const std::uint64_t seed = run_seed(config.seed, spec.name, r);
          report.run_seeds[spec.name].push_back(seed);
          const std::uint64_t section = config.section_hash(spec.name) ^ seed;
          const fs::path path = fs::path(out_dir) / "models" /
                                ("csl_" + spec.name + "_run" + std::to_string(r) + ".txt");
          if (fs::exists(path) && read_model_config_hash(path.string()) == section) {
            mm.csl_runs.push_back(load_csl_model(path.string(), registry));
          } else {
            CslModel model = train_csl(train, val, registry, spec.config, seed);
            save_csl_model(model, path.string(), section);
            mm.csl_runs.push_back(std::move(model));
          }
        }
      }
      for (const auto& spec : config.fsl_methods) {
        MemberModels& mm = models[spec.name];
        mm.is_csl = false;
        // FslAllWayPredictor keeps a reference to its model.
        mm.fsl_runs.reserve(static_cast<std::size_t>(config.eval_runs));
        for (int r = 0; r < config.eval_runs; ++r) {
          const std::uint64_t seed = run_seed(config.seed, spec.name, r);
          report.run_seeds[spec.name].push_back(seed);
          const std::uint64_t section = config.section_hash(spec.name) ^ seed;
          const fs::path path = fs::path(out_dir) / "models" /
                                ("fsl_" + spec.name + "_run" + std::to_string(r) + ".txt");
          MetaModel model;
          if (fs::exists(path) && read_model_config_hash(path.string()) == section) {
            model = load_meta_model(path.string(), registry.hash());
            model.config = spec.config;
          } else if (spec.episodic) {
            model = meta_train(spec.config, dev_r, rw_train_pool, rw_val_pool, seed);
            save_meta_model(model, registry.hash(), path.string(), section);
          } else {
            model = batch_train(spec.config, train, val, seed);
            save_meta_model(model, registry.hash(), path.string(), section);
          }
          mm.fsl_runs.push_back(std::move(model));
          mm.fsl_predictors.push_back(std::make_shared<FslAllWayPredictor>(
              mm.fsl_runs.back(), support_all, registry));
        }
      }
    }

    // --- real-world evaluation ---
    if (stage_in(stages, Stage::EvalRealworld) || stage_in(stages, Stage::Report)) {
      for (const auto& [name, mm] : models) {
        std::vector<MetricReport> runs;
        for (int r = 0; r < config.eval_runs; ++r) {
          runs.push_back(
              run_realworld_eval(mm.predictor(r), test_r, registry, config.threads));
        }
        report.realworld[name] = aggregate_reports(runs);
      }
    }

    // --- standard-protocol evaluation ---
    if (stage_in(stages, Stage::EvalStandard)) {
      // Standard protocol uses the raw labels and pairwise-disjoint class
      // pools drawn from episode-feasible classes.
      const EpisodeSpec eval_spec = config.standard_episode;
      const std::vector<std::string> feasible =
          feasible_classes(raw, raw.labels(), eval_spec);
      Rng pool_rng = Rng::stream(config.seed, "standard-pools", 0);
      Dataset feasible_ds;
      feasible_ds.dim = raw.dim;
      {
        std::set<std::string> keep(feasible.begin(), feasible.end());
        for (const auto& ex : raw.examples) {
          if (keep.count(ex.label)) feasible_ds.examples.push_back(ex);
        }
      }
      const ClassPools pools = standard_class_pools(feasible_ds, 0.6, 0.2, pool_rng);
      for (const auto& spec : config.fsl_methods) {
        const std::uint64_t seed = run_seed(config.seed, spec.name + "/std", 0);
        MetaModel model;
        const std::uint64_t section = config.section_hash(spec.name) ^ seed ^ 0x5745ULL;
        const fs::path path =
            fs::path(out_dir) / "models" / ("fsl_" + spec.name + "_std.txt");
        if (fs::exists(path) && read_model_config_hash(path.string()) == section) {
          model = load_meta_model(path.string(), 0);
          model.config = spec.config;
        } else if (spec.episodic) {
          model = meta_train(spec.config, feasible_ds, pools.train, pools.val, seed);
          save_meta_model(model, 0, path.string(), section);
        } else {
          Dataset pool_train;
          pool_train.dim = feasible_ds.dim;
          std::set<std::string> keep(pools.train.begin(), pools.train.end());
          for (const auto& ex : feasible_ds.examples) {
            if (keep.count(ex.label)) pool_train.examples.push_back(ex);
          }
          Dataset empty_val;
          empty_val.dim = feasible_ds.dim;
          model = batch_train(spec.config, pool_train, empty_val, seed);
          save_meta_model(model, 0, path.string(), section);
        }
        StandardEvalSpec std_spec{eval_spec, config.standard_episodes};
        report.standard[spec.name] = run_standard_eval(
            [&model](const Episode& ep) { return fsl_episode_predict(model, ep); },
            feasible_ds, pools.test, std_spec, config.seed, config.threads);
      }
    }

    // --- ensembles ---
    if (stage_in(stages, Stage::Ensemble) || stage_in(stages, Stage::Report)) {
      for (const auto& spec : config.ensembles) {
        std::vector<MetricReport> runs;
        for (int r = 0; r < config.eval_runs; ++r) {
          std::vector<Predictor> member_preds;
          std::vector<bool> member_is_csl;
          for (const auto& member : spec.members) {
            member_preds.push_back(models.at(member).predictor(r));
            member_is_csl.push_back(models.at(member).is_csl);
          }
          if (spec.routing) {
            const bool has_csl =
                std::count(member_is_csl.begin(), member_is_csl.end(), true) > 0;
            const bool has_fsl =
                std::count(member_is_csl.begin(), member_is_csl.end(), false) > 0;
            if (!has_csl || !has_fsl) {
              throw std::invalid_argument("ensemble " + spec.name +
                                          ": routing needs both CSL and FSL members");
            }
          }
          LabelPredictor pred = [&member_preds, &member_is_csl, &spec,
                                 &registry](const Vector& x) {
            std::vector<Vector> logits;
            std::vector<Vector> csl_logits, fsl_logits;
            for (std::size_t m = 0; m < member_preds.size(); ++m) {
              ModelOutput out = member_preds[m](x);
              (member_is_csl[m] ? csl_logits : fsl_logits).push_back(out.logits);
              logits.push_back(std::move(out.logits));
            }
            const ModelOutput ens = ModelOutput::from_logits(ensemble_logits(logits));
            if (!spec.routing) return ens.argmax();
            const ModelOutput csl_sub =
                ModelOutput::from_logits(ensemble_logits(csl_logits));
            const ModelOutput fsl_sub =
                ModelOutput::from_logits(ensemble_logits(fsl_logits));
            return route_prediction(ens, csl_sub, fsl_sub, registry).final_label;
          };
          runs.push_back(run_realworld_eval(pred, test_r, registry, config.threads));
        }
        report.ensembles[spec.name] = aggregate_reports(runs);
      }
    }

    // --- files ---
    const bool write_report = stage_in(stages, Stage::Report) ||
                              !report.realworld.empty() || !report.standard.empty() ||
                              !report.ensembles.empty();
    if (write_report) {
      const fs::path metrics_path = fs::path(out_dir) / "metrics.csv";
      outputs.note(metrics_path);
      {
        std::ofstream out(metrics_path);
        out << "method,metric,group,value,ci_halfwidth,E\n";
        for (const auto& [name, r] : report.realworld) {
          for (const auto& row : r.csv_rows(name + ",")) out << row << '\n';
        }
        for (const auto& [name, r] : report.standard) {
          char buf[160];
          std::snprintf(buf, sizeof(buf), "%s,standard_episode_accuracy,all,%.12g,%.12g,%d",
                        name.c_str(), r.top1->value, r.top1->ci_halfwidth, r.runs);
          out << buf << '\n';
        }
        for (const auto& [name, r] : report.ensembles) {
          for (const auto& row : r.csv_rows(name + ",")) out << row << '\n';
        }
        if (!out) throw std::runtime_error("failed writing " + metrics_path.string());
      }

      const auto t1 = std::chrono::steady_clock::now();
      report.wall_clock_seconds = std::chrono::duration<double>(t1 - t0).count();

      nlohmann::json j;
      j["config_hash"] = std::to_string(report.config_hash);
      j["master_seed"] = report.master_seed;
      j["wall_clock_seconds"] = report.wall_clock_seconds;
      j["classes"] = report.class_labels;
      for (const auto& [name, seeds] : report.run_seeds) {
        for (std::uint64_t s : seeds) j["run_seeds"][name].push_back(std::to_string(s));
      }
      for (const auto& [name, r] : report.realworld) j["realworld"][name] = report_json(r);
      for (const auto& [name, r] : report.standard) j["standard"][name] = report_json(r);
      for (const auto& [name, r] : report.ensembles) j["ensembles"][name] = report_json(r);
      const fs::path json_path = fs::path(out_dir) / "report.json";
      outputs.note(json_path);
      std::ofstream(json_path) << j.dump(2) << '\n';

      if (!report.realworld.empty() || !report.ensembles.empty()) {
        const fs::path bars = fs::path(out_dir) / "plots" / "grouped_bars.csv";
        outputs.note(bars);
        std::ofstream bars_out(bars);
        for (const auto& row : emit_plot_data(report, "grouped-bars")) {
          bars_out << row << '\n';
        }
        const fs::path recalls = fs::path(out_dir) / "plots" / "per_class_recall.csv";
        outputs.note(recalls);
        std::ofstream recalls_out(recalls);
        for (const auto& row : emit_plot_data(report, "per-class-recall")) {
          recalls_out << row << '\n';
        }
      }
    }
  } catch (...) {
    outputs.remove_all();
    throw;
  }

  const auto t1 = std::chrono::steady_clock::now();
  report.wall_clock_seconds = std::chrono::duration<double>(t1 - t0).count();
  return report;
}

std::vector<std::string> emit_plot_data(const RunReport& report,
                                        const std::string& kind) {
  std::vector<std::string> rows;
  rows.push_back("series,group,value,ci_halfwidth");
  auto all_reports = [&] {
    std::vector<std::pair<std::string, const MetricReport*>> out;
    for (const auto& [name, r] : report.realworld) out.emplace_back(name, &r);
    for (const auto& [name, r] : report.ensembles) out.emplace_back(name, &r);
    return out;
  }();
  if (kind == "grouped-bars") {
    for (const auto& [name, r] : all_reports) {
      const std::vector<std::pair<std::string, const std::optional<MetricValue>*>>
          groups{{"common", &r->ba_common}, {"rare", &r->ba_rare}, {"all", &r->ba_all}};
      for (const auto& [group, mv] : groups) {
        if (!*mv) {
          throw std::invalid_argument("emit_plot_data: missing balanced accuracy (" +
                                      group + ") for " + name);
        }
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%s,%.12g,%.12g", name.c_str(), group.c_str(),
                      (*mv)->value, (*mv)->ci_halfwidth);
        rows.push_back(buf);
      }
    }
  } else if (kind == "per-class-recall") {
    for (const auto& [name, r] : all_reports) {
      if (r->per_class_recall.empty()) {
        throw std::invalid_argument("emit_plot_data: missing per-class recalls for " +
                                    name);
      }
      for (std::size_t c = 0; c < r->per_class_recall.size(); ++c) {
        if (std::isnan(r->per_class_recall[c])) continue;
        char buf[200];
        std::snprintf(buf, sizeof(buf), "%s,%s,%.12g,0", name.c_str(),
                      report.class_labels[c].c_str(), r->per_class_recall[c]);
        rows.push_back(buf);
      }
    }
  } else {
    throw std::invalid_argument("emit_plot_data: unknown kind " + kind);
  }
  return rows;
}

}  // namespace longtail
