// Copyright 2026 The sidlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// sidlab command line: synth-data | train <role> | eval <kind>.
//
// Exit codes: 0 success, 2 config validation, 3 missing prerequisite,
// 4 I/O, 5 oracle budget exhausted.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sidlab/config.hpp"

namespace sidlab {
namespace {

struct RunPaths {
  std::string out_dir;

  std::string corpus_dir() const { return out_dir + "/corpus"; }
  std::string corpus_manifest() const { return corpus_dir() + "/manifest.tsv"; }
  std::string checkpoint(const std::string& role) const {
    return out_dir + "/" + role + (role.rfind("generator", 0) == 0 ? ".gen"
                                                                   : ".ckpt");
  }
  std::string records(const std::string& label) const {
    return out_dir + "/" + label + ".records";
  }
  std::string table(const std::string& label) const {
    return out_dir + "/" + label + ".txt";
  }
  std::string resolved_config() const { return out_dir + "/config_resolved.cfg"; }
  std::string manifest(const std::string& label) const {
    return out_dir + "/manifest_" + label + ".json";
  }
};

std::int64_t unix_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void spew_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << bytes;
  if (!out) throw IoError("short write to " + path);
}

void require_artifact(const std::string& path, const std::string& hint) {
  if (!std::filesystem::exists(path))
    throw MissingPrerequisiteError("missing " + path + "; run `sidlab " + hint +
                                   "` first");
}

// Tracks everything a command produces, then drops the manifest last.
class RunLog {
 public:
  RunLog(std::string command, std::string label, const ExperimentConfig& cfg,
         const RunPaths& paths, std::size_t threads)
      : command_(std::move(command)), label_(std::move(label)), paths_(paths) {
    manifest_.command = command_;
    manifest_.seeds = cfg.seeds;
    manifest_.started_unix = unix_now();
    manifest_.resolved_config =
        parse_config_text(render_config(cfg), "resolved");
    manifest_.resolved_config["run.threads"] = std::to_string(threads);
    std::error_code ec;
    std::filesystem::create_directories(paths_.out_dir, ec);
    if (ec) throw IoError("cannot create " + paths_.out_dir);
    spew_file(paths_.resolved_config(), render_config(cfg));
    add_artifact(paths_.resolved_config());
  }

  // Absolute, so the manifest resolves from any working directory.
  void add_artifact(const std::string& path) {
    manifest_.artifacts.push_back(std::filesystem::absolute(path).string());
  }

  void add_checkpoint(const std::string& path) {
    add_artifact(path);
    hash_input(path);
  }

  void hash_input(const std::string& path) {
    manifest_.checkpoint_hashes[std::filesystem::path(path).filename().string()] =
        file_hash_hex(path);
  }

  void finish() {
    manifest_.finished_unix = unix_now();
    write_manifest(paths_.manifest(label_), manifest_);
  }

 private:
  std::string command_;
  std::string label_;
  RunPaths paths_;
  RunManifest manifest_;
};

Dataset synth_corpus(const ExperimentConfig& cfg) {
  const MelExtractor ex(cfg.dataset.sample_rate);
  Dataset all;
  for (const auto& w : synth_dataset(cfg.dataset)) {
    LabeledMel e;
    e.mel = ex.extract(w);
    e.speaker = w.speaker;
    e.content_id = w.content_id;
    all.push_back(std::move(e));
  }
  return all;
}

struct SplitCorpus {
  Dataset train;
  Dataset val;
};

SplitCorpus load_split(const RunPaths& paths, const ExperimentConfig& cfg) {
  require_artifact(paths.corpus_manifest(), "synth-data");
  Dataset all = load_corpus(paths.corpus_dir());
  if (count_speakers(all) != cfg.dataset.n_speakers)
    throw std::invalid_argument(
        "corpus at " + paths.corpus_dir() + " has " +
        std::to_string(count_speakers(all)) + " speakers, config expects " +
        std::to_string(cfg.dataset.n_speakers));
  SplitCorpus sc;
  split_dataset(std::move(all), cfg.dataset.n_speakers, cfg.val_per_speaker,
                &sc.train, &sc.val);
  return sc;
}

SpeakerClassifier train_classifier_role(const SplitCorpus& sc,
                                        const ClassifierConfig& arch,
                                        const ExperimentConfig& cfg,
                                        TrainStats* stats) {
  ClassifierConfig cc = arch;
  cc.n_speakers = cfg.dataset.n_speakers;
  cc.n_mels = sc.train[0].mel.n_mels();
  SpeakerClassifier clf(cc);
  *stats = clf.train(sc.train, sc.val, cfg.classifier_train);
  return clf;
}

int cmd_synth_data(const ExperimentConfig& cfg, const RunPaths& paths,
                   std::size_t threads) {
  RunLog log("synth-data", "synth_data", cfg, paths, threads);
  const Dataset all = synth_corpus(cfg);
  save_corpus(paths.corpus_dir(), all, cfg.dataset.seed);
  log.add_artifact(paths.corpus_manifest());
  log.finish();
  std::printf("corpus: %zu utterances, %zu speakers -> %s\n", all.size(),
              cfg.dataset.n_speakers, paths.corpus_dir().c_str());
  return 0;
}

int cmd_train(const std::string& role, const std::string& adv_classifier,
              const ExperimentConfig& cfg, const RunPaths& paths,
              std::size_t threads) {
  RunLog log("train " + role, "train_" + role, cfg, paths, threads);

  if (role == "blackbox" || role == "whitebox") {
    const SplitCorpus sc = load_split(paths, cfg);
    TrainStats st;
    const SpeakerClassifier clf = train_classifier_role(
        sc, role == "blackbox" ? cfg.blackbox : cfg.whitebox, cfg, &st);
    clf.save(paths.checkpoint(role));
    char line[160];
    std::snprintf(line, sizeof(line),
                  "{\"role\":\"%s\",\"train_accuracy\":%.9g,"
                  "\"val_accuracy\":%.9g}\n",
                  role.c_str(), st.train_accuracy, st.val_accuracy);
    spew_file(paths.records("train_" + role), line);
    log.add_checkpoint(paths.checkpoint(role));
    log.add_artifact(paths.records("train_" + role));
    log.finish();
    std::printf("%s", line);
    return 0;
  }

  if (role == "substitute") {
    require_artifact(paths.checkpoint("blackbox"), "train blackbox");
    const SplitCorpus sc = load_split(paths, cfg);
    const SpeakerClassifier teacher =
        SpeakerClassifier::load(paths.checkpoint("blackbox"));
    BlackBoxOracle oracle(teacher,
                          cfg.distill_query_budget == 0
                              ? std::nullopt
                              : std::optional<std::uint64_t>(
                                    cfg.distill_query_budget));
    DistillConfig dc = cfg.distill;
    dc.arch = cfg.substitute_arch;
    DistillHooks hooks;
    hooks.exhaustion_checkpoint = paths.checkpoint("substitute");
    hooks.agreement_probe = [&teacher, &sc](const SpeakerClassifier& s) {
      BlackBoxOracle probe(teacher);
      return run_agreement_eval(s, probe, sc.val).agreement;
    };
    const DistillResult res =
        train_substitute(oracle, unlabeled_mels(sc.train), dc, hooks);
    res.model.save(paths.checkpoint("substitute"));

    std::string records;
    for (const auto& es : res.log) records += distill_record_line(es) + "\n";
    BlackBoxOracle final_probe(teacher);
    const AgreementTable agree =
        run_agreement_eval(res.model, final_probe, sc.val);
    records += agreement_record_line(agree) + "\n";
    spew_file(paths.records("train_substitute"), records);
    log.add_checkpoint(paths.checkpoint("substitute"));
    log.hash_input(paths.checkpoint("blackbox"));
    log.add_artifact(paths.records("train_substitute"));
    log.finish();
    std::printf("%s", agreement_record_line(agree).c_str());
    std::printf("\n");
    return 0;
  }

  if (role == "generator") {
    const SplitCorpus sc = load_split(paths, cfg);
    GenConfig gc = cfg.generator;
    gc.n_speakers = cfg.dataset.n_speakers;
    gc.frames = sc.train[0].mel.frames();
    gc.n_mels = sc.train[0].mel.n_mels();
    CondGenerator g(gc);
    const auto stats = g.train_recon(
        make_pairs(sc.train, cfg.dataset.seed, gc.d_content),
        cfg.generator_recon);
    g.save(paths.checkpoint("generator"));
    std::string records;
    for (const auto& es : stats) records += epoch_record_line(es) + "\n";
    spew_file(paths.records("train_generator"), records);
    log.add_checkpoint(paths.checkpoint("generator"));
    log.add_artifact(paths.records("train_generator"));
    log.finish();
    std::printf("generator: recon_l1=%.4f after %zu epochs\n",
                stats.back().recon_l1, stats.size());
    return 0;
  }

  // generator-adv: switching-loss phase on top of the pretrained base.
  require_artifact(paths.checkpoint("generator"), "train generator");
  require_artifact(paths.checkpoint(adv_classifier), "train " + adv_classifier);
  const SplitCorpus sc = load_split(paths, cfg);
  CondGenerator g = CondGenerator::load(paths.checkpoint("generator"));
  const SpeakerClassifier clf =
      SpeakerClassifier::load(paths.checkpoint(adv_classifier));
  const auto stats = g.joint_train_adv(
      clf, make_pairs(sc.train, cfg.dataset.seed, g.d_content),
      cfg.perturbation, cfg.generator_joint);
  g.save(paths.checkpoint("generator_adv"));
  std::string records;
  for (const auto& es : stats) records += epoch_record_line(es) + "\n";
  spew_file(paths.records("train_generator_adv"), records);
  log.add_checkpoint(paths.checkpoint("generator_adv"));
  log.hash_input(paths.checkpoint("generator"));
  log.hash_input(paths.checkpoint(adv_classifier));
  log.add_artifact(paths.records("train_generator_adv"));
  log.finish();
  std::printf("generator_adv: adv_branch_rate=%.4f attack_success=%.4f\n",
              stats.back().adv_branch_rate, stats.back().attack_success_rate);
  return 0;
}

int cmd_eval(const std::string& kind, const ExperimentConfig& cfg,
             const RunPaths& paths, std::size_t threads) {
  RunLog log("eval " + kind, "eval_" + kind, cfg, paths, threads);

  if (kind == "attack") {
    require_artifact(paths.checkpoint("generator_adv"),
                     "train generator-adv");
    require_artifact(paths.checkpoint("blackbox"), "train blackbox");
    const CondGenerator g =
        CondGenerator::load(paths.checkpoint("generator_adv"));
    const SpeakerClassifier clf =
        SpeakerClassifier::load(paths.checkpoint("blackbox"));
    const AttackReport rep = eval_attack(
        g, clf,
        make_probe_grid(g.n_speakers, cfg.eval_contents, cfg.dataset.seed,
                        g.d_content));
    std::string records =
        report_record_line("attack", cfg.seeds[0], rep) + "\n";
    for (const auto& ps : rep.per_sample)
      records += per_sample_record_line(ps) + "\n";
    spew_file(paths.records("attack"), records);
    spew_file(paths.table("attack"), render_attack_report(rep));
    log.add_artifact(paths.records("attack"));
    log.add_artifact(paths.table("attack"));
    log.hash_input(paths.checkpoint("generator_adv"));
    log.hash_input(paths.checkpoint("blackbox"));
    log.finish();
    std::printf("%s", render_attack_report(rep).c_str());
    return 0;
  }

  if (kind == "agreement") {
    require_artifact(paths.checkpoint("substitute"), "train substitute");
    require_artifact(paths.checkpoint("blackbox"), "train blackbox");
    const SplitCorpus sc = load_split(paths, cfg);
    const SpeakerClassifier sub =
        SpeakerClassifier::load(paths.checkpoint("substitute"));
    const SpeakerClassifier teacher =
        SpeakerClassifier::load(paths.checkpoint("blackbox"));
    BlackBoxOracle oracle(teacher);
    const AgreementTable t = run_agreement_eval(sub, oracle, sc.val);
    spew_file(paths.records("agreement"), agreement_record_line(t) + "\n");
    spew_file(paths.table("agreement"), render_agreement(t));
    log.add_artifact(paths.records("agreement"));
    log.add_artifact(paths.table("agreement"));
    log.hash_input(paths.checkpoint("substitute"));
    log.hash_input(paths.checkpoint("blackbox"));
    log.finish();
    std::printf("%s", render_agreement(t).c_str());
    return 0;
  }

  if (kind == "ablation") {
    const AblationTable t = run_ablation(cfg);
    std::string records;
    for (const auto& row : t.rows) records += ablation_record_line(row) + "\n";
    spew_file(paths.records("ablation"), records);
    spew_file(paths.table("ablation"), render_ablation(t));
    log.add_artifact(paths.records("ablation"));
    log.add_artifact(paths.table("ablation"));
    log.finish();
    std::printf("%s", render_ablation(t).c_str());
    return 0;
  }

  const ComparisonTable t = run_method_comparison(cfg);
  std::string records;
  for (const auto& m : t.methods) records += comparison_record_line(m) + "\n";
  for (const auto& m : t.methods)
    for (std::size_t s = 0; s < m.reports.size(); ++s)
      records +=
          report_record_line(m.method, cfg.seeds[s], m.reports[s]) + "\n";
  spew_file(paths.records("compare"), records);
  spew_file(paths.table("compare"), render_comparison(t));
  log.add_artifact(paths.records("compare"));
  log.add_artifact(paths.table("compare"));
  log.finish();
  std::printf("%s", render_comparison(t).c_str());
  return 0;
}

int dispatch(int argc, char** argv) {
  CLI::App app{
      "sidlab: desk-scale laboratory for timbre-preserving adversarial "
      "speech generation"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "config file (key = value lines)")
      ->envname("SIDLAB_CONFIG");
  std::string out_dir_flag;
  app.add_option("--out-dir", out_dir_flag, "run directory")
      ->envname("SIDLAB_OUT_DIR");
  std::uint64_t seed_flag = 0;
  CLI::Option* seed_opt =
      app.add_option("--seed", seed_flag, "replace the run seed list")
          ->envname("SIDLAB_SEED");
  std::size_t threads = 1;
  app.add_option("--threads", threads, "worker cap (default 1)")
      ->envname("SIDLAB_THREADS");

  CLI::App* synth = app.add_subcommand("synth-data", "synthesize the corpus");
  CLI::App* train = app.add_subcommand("train", "train one pipeline stage");
  std::string role;
  train->add_option("role", role, "blackbox|whitebox|substitute|generator|generator-adv")
      ->required()
      ->check(CLI::IsMember({"blackbox", "whitebox", "substitute", "generator",
                             "generator-adv"}));
  std::string adv_classifier = "whitebox";
  train->add_option("--classifier", adv_classifier,
                    "gradient source for generator-adv")
      ->check(CLI::IsMember({"blackbox", "whitebox", "substitute"}));
  CLI::App* eval = app.add_subcommand("eval", "run an evaluation pipeline");
  std::string kind;
  eval->add_option("kind", kind, "attack|agreement|ablation|compare")
      ->required()
      ->check(CLI::IsMember({"attack", "agreement", "ablation", "compare"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  KeyValues kv =
      config_path.empty() ? KeyValues{} : parse_config_file(config_path);
  if (const char* set = std::getenv("SIDLAB_SET")) {
    // SIDLAB_SET="key = value; key = value" patches any file key.
    std::string text(set);
    for (char& ch : text)
      if (ch == ';') ch = '\n';
    for (const auto& [k, v] : parse_config_text(text, "SIDLAB_SET"))
      kv[k] = v;
  }
  ExperimentConfig cfg = experiment_config_from(kv);
  if (seed_opt->count() > 0) cfg.seeds = {seed_flag};
  if (!out_dir_flag.empty()) cfg.out_dir = out_dir_flag;
  if (cfg.out_dir.empty()) cfg.out_dir = "runs";
  if (threads < 1) throw ConfigError("--threads must be >= 1");
  validate(cfg);

  const RunPaths paths{cfg.out_dir};
  if (synth->parsed()) return cmd_synth_data(cfg, paths, threads);
  if (train->parsed())
    return cmd_train(role, adv_classifier, cfg, paths, threads);
  return cmd_eval(kind, cfg, paths, threads);
}

}  // namespace
}  // namespace sidlab

int main(int argc, char** argv) {
  try {
    return sidlab::dispatch(argc, argv);
  } catch (const sidlab::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const sidlab::MissingPrerequisiteError& e) {
    std::fprintf(stderr, "missing prerequisite: %s\n", e.what());
    return 3;
  } catch (const sidlab::BudgetExhaustedError& e) {
    std::fprintf(stderr, "budget exhausted: %s\n", e.what());
    return 5;
  } catch (const sidlab::IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}
