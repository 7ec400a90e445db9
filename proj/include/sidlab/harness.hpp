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
//
// Experiment pipelines over the library pieces: attack-success evaluation,
// substitute agreement, loss-variant ablations, and a five-way method
// comparison, all seeded and reproducible.

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "sidlab/attack.hpp"
#include "sidlab/audio.hpp"
#include "sidlab/classifier.hpp"
#include "sidlab/generator.hpp"
#include "sidlab/mel.hpp"
#include "sidlab/substitute.hpp"
#include "sidlab/util.hpp"

namespace sidlab {

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct PerSample {
  std::size_t sample = 0;
  std::size_t target = 0;
  std::size_t predicted = 0;
  bool success = false;
};

// Counts stay integral; the rate is divided out only when asked for.
struct AttackReport {
  std::size_t n_total = 0;
  std::size_t n_success = 0;
  std::vector<PerSample> per_sample;

  double acc() const {
    return n_total == 0
               ? 0.0
               : static_cast<double>(n_success) / static_cast<double>(n_total);
  }
};

struct AgreementTable {
  double agreement = 0.0;      // substitute vs oracle predictions
  double substitute_acc = 0.0;  // substitute vs ground truth
  double oracle_acc = 0.0;      // oracle vs ground truth
};

struct AblationRow {
  LossVariant variant = LossVariant::kTotal;
  std::vector<double> agreement;  // one entry per seed
  std::vector<double> gt_acc;
  double mean_agreement = 0.0;
  double mean_gt_acc = 0.0;
  double spread_agreement = 0.0;  // max - min over seeds
  double spread_gt_acc = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;  // total, str_only, str_minus_aux
};

struct MethodResult {
  std::string method;
  std::vector<AttackReport> reports;  // one per seed, in cfg.seeds order
  double mean_acc = 0.0;
};

struct ComparisonTable {
  std::vector<MethodResult> methods;  // five rows, fixed order
};

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  DatasetSpec dataset;
  std::size_t val_per_speaker = 3;  // held out per speaker for evaluation
  std::size_t eval_contents = 20;   // unseen content ids probed per speaker
  ClassifierConfig whitebox;        // gradient-access model for the joint arm
  ClassifierConfig blackbox;        // oracle backing, also the eval target
  ClassifierConfig substitute_arch;
  TrainOptions classifier_train;
  PerturbationConfig perturbation;
  GenConfig generator;
  TrainOptions generator_recon;  // reconstruction phase
  TrainOptions generator_joint;  // switching-loss phase
  DistillConfig distill;
  // The loss-term ablation runs data-starved so the contribution of each
  // term is visible; the attack arms use the full budget above.
  DistillConfig ablation_distill;
  std::size_t ablation_per_speaker = 0;   // 0 keeps every training mel
  std::uint64_t distill_query_budget = 0;  // 0 leaves the oracle uncapped
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir;
};

inline void validate(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty())
    throw std::invalid_argument("ExperimentConfig: no seeds");
  if (cfg.val_per_speaker < 1 ||
      cfg.val_per_speaker >= cfg.dataset.utterances_per_speaker)
    throw std::invalid_argument(
        "ExperimentConfig: val_per_speaker must leave a training split");
  if (cfg.eval_contents < 1)
    throw std::invalid_argument("ExperimentConfig: eval_contents < 1");
  validate(cfg.perturbation);
  validate(cfg.distill);
  validate(cfg.ablation_distill);
  if (cfg.classifier_train.epochs < 1 || cfg.generator_recon.epochs < 1 ||
      cfg.generator_joint.epochs < 1)
    throw std::invalid_argument("ExperimentConfig: zero training epochs");
}

// Preset small enough for a laptop run yet separable enough that the
// method orderings hold with margin.
inline ExperimentConfig desk_scale_config() {
  ExperimentConfig cfg;
  cfg.dataset.n_speakers = 10;
  cfg.dataset.utterances_per_speaker = 12;
  cfg.dataset.duration_s = 0.25;
  cfg.dataset.seed = 2026;
  cfg.val_per_speaker = 3;

  cfg.blackbox.seed = 7;
  cfg.blackbox.pooling = Pooling::kMean;
  // Gradient target for the joint arm: independently seeded and sized, so
  // its attacks must transfer to the eval net.
  cfg.whitebox.seed = 11;
  cfg.whitebox.hidden_dim = 48;
  cfg.whitebox.pooling = Pooling::kMean;
  cfg.substitute_arch.seed = 1;
  cfg.substitute_arch.pooling = Pooling::kMean;
  cfg.classifier_train.epochs = 25;

  // Deep single-stage targets: the switching loss needs room past the
  // decision boundary, not a minimal perturbation.
  cfg.perturbation.eps_start = 16.0;
  cfg.perturbation.lr = 0.25;
  cfg.perturbation.max_iters = 120;
  cfg.perturbation.eps_decay = 0.9;
  cfg.perturbation.eps_min = 15.2;
  cfg.perturbation.early_stop = false;

  cfg.generator.d_content = 16;
  cfg.generator.d_spk = 8;
  // Wide enough that the constraint can move outputs inside a target
  // region without wrecking reconstruction elsewhere.
  cfg.generator.hidden_dim = 96;
  // Short pretraining leaves the baseline short of several speakers.
  cfg.generator_recon.epochs = 10;
  cfg.generator_recon.lr = 40.0;
  cfg.generator_recon.lr_decay = 0.995;
  cfg.generator_joint.epochs = 40;
  cfg.generator_joint.lr = 300.0;
  cfg.generator_joint.lr_decay = 0.995;

  cfg.distill.epochs = 30;
  cfg.distill.lr = 0.05;

  cfg.ablation_distill = cfg.distill;
  cfg.ablation_distill.epochs = 8;
  cfg.ablation_distill.sigma = 2.0;
  cfg.ablation_per_speaker = 2;

  cfg.seeds = {1, 2, 3, 4, 5};
  return cfg;
}

// ---------------------------------------------------------------------------
// Shared pipeline pieces
// ---------------------------------------------------------------------------

struct AttackProbe {
  ContentCode content;
  std::size_t target = 0;
};

// Corpus, splits, trained classifiers, generator pairs and the probe grid.
struct LabSetup {
  Dataset train;
  Dataset val;
  SpeakerClassifier blackbox;
  SpeakerClassifier whitebox;
  std::vector<GenPair> pairs;        // one per training utterance
  std::vector<AttackProbe> testset;  // unseen contents x all speakers
  GenConfig generator;               // shape-resolved generator config
};

namespace detail {
// Probe content ids start far above any corpus content id.
constexpr std::size_t kEvalContentBase = 1u << 20;
}  // namespace detail

inline std::vector<MelSpectrogram> unlabeled_mels(const Dataset& ds) {
  std::vector<MelSpectrogram> out;
  out.reserve(ds.size());
  for (const auto& e : ds) out.push_back(e.mel);
  return out;
}

// First val_per_speaker utterances of each speaker are held out.
inline void split_dataset(Dataset all, std::size_t n_speakers,
                          std::size_t val_per_speaker, Dataset* train,
                          Dataset* val) {
  std::vector<std::size_t> taken(n_speakers, 0);
  for (auto& e : all) {
    if (e.speaker < n_speakers && taken[e.speaker] < val_per_speaker) {
      val->push_back(std::move(e));
      ++taken[e.speaker];
    } else {
      train->push_back(std::move(e));
    }
  }
}

inline std::vector<GenPair> make_pairs(const Dataset& train,
                                       std::uint64_t dataset_seed,
                                       std::size_t d_content) {
  std::vector<GenPair> pairs;
  for (const auto& e : train) {
    GenPair p;
    p.content = make_content_code(dataset_seed, e.content_id, d_content);
    p.speaker = e.speaker;
    p.m_gt = e.mel;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

inline std::vector<AttackProbe> make_probe_grid(std::size_t n_speakers,
                                                std::size_t eval_contents,
                                                std::uint64_t dataset_seed,
                                                std::size_t d_content) {
  std::vector<AttackProbe> probes;
  for (std::size_t c = 0; c < eval_contents; ++c)
    for (std::size_t s = 0; s < n_speakers; ++s)
      probes.push_back(
          {make_content_code(dataset_seed, detail::kEvalContentBase + c,
                             d_content),
           s});
  return probes;
}

inline LabSetup prepare_lab(const ExperimentConfig& cfg) {
  validate(cfg);
  LabSetup lab;
  const MelExtractor ex(cfg.dataset.sample_rate);
  Dataset all;
  for (const auto& w : synth_dataset(cfg.dataset)) {
    LabeledMel e;
    e.mel = ex.extract(w);
    e.speaker = w.speaker;
    e.content_id = w.content_id;
    all.push_back(std::move(e));
  }
  split_dataset(std::move(all), cfg.dataset.n_speakers, cfg.val_per_speaker,
                &lab.train, &lab.val);

  // Widths follow the data; everything else follows the config.
  const std::size_t n_mels = lab.train[0].mel.n_mels();
  const std::size_t frames = lab.train[0].mel.frames();
  ClassifierConfig bb = cfg.blackbox;
  bb.n_speakers = cfg.dataset.n_speakers;
  bb.n_mels = n_mels;
  lab.blackbox = SpeakerClassifier(bb);
  lab.blackbox.train(lab.train, lab.val, cfg.classifier_train);
  ClassifierConfig wb = cfg.whitebox;
  wb.n_speakers = cfg.dataset.n_speakers;
  wb.n_mels = n_mels;
  lab.whitebox = SpeakerClassifier(wb);
  lab.whitebox.train(lab.train, lab.val, cfg.classifier_train);

  lab.generator = cfg.generator;
  lab.generator.n_speakers = cfg.dataset.n_speakers;
  lab.generator.n_mels = n_mels;
  lab.generator.frames = frames;

  lab.pairs = make_pairs(lab.train, cfg.dataset.seed, lab.generator.d_content);
  lab.testset = make_probe_grid(cfg.dataset.n_speakers, cfg.eval_contents,
                                cfg.dataset.seed, lab.generator.d_content);
  return lab;
}

// ---------------------------------------------------------------------------
// Evaluations
// ---------------------------------------------------------------------------

inline AttackReport eval_attack(const CondGenerator& g,
                                const SpeakerClassifier& clf,
                                const std::vector<AttackProbe>& testset) {
  if (testset.empty())
    throw std::invalid_argument("eval_attack: empty testset");
  AttackReport rep;
  rep.n_total = testset.size();
  for (std::size_t i = 0; i < testset.size(); ++i) {
    const MelSpectrogram m_hat = g.generate(testset[i].content,
                                            testset[i].target);
    PerSample ps;
    ps.sample = i;
    ps.target = testset[i].target;
    ps.predicted = clf.predict(m_hat);
    ps.success = ps.predicted == ps.target;
    if (ps.success) ++rep.n_success;
    rep.per_sample.push_back(ps);
  }
  return rep;
}

// Generate, then push each output toward its target with PGD on attack_clf
// before judging with eval_clf.
inline AttackReport eval_attack_posthoc(const CondGenerator& g,
                                        const SpeakerClassifier& attack_clf,
                                        const SpeakerClassifier& eval_clf,
                                        const std::vector<AttackProbe>& testset,
                                        const PerturbationConfig& pcfg) {
  if (testset.empty())
    throw std::invalid_argument("eval_attack_posthoc: empty testset");
  AttackReport rep;
  rep.n_total = testset.size();
  for (std::size_t i = 0; i < testset.size(); ++i) {
    const MelSpectrogram m_hat = g.generate(testset[i].content,
                                            testset[i].target);
    const AttackOutcome out =
        optimize_perturbation(attack_clf, m_hat, testset[i].target, pcfg);
    const MelSpectrogram m_adv = apply_delta(m_hat, out.final_delta);
    PerSample ps;
    ps.sample = i;
    ps.target = testset[i].target;
    ps.predicted = eval_clf.predict(m_adv);
    ps.success = ps.predicted == ps.target;
    if (ps.success) ++rep.n_success;
    rep.per_sample.push_back(ps);
  }
  return rep;
}

inline AgreementTable run_agreement_eval(const SpeakerClassifier& substitute,
                                         BlackBoxOracle& oracle,
                                         const Dataset& testset) {
  if (testset.empty())
    throw std::invalid_argument("run_agreement_eval: empty testset");
  AgreementTable t;
  std::size_t agree = 0, sub_hits = 0, oracle_hits = 0;
  for (const auto& e : testset) {
    const std::size_t sub_pred = substitute.predict(e.mel);
    const std::size_t oracle_pred = oracle.query(e.mel).argmax();
    if (sub_pred == oracle_pred) ++agree;
    if (sub_pred == e.speaker) ++sub_hits;
    if (oracle_pred == e.speaker) ++oracle_hits;
  }
  const double n = static_cast<double>(testset.size());
  t.agreement = static_cast<double>(agree) / n;
  t.substitute_acc = static_cast<double>(sub_hits) / n;
  t.oracle_acc = static_cast<double>(oracle_hits) / n;
  return t;
}

// ---------------------------------------------------------------------------
// Training arms
// ---------------------------------------------------------------------------

// Reconstruction pretraining shared by every arm of one seed, so method
// differences come from the constraint alone.
inline CondGenerator train_base_generator(const LabSetup& lab,
                                          const ExperimentConfig& cfg,
                                          std::uint64_t seed) {
  GenConfig gc = lab.generator;
  gc.seed = derive_seed(seed, 0x9e11u);
  CondGenerator g(gc);
  g.train_recon(lab.pairs, cfg.generator_recon);
  return g;
}

// Switching-loss phase against f on top of a pretrained base.
inline CondGenerator constrain_generator(CondGenerator base,
                                         const LabSetup& lab,
                                         const ExperimentConfig& cfg,
                                         const SpeakerClassifier& f) {
  base.joint_train_adv(f, lab.pairs, cfg.perturbation, cfg.generator_joint);
  return base;
}

inline SpeakerClassifier distill_arm(const LabSetup& lab,
                                     const ExperimentConfig& cfg,
                                     LossVariant variant, std::uint64_t seed) {
  BlackBoxOracle oracle(lab.blackbox);
  DistillConfig dc = cfg.distill;
  dc.arch = cfg.substitute_arch;
  dc.loss_variant = variant;
  dc.seed = derive_seed(seed, 0xd111u, static_cast<std::uint64_t>(variant));
  return train_substitute(oracle, unlabeled_mels(lab.train), dc).model;
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

inline ComparisonTable run_method_comparison(const ExperimentConfig& cfg) {
  const LabSetup lab = prepare_lab(cfg);
  ComparisonTable table;
  table.methods.resize(5);
  table.methods[0].method = "recon_only";
  table.methods[1].method = "recon_pgd";
  table.methods[2].method = "joint_whitebox";
  table.methods[3].method = "joint_substitute_str";
  table.methods[4].method = "joint_substitute_total";

  for (const std::uint64_t seed : cfg.seeds) {
    const CondGenerator base = train_base_generator(lab, cfg, seed);
    table.methods[0].reports.push_back(
        eval_attack(base, lab.blackbox, lab.testset));
    table.methods[1].reports.push_back(eval_attack_posthoc(
        base, lab.blackbox, lab.blackbox, lab.testset, cfg.perturbation));

    const CondGenerator gen_white =
        constrain_generator(base, lab, cfg, lab.whitebox);
    table.methods[2].reports.push_back(
        eval_attack(gen_white, lab.blackbox, lab.testset));

    const SpeakerClassifier sub_str =
        distill_arm(lab, cfg, LossVariant::kStrOnly, seed);
    table.methods[3].reports.push_back(eval_attack(
        constrain_generator(base, lab, cfg, sub_str), lab.blackbox,
        lab.testset));

    const SpeakerClassifier sub_total =
        distill_arm(lab, cfg, LossVariant::kTotal, seed);
    table.methods[4].reports.push_back(eval_attack(
        constrain_generator(base, lab, cfg, sub_total), lab.blackbox,
        lab.testset));
  }
  for (auto& m : table.methods) {
    double acc = 0.0;
    for (const auto& r : m.reports) acc += r.acc();
    m.mean_acc = acc / static_cast<double>(m.reports.size());
  }
  return table;
}

inline AblationTable run_ablation(const ExperimentConfig& cfg) {
  const LabSetup lab = prepare_lab(cfg);
  std::vector<MelSpectrogram> data;
  {
    std::vector<std::size_t> taken(cfg.dataset.n_speakers, 0);
    for (const auto& e : lab.train)
      if (cfg.ablation_per_speaker == 0 ||
          taken[e.speaker]++ < cfg.ablation_per_speaker)
        data.push_back(e.mel);
  }
  AblationTable table;
  for (const LossVariant v : {LossVariant::kTotal, LossVariant::kStrOnly,
                              LossVariant::kStrMinusAux}) {
    AblationRow row;
    row.variant = v;
    for (const std::uint64_t seed : cfg.seeds) {
      BlackBoxOracle oracle(lab.blackbox);
      DistillConfig dc = cfg.ablation_distill;
      dc.arch = cfg.substitute_arch;
      dc.loss_variant = v;
      dc.seed = derive_seed(seed, 0xd111u, static_cast<std::uint64_t>(v));
      const SpeakerClassifier sub = train_substitute(oracle, data, dc).model;
      BlackBoxOracle eval_oracle(lab.blackbox);
      const AgreementTable t = run_agreement_eval(sub, eval_oracle, lab.val);
      row.agreement.push_back(t.agreement);
      row.gt_acc.push_back(t.substitute_acc);
    }
    const auto summarize = [](const std::vector<double>& xs, double* mean,
                              double* spread) {
      double lo = xs[0], hi = xs[0], acc = 0.0;
      for (const double x : xs) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        acc += x;
      }
      *mean = acc / static_cast<double>(xs.size());
      *spread = hi - lo;
    };
    summarize(row.agreement, &row.mean_agreement, &row.spread_agreement);
    summarize(row.gt_acc, &row.mean_gt_acc, &row.spread_gt_acc);
    table.rows.push_back(std::move(row));
  }
  return table;
}

struct FakeRequest {
  std::size_t content_id = 0;
  std::size_t speaker = 0;
};

// Content code in, adversarially trained generator out, one mel file per
// request, judged by the designated classifier.
inline AttackReport generate_fake_audio(const CondGenerator& g,
                                        const SpeakerClassifier& clf,
                                        const std::vector<FakeRequest>& requests,
                                        std::uint64_t content_seed,
                                        const std::string& out_dir) {
  if (requests.empty())
    throw std::invalid_argument("generate_fake_audio: empty request list");
  for (const auto& r : requests)
    if (r.speaker >= g.n_speakers)
      throw std::invalid_argument("generate_fake_audio: unknown speaker " +
                                  std::to_string(r.speaker));
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("generate_fake_audio: cannot create " + out_dir);

  AttackReport rep;
  rep.n_total = requests.size();
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto& r = requests[i];
    const ContentCode code =
        make_content_code(content_seed, r.content_id, g.d_content);
    const MelSpectrogram m = g.generate(code, r.speaker);
    write_melspec(out_dir + "/fake_utt" + std::to_string(r.content_id) +
                      "_spk" + std::to_string(r.speaker) + ".mel",
                  m, derive_seed(content_seed, r.content_id, r.speaker));
    PerSample ps;
    ps.sample = i;
    ps.target = r.speaker;
    ps.predicted = clf.predict(m);
    ps.success = ps.predicted == ps.target;
    if (ps.success) ++rep.n_success;
    rep.per_sample.push_back(ps);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Rendering: aligned text for humans, line records for tooling. All numbers
// go through %.9g or fixed %.4f so identical runs render identical bytes.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::string(buf);
}

inline std::string f4(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return std::string(buf);
}

inline std::string join_g9(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += g9(xs[i]);
  }
  return out;
}

inline std::string pad(const std::string& s, std::size_t width) {
  std::string out = s;
  while (out.size() < width) out += ' ';
  return out;
}

}  // namespace detail

inline std::string agreement_record_line(const AgreementTable& t) {
  return "{\"agreement\":" + detail::g9(t.agreement) +
         ",\"substitute_acc\":" + detail::g9(t.substitute_acc) +
         ",\"oracle_acc\":" + detail::g9(t.oracle_acc) + "}";
}

inline std::string render_agreement(const AgreementTable& t) {
  std::string out;
  out += detail::pad("metric", 30) + "value\n";
  out += detail::pad("substitute_oracle_agreement", 30) +
         detail::f4(t.agreement) + "\n";
  out += detail::pad("substitute_groundtruth_acc", 30) +
         detail::f4(t.substitute_acc) + "\n";
  out += detail::pad("oracle_groundtruth_acc", 30) + detail::f4(t.oracle_acc) +
         "\n";
  return out;
}

inline std::string ablation_record_line(const AblationRow& r) {
  return std::string("{\"variant\":\"") + loss_variant_name(r.variant) +
         "\",\"mean_agreement\":" + detail::g9(r.mean_agreement) +
         ",\"mean_gt_acc\":" + detail::g9(r.mean_gt_acc) +
         ",\"agreement\":[" + detail::join_g9(r.agreement) +
         "],\"gt_acc\":[" + detail::join_g9(r.gt_acc) + "]}";
}

inline std::string render_ablation(const AblationTable& t) {
  std::string out;
  out += detail::pad("variant", 16) + detail::pad("mean_agree", 12) +
         detail::pad("spread", 10) + detail::pad("mean_gt_acc", 13) +
         detail::pad("spread", 10) + "seeds\n";
  for (const auto& r : t.rows) {
    out += detail::pad(loss_variant_name(r.variant), 16) +
           detail::pad(detail::f4(r.mean_agreement), 12) +
           detail::pad(detail::f4(r.spread_agreement), 10) +
           detail::pad(detail::f4(r.mean_gt_acc), 13) +
           detail::pad(detail::f4(r.spread_gt_acc), 10) +
           std::to_string(r.agreement.size()) + "\n";
  }
  return out;
}

inline std::string report_record_line(const std::string& method,
                                      std::uint64_t seed,
                                      const AttackReport& r) {
  char head[160];
  std::snprintf(head, sizeof(head),
                "{\"method\":\"%s\",\"seed\":%llu,\"n_total\":%zu,"
                "\"n_success\":%zu,\"acc\":",
                method.c_str(), static_cast<unsigned long long>(seed),
                r.n_total, r.n_success);
  return std::string(head) + detail::g9(r.acc()) + "}";
}

inline std::string per_sample_record_line(const PerSample& ps) {
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "{\"sample\":%zu,\"target\":%zu,\"predicted\":%zu,"
                "\"success\":%s}",
                ps.sample, ps.target, ps.predicted,
                ps.success ? "true" : "false");
  return std::string(buf);
}

inline std::string render_attack_report(const AttackReport& r) {
  std::string out;
  out += detail::pad("metric", 12) + "value\n";
  out += detail::pad("n_total", 12) + std::to_string(r.n_total) + "\n";
  out += detail::pad("n_success", 12) + std::to_string(r.n_success) + "\n";
  out += detail::pad("acc", 12) + detail::f4(r.acc()) + "\n";
  return out;
}

inline std::string comparison_record_line(const MethodResult& m) {
  std::vector<double> accs;
  for (const auto& r : m.reports) accs.push_back(r.acc());
  return "{\"method\":\"" + m.method +
         "\",\"mean_acc\":" + detail::g9(m.mean_acc) + ",\"acc\":[" +
         detail::join_g9(accs) + "]}";
}

inline std::string render_comparison(const ComparisonTable& t) {
  std::string out;
  out += detail::pad("method", 24) + detail::pad("mean_acc", 10) +
         "per_seed_acc\n";
  for (const auto& m : t.methods) {
    out += detail::pad(m.method, 24) + detail::pad(detail::f4(m.mean_acc), 10);
    for (std::size_t i = 0; i < m.reports.size(); ++i) {
      if (i) out += ' ';
      out += detail::f4(m.reports[i].acc());
    }
    out += "\n";
  }
  return out;
}

// FNV-1a over a file's bytes, for checkpoint provenance lines.
inline std::string file_hash_hex(const std::string& path) {
  const std::string bytes = detail::slurp(path);
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a64(bytes.data(), bytes.size())));
  return std::string(buf);
}

}  // namespace sidlab
