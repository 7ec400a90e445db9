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

// Plain-text experiment configuration and the per-run manifest.
//
// Config files are flat `key = value` lines with `#` comments. Keys are
// dotted paths; every key has a default, so an empty file is a valid
// config. Unknown or duplicated keys are rejected by name, which catches
// typos before a long run burns time on the wrong hyperparameter.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sidlab/harness.hpp"

namespace sidlab {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_config_text(const std::string& text,
                                   const std::string& origin) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  const auto strip = [](std::string s) {
    const char* ws = " \t\r";
    const std::size_t a = s.find_first_not_of(ws);
    if (a == std::string::npos) return std::string();
    const std::size_t b = s.find_last_not_of(ws);
    return s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = strip(line);
    if (body.empty()) continue;
    const std::size_t eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected `key = value`, got \"" + body + "\"");
    const std::string key = strip(body.substr(0, eq));
    const std::string value = strip(body.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (kv.count(key))
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": duplicate key \"" + key + "\"");
    kv[key] = value;
  }
  return kv;
}

inline KeyValues parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

namespace detail {

// Typed key lookup; every miss falls back to the default, every hit is
// marked consumed so leftovers can be reported as unknown keys.
class ConfigReader {
 public:
  explicit ConfigReader(const KeyValues& kv) : kv_(kv) {}

  std::uint64_t u64(const std::string& key, std::uint64_t def) {
    const std::string* raw = find(key);
    if (!raw) return def;
    try {
      std::size_t pos = 0;
      if (raw->empty() || (*raw)[0] == '-') throw std::invalid_argument("");
      const std::uint64_t v = std::stoull(*raw, &pos);
      if (pos != raw->size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key \"" + key + "\": expected unsigned integer, got \"" +
                        *raw + "\"");
    }
  }

  std::size_t size(const std::string& key, std::size_t def) {
    return static_cast<std::size_t>(u64(key, def));
  }

  double real(const std::string& key, double def) {
    const std::string* raw = find(key);
    if (!raw) return def;
    try {
      std::size_t pos = 0;
      const double v = std::stod(*raw, &pos);
      if (pos != raw->size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key \"" + key + "\": expected number, got \"" +
                        *raw + "\"");
    }
  }

  bool flag(const std::string& key, bool def) {
    const std::string* raw = find(key);
    if (!raw) return def;
    if (*raw == "true") return true;
    if (*raw == "false") return false;
    throw ConfigError("config key \"" + key + "\": expected true or false, got \"" +
                      *raw + "\"");
  }

  std::string str(const std::string& key, const std::string& def) {
    const std::string* raw = find(key);
    return raw ? *raw : def;
  }

  std::vector<std::uint64_t> u64_list(const std::string& key,
                                      std::vector<std::uint64_t> def) {
    const std::string* raw = find(key);
    if (!raw) return def;
    std::vector<std::uint64_t> out;
    std::istringstream ss(*raw);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t pos = 0;
        const std::uint64_t v = std::stoull(item, &pos);
        if (pos != item.size()) throw std::invalid_argument("");
        out.push_back(v);
      } catch (const std::exception&) {
        throw ConfigError("config key \"" + key +
                          "\": expected comma-separated unsigned integers, got \"" +
                          *raw + "\"");
      }
    }
    if (out.empty())
      throw ConfigError("config key \"" + key + "\": empty list");
    return out;
  }

  Pooling pooling(const std::string& key, Pooling def) {
    const std::string* raw = find(key);
    if (!raw) return def;
    if (*raw == "mean") return Pooling::kMean;
    if (*raw == "mean_std") return Pooling::kMeanStd;
    throw ConfigError("config key \"" + key +
                      "\": expected mean or mean_std, got \"" + *raw + "\"");
  }

  LossVariant variant(const std::string& key, LossVariant def) {
    const std::string* raw = find(key);
    if (!raw) return def;
    if (*raw == "total") return LossVariant::kTotal;
    if (*raw == "str_only") return LossVariant::kStrOnly;
    if (*raw == "str_minus_aux") return LossVariant::kStrMinusAux;
    throw ConfigError("config key \"" + key +
                      "\": expected total, str_only or str_minus_aux, got \"" +
                      *raw + "\"");
  }

  void reject_unknown() const {
    for (const auto& [key, value] : kv_)
      if (!used_.count(key))
        throw ConfigError("unknown config key \"" + key + "\"");
  }

 private:
  const std::string* find(const std::string& key) {
    used_.insert(key);
    const auto it = kv_.find(key);
    return it == kv_.end() ? nullptr : &it->second;
  }

  const KeyValues& kv_;
  std::set<std::string> used_;
};

}  // namespace detail

// Reference settings: attack lr 8e-4, 1000 iterations, eps 0.8, on a
// 10 speaker x 20 utterance corpus.
inline ExperimentConfig default_cli_config() {
  ExperimentConfig cfg;
  cfg.dataset.utterances_per_speaker = 20;
  // The gradient-access target never shares seed or width with the oracle.
  cfg.whitebox.seed = 11;
  cfg.whitebox.hidden_dim = 48;
  return cfg;
}

inline ExperimentConfig experiment_config_from(const KeyValues& kv) {
  const ExperimentConfig d = default_cli_config();
  ExperimentConfig cfg = d;
  detail::ConfigReader r(kv);

  cfg.dataset.n_speakers = r.size("dataset.n_speakers", d.dataset.n_speakers);
  cfg.dataset.utterances_per_speaker = r.size(
      "dataset.utterances_per_speaker", d.dataset.utterances_per_speaker);
  cfg.dataset.duration_s = r.real("dataset.duration_s", d.dataset.duration_s);
  cfg.dataset.seed = r.u64("dataset.seed", d.dataset.seed);
  cfg.dataset.noise_floor = r.real("dataset.noise_floor", d.dataset.noise_floor);
  cfg.dataset.sample_rate = r.real("dataset.sample_rate", d.dataset.sample_rate);
  cfg.dataset.n_harmonics = r.size("dataset.n_harmonics", d.dataset.n_harmonics);

  cfg.val_per_speaker = r.size("eval.val_per_speaker", d.val_per_speaker);
  cfg.eval_contents = r.size("eval.contents", d.eval_contents);

  const auto classifier = [&r](const std::string& prefix, ClassifierConfig c) {
    c.hidden_dim = r.size(prefix + ".hidden_dim", c.hidden_dim);
    c.hidden_layers = r.size(prefix + ".hidden_layers", c.hidden_layers);
    c.pooling = r.pooling(prefix + ".pooling", c.pooling);
    c.seed = r.u64(prefix + ".seed", c.seed);
    return c;
  };
  cfg.blackbox = classifier("blackbox", d.blackbox);
  cfg.whitebox = classifier("whitebox", d.whitebox);
  cfg.substitute_arch = classifier("substitute", d.substitute_arch);

  const auto train_opts = [&r](const std::string& prefix, TrainOptions t) {
    t.epochs = r.size(prefix + ".epochs", t.epochs);
    t.lr = r.real(prefix + ".lr", t.lr);
    t.lr_decay = r.real(prefix + ".lr_decay", t.lr_decay);
    return t;
  };
  cfg.classifier_train = train_opts("classifier_train", d.classifier_train);
  cfg.generator_recon = train_opts("generator_recon", d.generator_recon);
  cfg.generator_joint = train_opts("generator_joint", d.generator_joint);

  cfg.perturbation.eps_start = r.real("attack.eps", d.perturbation.eps_start);
  cfg.perturbation.lr = r.real("attack.lr", d.perturbation.lr);
  cfg.perturbation.max_iters = r.size("attack.iterations",
                                      d.perturbation.max_iters);
  cfg.perturbation.eps_decay = r.real("attack.eps_decay",
                                      d.perturbation.eps_decay);
  cfg.perturbation.eps_min = r.real("attack.eps_min", d.perturbation.eps_min);
  cfg.perturbation.early_stop = r.flag("attack.early_stop",
                                       d.perturbation.early_stop);

  cfg.generator.d_content = r.size("generator.d_content", d.generator.d_content);
  cfg.generator.d_spk = r.size("generator.d_spk", d.generator.d_spk);
  cfg.generator.hidden_dim = r.size("generator.hidden_dim",
                                    d.generator.hidden_dim);
  cfg.generator.seed = r.u64("generator.seed", d.generator.seed);

  const auto distill = [&r](const std::string& prefix, DistillConfig c) {
    c.sigma = r.real(prefix + ".sigma", c.sigma);
    c.epochs = r.size(prefix + ".epochs", c.epochs);
    c.batch_size = r.size(prefix + ".batch_size", c.batch_size);
    c.lr = r.real(prefix + ".lr", c.lr);
    c.lr_decay = r.real(prefix + ".lr_decay", c.lr_decay);
    c.seed = r.u64(prefix + ".seed", c.seed);
    c.loss_variant = r.variant(prefix + ".loss_variant", c.loss_variant);
    c.stop_grad_transformed = r.flag(prefix + ".stop_grad_transformed",
                                     c.stop_grad_transformed);
    c.cache_queries = r.flag(prefix + ".cache_queries", c.cache_queries);
    return c;
  };
  cfg.distill = distill("distill", d.distill);
  cfg.distill_query_budget = r.u64("distill.query_budget",
                                   d.distill_query_budget);
  cfg.ablation_distill = distill("ablation", d.ablation_distill);
  cfg.ablation_per_speaker = r.size("ablation.per_speaker",
                                    d.ablation_per_speaker);

  cfg.seeds = r.u64_list("run.seeds", d.seeds);
  cfg.out_dir = r.str("run.out_dir", d.out_dir);

  r.reject_unknown();
  return cfg;
}

// Canonical text form: one line per schema key, sorted, so identical
// configs render identical bytes.
inline std::string render_config(const ExperimentConfig& cfg) {
  KeyValues kv;
  const auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  kv["dataset.n_speakers"] = std::to_string(cfg.dataset.n_speakers);
  kv["dataset.utterances_per_speaker"] =
      std::to_string(cfg.dataset.utterances_per_speaker);
  kv["dataset.duration_s"] = num(cfg.dataset.duration_s);
  kv["dataset.seed"] = std::to_string(cfg.dataset.seed);
  kv["dataset.noise_floor"] = num(cfg.dataset.noise_floor);
  kv["dataset.sample_rate"] = num(cfg.dataset.sample_rate);
  kv["dataset.n_harmonics"] = std::to_string(cfg.dataset.n_harmonics);
  kv["eval.val_per_speaker"] = std::to_string(cfg.val_per_speaker);
  kv["eval.contents"] = std::to_string(cfg.eval_contents);
  const auto classifier = [&kv](const std::string& prefix,
                                const ClassifierConfig& c) {
    kv[prefix + ".hidden_dim"] = std::to_string(c.hidden_dim);
    kv[prefix + ".hidden_layers"] = std::to_string(c.hidden_layers);
    kv[prefix + ".pooling"] = c.pooling == Pooling::kMean ? "mean" : "mean_std";
    kv[prefix + ".seed"] = std::to_string(c.seed);
  };
  classifier("blackbox", cfg.blackbox);
  classifier("whitebox", cfg.whitebox);
  classifier("substitute", cfg.substitute_arch);
  const auto train_opts = [&kv, &num](const std::string& prefix,
                                      const TrainOptions& t) {
    kv[prefix + ".epochs"] = std::to_string(t.epochs);
    kv[prefix + ".lr"] = num(t.lr);
    kv[prefix + ".lr_decay"] = num(t.lr_decay);
  };
  train_opts("classifier_train", cfg.classifier_train);
  train_opts("generator_recon", cfg.generator_recon);
  train_opts("generator_joint", cfg.generator_joint);
  kv["attack.eps"] = num(cfg.perturbation.eps_start);
  kv["attack.lr"] = num(cfg.perturbation.lr);
  kv["attack.iterations"] = std::to_string(cfg.perturbation.max_iters);
  kv["attack.eps_decay"] = num(cfg.perturbation.eps_decay);
  kv["attack.eps_min"] = num(cfg.perturbation.eps_min);
  kv["attack.early_stop"] = cfg.perturbation.early_stop ? "true" : "false";
  kv["generator.d_content"] = std::to_string(cfg.generator.d_content);
  kv["generator.d_spk"] = std::to_string(cfg.generator.d_spk);
  kv["generator.hidden_dim"] = std::to_string(cfg.generator.hidden_dim);
  kv["generator.seed"] = std::to_string(cfg.generator.seed);
  const auto distill = [&kv, &num](const std::string& prefix,
                                   const DistillConfig& c) {
    kv[prefix + ".sigma"] = num(c.sigma);
    kv[prefix + ".epochs"] = std::to_string(c.epochs);
    kv[prefix + ".batch_size"] = std::to_string(c.batch_size);
    kv[prefix + ".lr"] = num(c.lr);
    kv[prefix + ".lr_decay"] = num(c.lr_decay);
    kv[prefix + ".seed"] = std::to_string(c.seed);
    kv[prefix + ".loss_variant"] = loss_variant_name(c.loss_variant);
    kv[prefix + ".stop_grad_transformed"] =
        c.stop_grad_transformed ? "true" : "false";
    kv[prefix + ".cache_queries"] = c.cache_queries ? "true" : "false";
  };
  distill("distill", cfg.distill);
  kv["distill.query_budget"] = std::to_string(cfg.distill_query_budget);
  distill("ablation", cfg.ablation_distill);
  kv["ablation.per_speaker"] = std::to_string(cfg.ablation_per_speaker);
  std::string seeds;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    if (i) seeds += ",";
    seeds += std::to_string(cfg.seeds[i]);
  }
  kv["run.seeds"] = seeds;
  kv["run.out_dir"] = cfg.out_dir;

  std::string out;
  for (const auto& [key, value] : kv) out += key + " = " + value + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

struct RunManifest {
  std::string command;
  KeyValues resolved_config;
  std::vector<std::uint64_t> seeds;
  std::int64_t started_unix = 0;
  std::int64_t finished_unix = 0;
  std::vector<std::string> artifacts;             // paths written by the run
  std::map<std::string, std::string> checkpoint_hashes;
};

// Atomic: the file appears complete or not at all.
inline void write_manifest(const std::string& path, const RunManifest& m) {
  for (const auto& p : m.artifacts)
    if (!std::filesystem::exists(p))
      throw IoError("manifest: artifact missing: " + p);
  nlohmann::json j;
  j["command"] = m.command;
  j["config"] = m.resolved_config;
  j["seeds"] = m.seeds;
  j["started_unix"] = m.started_unix;
  j["finished_unix"] = m.finished_unix;
  j["artifacts"] = m.artifacts;
  j["checkpoint_hashes"] = m.checkpoint_hashes;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("manifest: cannot write " + tmp);
    out << j.dump(2) << "\n";
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("manifest: cannot rename " + tmp + " to " + path);
}

inline RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("manifest: cannot open " + path);
  nlohmann::json j;
  in >> j;
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.resolved_config = j.at("config").get<KeyValues>();
  m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  m.started_unix = j.at("started_unix").get<std::int64_t>();
  m.finished_unix = j.at("finished_unix").get<std::int64_t>();
  m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
  m.checkpoint_hashes =
      j.at("checkpoint_hashes").get<std::map<std::string, std::string>>();
  return m;
}

}  // namespace sidlab
