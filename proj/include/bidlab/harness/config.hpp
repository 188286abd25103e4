#pragma once

// Experiment configuration: flat key=value entries in named sections.
// Unknown sections or keys are rejected so typos fail loudly.

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bidlab/align/act.hpp"
#include "bidlab/auction/types.hpp"
#include "bidlab/bidders/dataset.hpp"
#include "bidlab/graph/build.hpp"
#include "bidlab/ldm/diffusion.hpp"

namespace bidlab::harness {

using auction::ConfigError;

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

}  // namespace detail

class IniFile {
 public:
  static IniFile parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  static IniFile parse(const std::string& text, const std::string& origin = "") {
    IniFile f;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto s = detail::trim(line);
      if (s.empty() || s[0] == '#' || s[0] == ';') continue;
      if (s.front() == '[') {
        if (s.back() != ']')
          throw ConfigError("config: bad section header at line " +
                            std::to_string(lineno) + " in " + origin);
        section = detail::trim(s.substr(1, s.size() - 2));
        f.values_[section];  // create even if empty
        continue;
      }
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config: expected key=value at line " +
                          std::to_string(lineno) + " in " + origin);
      auto key = detail::trim(s.substr(0, eq));
      auto val = detail::trim(s.substr(eq + 1));
      if (key.empty())
        throw ConfigError("config: empty key at line " + std::to_string(lineno));
      if (section.empty())
        throw ConfigError("config: key '" + key + "' outside any section");
      if (!f.values_[section].emplace(key, val).second)
        throw ConfigError("config: duplicate key '" + section + "." + key + "'");
    }
    return f;
  }

  const std::map<std::string, std::map<std::string, std::string>>& sections()
      const {
    return values_;
  }

 private:
  std::map<std::string, std::map<std::string, std::string>> values_;
};

// Typed, consumption-tracked view over one section.
class SectionReader {
 public:
  SectionReader(const IniFile& f, const std::string& name) : name_(name) {
    auto it = f.sections().find(name);
    if (it != f.sections().end()) kv_ = &it->second;
  }

  bool has(const std::string& key) const {
    return kv_ && kv_->count(key) > 0;
  }

  std::string str(const std::string& key, const std::string& dflt) {
    used_.insert(key);
    if (!has(key)) return dflt;
    return kv_->at(key);
  }
  double num(const std::string& key, double dflt) {
    used_.insert(key);
    if (!has(key)) return dflt;
    const auto& v = kv_->at(key);
    std::size_t pos = 0;
    double out;
    try {
      out = std::stod(v, &pos);
    } catch (const std::exception&) {
      throw ConfigError("config: " + name_ + "." + key + " is not a number");
    }
    if (pos != v.size())
      throw ConfigError("config: " + name_ + "." + key + " is not a number");
    return out;
  }
  int integer(const std::string& key, int dflt) {
    double v = num(key, double(dflt));
    if (v != double(int(v)))
      throw ConfigError("config: " + name_ + "." + key + " must be an integer");
    return int(v);
  }
  bool flag(const std::string& key, bool dflt) {
    auto v = str(key, dflt ? "true" : "false");
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: " + name_ + "." + key + " must be boolean");
  }
  std::vector<double> numbers(const std::string& key,
                              const std::vector<double>& dflt) {
    auto v = str(key, "");
    if (v.empty()) return dflt;
    std::vector<double> out;
    std::istringstream in(v);
    std::string tok;
    while (std::getline(in, tok, ','))
      out.push_back(parse_num(name_ + "." + key, tok));
    return out;
  }

  void reject_unknown() const {
    if (!kv_) return;
    for (auto& [k, v] : *kv_)
      if (!used_.count(k))
        throw ConfigError("config: unknown key '" + name_ + "." + k + "'");
  }

 private:
  double parse_num(const std::string& where, const std::string& tok) {
    std::size_t pos = 0;
    double out;
    try {
      out = std::stod(detail::trim(tok), &pos);
    } catch (const std::exception&) {
      throw ConfigError("config: " + where + " has a non-numeric entry");
    }
    if (pos != detail::trim(tok).size())
      throw ConfigError("config: " + where + " has a non-numeric entry");
    return out;
  }

  std::string name_;
  const std::map<std::string, std::string>* kv_ = nullptr;
  std::set<std::string> used_;
};

struct TrainConfig {
  int graph_episodes = 64;   // episodes consumed by the graph/idm stage
  int kd_episodes = 16;      // episodes for student distillation
  int ldm_episodes = 64;     // episodes consumed by the diffusion stage
  double lr = 1e-3;
  double spl_weight = 0.1;
  double ema_decay = 0.99;
  bool spl = true;
  bool ec = true;
};

struct AlignConfig {
  double tau = 0.7;
  std::vector<double> weights;  // kKpiDim entries
  int plan_candidates = 8;      // best-of-n
  int m = 32;                   // raft samples per context
  double q = 0.25;
  int rounds = 2;
  int plan_every = 4;
  int value_episodes = 64;      // episodes for value-head fitting
  int value_steps = 300;
  int raft_contexts = 4;
  int raft_epochs = 2;
};

struct EvalConfig {
  int seeds = 64;
  int forecast_samples = 8;
  int forecast_seeds = 16;
};

struct ExperimentConfig {
  auction::AuctionConfig auction;
  bidders::DatasetParams data;
  int episodes = 256;
  int eval_episodes = 64;  // held-out dataset size
  graph::GraphConfig graph;
  int belief_h = 4;
  ldm::DiffusionConfig ldm;
  TrainConfig train;
  AlignConfig align;
  EvalConfig eval;
};

inline ExperimentConfig load_experiment_config(const IniFile& f) {
  static const std::set<std::string> known = {
      "auction", "data", "graph", "ldm", "train", "align", "eval"};
  for (auto& [name, kv] : f.sections())
    if (!known.count(name))
      throw ConfigError("config: unknown section '" + name + "'");

  ExperimentConfig c;
  SectionReader a(f, "auction");
  c.auction.n_agents = a.integer("agents", c.auction.n_agents);
  c.auction.horizon = a.integer("horizon", c.auction.horizon);
  c.auction.n_categories = a.integer("categories", c.auction.n_categories);
  c.auction.arrival_rate = a.num("arrival_rate", c.auction.arrival_rate);
  c.auction.lifecycle_p = a.num("lifecycle_p", c.auction.lifecycle_p);
  c.auction.rule = auction::rule_from_string(a.str(
      "rule", auction::to_string(c.auction.rule)));
  c.auction.max_slots = a.integer("max_slots", c.auction.max_slots);
  c.auction.exposure_p = a.num("exposure_p", c.auction.exposure_p);
  c.auction.base_value_mean = a.num("base_value_mean", c.auction.base_value_mean);
  c.auction.value_sigma = a.num("value_sigma", c.auction.value_sigma);
  c.auction.multiplier_spread =
      a.num("multiplier_spread", c.auction.multiplier_spread);
  c.auction.budget_min = a.num("budget_min", c.auction.budget_min);
  c.auction.budget_max = a.num("budget_max", c.auction.budget_max);
  c.auction.hard_budget = a.flag("hard_budget", c.auction.hard_budget);
  c.auction.stochastic_conversions =
      a.flag("stochastic_conversions", c.auction.stochastic_conversions);
  a.reject_unknown();
  c.auction.validate();

  SectionReader d(f, "data");
  c.episodes = d.integer("episodes", c.episodes);
  c.eval_episodes = d.integer("eval_episodes", c.eval_episodes);
  c.data.episodes_per_shard = d.integer("episodes_per_shard",
                                        c.data.episodes_per_shard);
  c.data.force_uniform = d.flag("force_uniform", c.data.force_uniform);
  c.data.alpha_min = d.num("alpha_min", c.data.alpha_min);
  c.data.alpha_max = d.num("alpha_max", c.data.alpha_max);
  c.data.mult_min = d.num("mult_min", c.data.mult_min);
  c.data.mult_max = d.num("mult_max", c.data.mult_max);
  c.data.value_bins = d.integer("value_bins", c.data.value_bins);
  d.reject_unknown();

  SectionReader g(f, "graph");
  c.graph.d = g.integer("d", c.graph.d);
  c.graph.layers = g.integer("layers", c.graph.layers);
  c.graph.cap_m = g.integer("cap_m", c.graph.cap_m);
  c.graph.heads = g.integer("heads", c.graph.heads);
  c.graph.n_categories = c.auction.n_categories;
  c.belief_h = g.integer("belief_h", c.belief_h);
  c.train.ec = g.flag("ec", c.train.ec);
  c.train.spl = g.flag("spl", c.train.spl);
  g.reject_unknown();

  SectionReader l(f, "ldm");
  c.ldm.n_steps = l.integer("steps", c.ldm.n_steps);
  c.ldm.resample = l.integer("resample", c.ldm.resample);
  c.ldm.net.hidden = l.integer("hidden", c.ldm.net.hidden);
  c.ldm.net.blocks = l.integer("blocks", c.ldm.net.blocks);
  c.ldm.net.kernel = l.integer("kernel", c.ldm.net.kernel);
  c.ldm.net.step_emb = l.integer("step_emb", c.ldm.net.step_emb);
  c.ldm.net.d = c.graph.d;
  c.ldm.net.cond_dim = c.graph.d;
  l.reject_unknown();

  SectionReader t(f, "train");
  c.train.graph_episodes = t.integer("graph_episodes", c.train.graph_episodes);
  c.train.kd_episodes = t.integer("kd_episodes", c.train.kd_episodes);
  c.train.ldm_episodes = t.integer("ldm_episodes", c.train.ldm_episodes);
  c.train.lr = t.num("lr", c.train.lr);
  c.train.spl_weight = t.num("spl_weight", c.train.spl_weight);
  c.train.ema_decay = t.num("ema_decay", c.train.ema_decay);
  t.reject_unknown();

  SectionReader al(f, "align");
  c.align.tau = al.num("tau", c.align.tau);
  c.align.weights = al.numbers("weights", {0.0, 1.0, 0.0, 0.0, 0.0, 0.0});
  c.align.plan_candidates = al.integer("n", c.align.plan_candidates);
  c.align.m = al.integer("m", c.align.m);
  c.align.q = al.num("q", c.align.q);
  c.align.rounds = al.integer("rounds", c.align.rounds);
  c.align.plan_every = al.integer("plan_every", c.align.plan_every);
  c.align.value_episodes = al.integer("value_episodes", c.align.value_episodes);
  c.align.value_steps = al.integer("value_steps", c.align.value_steps);
  c.align.raft_contexts = al.integer("raft_contexts", c.align.raft_contexts);
  c.align.raft_epochs = al.integer("raft_epochs", c.align.raft_epochs);
  al.reject_unknown();
  if (int(c.align.weights.size()) != align::kKpiDim)
    throw ConfigError("config: align.weights must have " +
                      std::to_string(align::kKpiDim) + " entries");
  if (c.align.tau <= 0.0 || c.align.tau >= 1.0)
    throw ConfigError("config: align.tau must lie in (0,1)");

  SectionReader e(f, "eval");
  c.eval.seeds = e.integer("seeds", c.eval.seeds);
  c.eval.forecast_samples = e.integer("forecast_samples",
                                      c.eval.forecast_samples);
  c.eval.forecast_seeds = e.integer("forecast_seeds", c.eval.forecast_seeds);
  e.reject_unknown();
  return c;
}

inline ExperimentConfig load_experiment_config_file(const std::string& path) {
  return load_experiment_config(IniFile::parse_file(path));
}

}  // namespace bidlab::harness
