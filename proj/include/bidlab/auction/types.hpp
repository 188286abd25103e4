#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bidlab::auction {

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class AllocationRule { FPA, GSP, VCG };

inline std::string to_string(AllocationRule r) {
  switch (r) {
    case AllocationRule::FPA: return "FPA";
    case AllocationRule::GSP: return "GSP";
    case AllocationRule::VCG: return "VCG";
  }
  return "?";
}

inline AllocationRule rule_from_string(const std::string& s) {
  if (s == "FPA") return AllocationRule::FPA;
  if (s == "GSP") return AllocationRule::GSP;
  if (s == "VCG") return AllocationRule::VCG;
  throw ConfigError("unknown allocation rule: " + s);
}

// One bid-able item. `value` holds the expected conversion value per exposed
// agent (conversion probability already folded in); `conv_prob` is kept for
// the optional Bernoulli realization mode.
struct ImpressionOpportunity {
  int id = 0;
  int t_start = 0, t_end = 0;
  int slots = 1;
  std::vector<int> exposure;          // sorted agent ids
  std::map<int, double> value;        // agent id -> expected value
  double conv_prob = 1.0;

  bool exposed_to(int agent) const {
    for (int a : exposure)
      if (a == agent) return true;
    return false;
  }
  bool live_at(int t) const { return t >= t_start && t <= t_end; }
};

struct AgentProfile {
  int id = 0;
  int category = 0;
  double budget = 1.0;
  std::optional<double> cpa_target;
};

struct WinnerEntry {
  int agent = -1;
  double price = 0.0;
};

struct IoOutcome {
  int io_id = 0;
  std::vector<WinnerEntry> winners;  // rank order
};

// Per-step auction results plus per-agent tallies for that step.
struct StepOutcome {
  std::vector<IoOutcome> ios;
  std::vector<double> cost;         // per agent
  std::vector<double> value;        // per agent
  std::vector<int> wins;            // per agent
  std::vector<int> positive_bids;   // per agent, bids > 0 entering the auction
};

struct AuctionConfig {
  int n_agents = 4;
  int horizon = 32;
  int n_categories = 4;
  double arrival_rate = 4.0;
  double lifecycle_p = 0.5;        // geometric stop probability per extra step
  AllocationRule rule = AllocationRule::FPA;
  int max_slots = 1;
  double exposure_p = 0.8;
  double base_value_mean = 1.0;
  double value_sigma = 0.5;
  double multiplier_spread = 0.0;  // 0 -> all per-agent multipliers are 1
  double budget_min = 20.0;
  double budget_max = 40.0;
  bool hard_budget = false;
  bool stochastic_conversions = false;

  void validate() const {
    if (n_agents < 1 || horizon < 1 || n_categories < 1)
      throw ConfigError("auction config: counts must be positive");
    if (arrival_rate < 0) throw ConfigError("auction config: negative arrival rate");
    if (lifecycle_p <= 0 || lifecycle_p > 1)
      throw ConfigError("auction config: lifecycle_p must be in (0,1]");
    if (max_slots < 1) throw ConfigError("auction config: max_slots < 1");
    if (exposure_p <= 0 || exposure_p > 1)
      throw ConfigError("auction config: exposure_p must be in (0,1]");
    if (budget_min <= 0 || budget_max < budget_min)
      throw ConfigError("auction config: bad budget range");
    if (value_sigma < 0 || multiplier_spread < 0)
      throw ConfigError("auction config: negative spread");
  }
};

// One (agent, io) bid entry for a step.
struct BidEntry {
  int agent = 0;
  int io_id = 0;
  double bid = 0.0;
};

struct StepRecord {
  int t = 0;
  std::vector<BidEntry> bids;
  StepOutcome outcome;
};

struct EpisodeRecord {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<AgentProfile> agents;
  std::vector<ImpressionOpportunity> ios;
  std::vector<StepRecord> steps;
  std::vector<double> final_cost;   // per agent
  std::vector<double> final_value;  // per agent
};

struct KpiRow {
  double ret = 0.0;
  double cpa = 0.0;
  double roi = 0.0;
  double win_rate = 0.0;
  double budget_adherence = 0.0;
  double social_welfare = 0.0;
};

struct KpiReport {
  std::vector<KpiRow> per_agent;
  KpiRow aggregate;
};

}  // namespace bidlab::auction
