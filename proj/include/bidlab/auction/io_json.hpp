#pragma once

// Episode persistence: JSON-lines shards plus a manifest.

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "bidlab/auction/types.hpp"

namespace bidlab::auction {

using json = nlohmann::ordered_json;

inline json to_json(const AuctionConfig& c) {
  return json{{"n_agents", c.n_agents},
              {"horizon", c.horizon},
              {"n_categories", c.n_categories},
              {"arrival_rate", c.arrival_rate},
              {"lifecycle_p", c.lifecycle_p},
              {"rule", to_string(c.rule)},
              {"max_slots", c.max_slots},
              {"exposure_p", c.exposure_p},
              {"base_value_mean", c.base_value_mean},
              {"value_sigma", c.value_sigma},
              {"multiplier_spread", c.multiplier_spread},
              {"budget_min", c.budget_min},
              {"budget_max", c.budget_max},
              {"hard_budget", c.hard_budget},
              {"stochastic_conversions", c.stochastic_conversions}};
}

// FNV-1a over the canonical config serialization.
inline std::string config_hash(const AuctionConfig& c) {
  std::string s = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
  return std::string(buf);
}

inline json to_json(const EpisodeRecord& r) {
  json ios = json::array();
  for (const auto& io : r.ios) {
    json values = json::array();
    for (const auto& [agent, v] : io.value) values.push_back({agent, v});
    ios.push_back(json{{"id", io.id},
                       {"t0", io.t_start},
                       {"t1", io.t_end},
                       {"slots", io.slots},
                       {"exposure", io.exposure},
                       {"values", values},
                       {"conv_prob", io.conv_prob}});
  }
  json agents = json::array();
  for (const auto& a : r.agents)
    agents.push_back(json{{"id", a.id}, {"category", a.category}, {"budget", a.budget}});
  json steps = json::array();
  for (const auto& s : r.steps) {
    json bids = json::array();
    for (const auto& b : s.bids) bids.push_back({b.agent, b.io_id, b.bid});
    json outcomes = json::array();
    for (const auto& oc : s.outcome.ios) {
      json winners = json::array();
      for (const auto& w : oc.winners) winners.push_back({w.agent, w.price});
      outcomes.push_back(json{{"io", oc.io_id}, {"winners", winners}});
    }
    steps.push_back(json{{"t", s.t},
                         {"bids", bids},
                         {"outcomes", outcomes},
                         {"cost", s.outcome.cost},
                         {"value", s.outcome.value},
                         {"wins", s.outcome.wins},
                         {"positive_bids", s.outcome.positive_bids}});
  }
  return json{{"config_hash", r.config_hash},
              {"seed", r.seed},
              {"agents", agents},
              {"ios", ios},
              {"steps", steps},
              {"final_cost", r.final_cost},
              {"final_value", r.final_value}};
}

inline EpisodeRecord episode_from_json(const json& j) {
  EpisodeRecord r;
  r.config_hash = j.at("config_hash").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& a : j.at("agents")) {
    AgentProfile p;
    p.id = a.at("id").get<int>();
    p.category = a.at("category").get<int>();
    p.budget = a.at("budget").get<double>();
    r.agents.push_back(p);
  }
  for (const auto& i : j.at("ios")) {
    ImpressionOpportunity io;
    io.id = i.at("id").get<int>();
    io.t_start = i.at("t0").get<int>();
    io.t_end = i.at("t1").get<int>();
    io.slots = i.at("slots").get<int>();
    io.exposure = i.at("exposure").get<std::vector<int>>();
    io.conv_prob = i.at("conv_prob").get<double>();
    for (const auto& v : i.at("values"))
      io.value[v.at(0).get<int>()] = v.at(1).get<double>();
    r.ios.push_back(std::move(io));
  }
  for (const auto& s : j.at("steps")) {
    StepRecord sr;
    sr.t = s.at("t").get<int>();
    for (const auto& b : s.at("bids"))
      sr.bids.push_back({b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<double>()});
    for (const auto& oc : s.at("outcomes")) {
      IoOutcome io;
      io.io_id = oc.at("io").get<int>();
      for (const auto& w : oc.at("winners"))
        io.winners.push_back({w.at(0).get<int>(), w.at(1).get<double>()});
      sr.outcome.ios.push_back(std::move(io));
    }
    sr.outcome.cost = s.at("cost").get<std::vector<double>>();
    sr.outcome.value = s.at("value").get<std::vector<double>>();
    sr.outcome.wins = s.at("wins").get<std::vector<int>>();
    sr.outcome.positive_bids = s.at("positive_bids").get<std::vector<int>>();
    r.steps.push_back(std::move(sr));
  }
  r.final_cost = j.at("final_cost").get<std::vector<double>>();
  r.final_value = j.at("final_value").get<std::vector<double>>();
  return r;
}

struct ShardInfo {
  std::string file;
  std::uint64_t seed_begin = 0;
  int count = 0;
};

struct Manifest {
  std::string config_hash;
  std::uint64_t seed_begin = 0;
  int total_episodes = 0;
  std::vector<ShardInfo> shards;
};

inline void write_manifest(const std::filesystem::path& dir, const Manifest& m) {
  json shards = json::array();
  for (const auto& s : m.shards)
    shards.push_back(json{{"file", s.file}, {"seed_begin", s.seed_begin}, {"count", s.count}});
  json j{{"format", "bidlab-episodes v1"},
         {"config_hash", m.config_hash},
         {"seed_begin", m.seed_begin},
         {"total_episodes", m.total_episodes},
         {"shards", shards}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw InputError("cannot write manifest in " + dir.string());
  out << j.dump(2) << "\n";
}

inline Manifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw InputError("missing manifest in " + dir.string());
  json j = json::parse(in);
  if (j.at("format").get<std::string>() != "bidlab-episodes v1")
    throw InputError("unsupported manifest format in " + dir.string());
  Manifest m;
  m.config_hash = j.at("config_hash").get<std::string>();
  m.seed_begin = j.at("seed_begin").get<std::uint64_t>();
  m.total_episodes = j.at("total_episodes").get<int>();
  for (const auto& s : j.at("shards")) {
    ShardInfo si;
    si.file = s.at("file").get<std::string>();
    si.seed_begin = s.at("seed_begin").get<std::uint64_t>();
    si.count = s.at("count").get<int>();
    m.shards.push_back(si);
  }
  return m;
}

inline std::vector<EpisodeRecord> read_shard(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw InputError("cannot open shard: " + file.string());
  std::vector<EpisodeRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(episode_from_json(json::parse(line)));
  }
  return out;
}

inline std::vector<EpisodeRecord> read_dataset(const std::filesystem::path& dir) {
  auto m = read_manifest(dir);
  std::vector<EpisodeRecord> out;
  for (const auto& s : m.shards) {
    auto part = read_shard(dir / s.file);
    out.insert(out.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return out;
}

}  // namespace bidlab::auction
