#pragma once

// Experiment stages behind the CLI: dataset generation, two-stage training
// (graph/inverse-dynamics first, then diffusion), alignment, and the
// evaluation suites. Stage ordering is enforced through checkpoint files; a
// missing prerequisite raises DependencyError naming the file.

#include <cstdlib>
#include <filesystem>
#include <thread>

#include "bidlab/align/act.hpp"
#include "bidlab/align/raft.hpp"
#include "bidlab/auction/io_json.hpp"
#include "bidlab/auction/kpi.hpp"
#include "bidlab/belief/belief.hpp"
#include "bidlab/bidders/dataset.hpp"
#include "bidlab/graph/ec.hpp"
#include "bidlab/graph/spl.hpp"
#include "bidlab/harness/config.hpp"
#include "bidlab/harness/report.hpp"
#include "bidlab/idm/idm.hpp"

namespace bidlab::harness {

namespace fs = std::filesystem;

struct DependencyError : std::runtime_error {
  explicit DependencyError(const std::string& m) : std::runtime_error(m) {}
};

struct Paths {
  fs::path root;
  fs::path dataset() const { return root / "dataset"; }
  fs::path eval_dataset() const { return root / "dataset_eval"; }
  fs::path models() const { return root / "models"; }
  fs::path reports() const { return root / "reports"; }
  fs::path graph_ckpt() const { return models() / "graph.ckpt"; }
  fs::path graph_student_ckpt() const { return models() / "graph_student.ckpt"; }
  fs::path idm_ckpt() const { return models() / "idm.ckpt"; }
  fs::path ldm_ckpt() const { return models() / "ldm.ckpt"; }
  fs::path ldm_student_ckpt() const { return models() / "ldm_student.ckpt"; }
  fs::path ldm_aligned_ckpt() const { return models() / "ldm_aligned.ckpt"; }
  fs::path value_ckpt() const { return models() / "value.ckpt"; }
  fs::path train_meta() const { return models() / "train_meta.json"; }
};

inline void require_file(const fs::path& p, const std::string& stage) {
  if (!fs::exists(p))
    throw DependencyError(stage + ": missing prerequisite " + p.string() +
                          " (run the earlier pipeline stages first)");
}

inline int worker_count() {
  const char* env = std::getenv("BIDLAB_WORKERS");
  if (!env) return 1;
  int n = std::atoi(env);
  if (n < 1)
    throw ConfigError("BIDLAB_WORKERS must be a positive integer");
  return std::min(n, 64);
}

// --- shared helpers ---------------------------------------------------------

// Per-step agent embeddings of one recorded episode, computed without taping.
// Returned as per-step (n_agents x d) value matrices.
inline std::vector<std::vector<real>> episode_embeddings(
    const auction::EpisodeRecord& rec, const graph::GraphConfig& gcfg,
    const graph::GnnEncoder& enc, std::uint64_t sample_seed) {
  nk::NoGradGuard ng;
  std::vector<std::vector<real>> out;
  auto views = graph::step_views_from_record(rec, int(rec.steps.size()));
  nk::Rng rng(sample_seed);
  for (auto& v : views) {
    auto g = graph::build_graph(v, gcfg, rng);
    out.push_back(enc.encode(g).agent_embed.data());
  }
  return out;
}

// Student variant: per-agent embeddings from that agent's belief graph.
inline std::vector<std::vector<real>> episode_embeddings_belief(
    const auction::EpisodeRecord& rec, const graph::GraphConfig& gcfg,
    int belief_h, const graph::GnnEncoder& enc, std::uint64_t sample_seed) {
  nk::NoGradGuard ng;
  int n = int(rec.agents.size());
  std::vector<std::vector<real>> out;
  auto views = graph::step_views_from_record(rec, int(rec.steps.size()));
  nk::Rng rng(sample_seed);
  for (auto& v : views) {
    std::vector<real> row(std::size_t(n) * gcfg.d, real(0));
    for (int a = 0; a < n; ++a) {
      auto g = belief::build_belief_graph(v, a, gcfg, belief_h, rng);
      auto e = enc.encode(g).agent_embed;  // (1 x d)
      for (int j = 0; j < gcfg.d; ++j)
        row[std::size_t(a) * gcfg.d + j] = e.at(0, j);
    }
    out.push_back(std::move(row));
  }
  return out;
}

// agent trajectory (T x d) out of per-step (n x d) rows
inline nk::Tensor<real> agent_trajectory(
    const std::vector<std::vector<real>>& embeds, int agent, int d) {
  int T = int(embeds.size());
  auto x = nk::Tensor<real>::zeros({T, d});
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < d; ++j)
      x.data()[std::size_t(t * d + j)] =
          embeds[std::size_t(t)][std::size_t(agent) * d + j];
  return x;
}

// KPI targets used by the value head: cpa, roi, win_rate, adherence,
// welfare share, spend.
inline std::vector<real> kpi_vector(const auction::KpiReport& rep,
                                    const auction::EpisodeRecord& rec,
                                    int agent) {
  const auto& r = rep.per_agent[std::size_t(agent)];
  double welfare = r.social_welfare;
  double share = welfare > 0 ? r.ret / welfare : 0.0;
  double cpa = std::isfinite(r.cpa) ? r.cpa : 1e6;  // keep targets finite
  double spend = rec.final_cost[std::size_t(agent)];
  return {real(cpa), real(r.roi), real(r.win_rate), real(r.budget_adherence),
          real(share), real(spend)};
}

// --- gen-data ---------------------------------------------------------------

inline constexpr std::uint64_t kEvalSeedOffset = 1u << 20;

inline void stage_gen_data(const ExperimentConfig& cfg, std::uint64_t seed,
                           const Paths& paths) {
  bidders::generate_dataset(cfg.auction, cfg.data, cfg.episodes, seed,
                            paths.dataset());
  bidders::generate_dataset(cfg.auction, cfg.data, cfg.eval_episodes,
                            seed + kEvalSeedOffset, paths.eval_dataset());
}

// --- train-graph ------------------------------------------------------------

struct GraphBundle {
  graph::GnnEncoder enc;
  graph::GnnEncoder student;
  idm::IdmModel idm;
};

inline GraphBundle make_graph_bundle(const ExperimentConfig& cfg,
                                     std::uint64_t seed) {
  // parameter init must be independent of training data
  nk::Rng pr(seed ^ 0x9e3779b97f4a7c15ull);
  GraphBundle b{
      graph::GnnEncoder(cfg.graph, pr),
      graph::GnnEncoder(cfg.graph, pr, "student"),
      idm::IdmModel(cfg.graph.d, idm::context_dim(cfg.auction.n_categories), pr)};
  return b;
}

inline void stage_train_graph(const ExperimentConfig& cfg, std::uint64_t seed,
                              const Paths& paths) {
  require_file(paths.dataset() / "manifest.json", "train-graph");
  auto episodes = auction::read_dataset(paths.dataset());
  fs::create_directories(paths.models());

  auto bundle = make_graph_bundle(cfg, seed);
  auto& enc = bundle.enc;
  auto& idm = bundle.idm;
  int d = cfg.graph.d, n = cfg.auction.n_agents;

  nk::Rng pr(seed ^ 0x7f4a7c15ull);
  graph::SplHead spl(d, pr);
  graph::EcAggregator ec(d, cfg.graph.heads, pr);
  graph::GnnEncoder ema(cfg.graph, pr, "gnn");
  ema.params().copy_values_from(enc.params());

  nk::Adam<real> opt_enc(cfg.train.lr), opt_idm(cfg.train.lr),
      opt_spl(cfg.train.lr), opt_ec(cfg.train.lr);
  auto ones_col = nk::Tensor<real>::full({n, 1}, real(1));

  int n_eps = std::min<int>(cfg.train.graph_episodes, int(episodes.size()));
  for (int e = 0; e < n_eps; ++e) {
    const auto& rec = episodes[std::size_t(e)];
    int T = int(rec.steps.size());
    auto views = graph::step_views_from_record(rec, T);
    nk::Rng grng(seed ^ rec.seed);

    // encode all steps once, keeping the tape for the joint objective
    std::vector<graph::EncodeResult> res;
    std::vector<graph::AuctionGraph> graphs;
    for (auto& v : views) {
      graphs.push_back(graph::build_graph(v, cfg.graph, grng));
      res.push_back(enc.encode(graphs.back()));
    }

    nk::Tensor<real> loss = nk::Tensor<real>::scalar(real(0));
    int terms = 0;
    for (int t = 0; t + 1 < T; ++t) {
      // inverse-dynamics term over exposed IOs with recorded bids
      std::vector<int> arep, iorep;
      std::vector<real> ctx_rows, targets;
      std::map<int, int> io_pos;
      for (std::size_t k = 0; k < graphs[std::size_t(t)].io_ids.size(); ++k)
        io_pos[graphs[std::size_t(t)].io_ids[k]] = int(k);
      auto ctxdim = idm::context_dim(cfg.auction.n_categories);
      for (const auto& b : rec.steps[std::size_t(t)].bids) {
        auto it = io_pos.find(b.io_id);
        if (it == io_pos.end()) continue;
        arep.push_back(b.agent);
        iorep.push_back(it->second);
        auto c = idm::context_vector(rec.agents[std::size_t(b.agent)],
                                     views[std::size_t(t)].cum_cost[std::size_t(b.agent)],
                                     views[std::size_t(t)].cum_value[std::size_t(b.agent)],
                                     t, T, cfg.auction.n_categories);
        ctx_rows.insert(ctx_rows.end(), c.begin(), c.end());
        targets.push_back(real(b.bid));
      }
      if (!arep.empty()) {
        // The online planner feeds the inverse dynamics model *sampled*
        // future latents, so train it under matching input perturbations:
        // Gaussian noise on the latent pair makes the decoded bids robust to
        // forecast error without touching the clean evaluation path.
        auto jitter = [&](const nk::Tensor<real>& x) {
          std::vector<real> nz(x.data().size());
          for (auto& v : nz) v = real(grng.normal(0.0, 0.35));
          return nk::add(x, nk::Tensor<real>::from(std::move(nz),
                                                   {x.rows(), x.cols()}));
        };
        auto x_t = jitter(gather_rows(res[std::size_t(t)].agent_embed, arep));
        auto x_n =
            jitter(gather_rows(res[std::size_t(t) + 1].agent_embed, arep));
        auto f_k = gather_rows(res[std::size_t(t)].io_embed, iorep);
        auto ctx = nk::Tensor<real>::from(ctx_rows, {int(arep.size()), ctxdim});
        auto tgt = nk::Tensor<real>::from(targets, {int(arep.size()), 1});
        loss = add(loss, idm.graph_loss(idm.predict(x_t, x_n, f_k, ctx), tgt));
        ++terms;
      }
      if (cfg.train.spl) {
        // predict the EMA encoding of t+1 from the current embedding and a
        // summary of the other agents
        nk::Tensor<real> others;
        if (cfg.train.ec) {
          auto joint = ec.aggregate(res[std::size_t(t)].agent_embed);
          others = nk::matmul(ones_col, nk::as_row(joint));
        } else {
          auto total = nk::matmul(
              ones_col, nk::matmul(nk::transpose(ones_col),
                                   res[std::size_t(t)].agent_embed));
          others = nk::mul_scalar(
              sub(total, res[std::size_t(t)].agent_embed),
              real(1.0 / std::max(1, n - 1)));
        }
        nk::Tensor<real> target;
        {
          nk::NoGradGuard ng;
          target = ema.encode(graphs[std::size_t(t) + 1]).agent_embed;
        }
        loss = add(loss, nk::mul_scalar(
                             spl.loss(res[std::size_t(t)].agent_embed, others,
                                      target),
                             real(cfg.train.spl_weight)));
        ++terms;
      }
    }
    if (terms == 0) continue;
    loss = nk::mul_scalar(loss, real(1.0 / terms));
    enc.params().zero_grad();
    idm.params().zero_grad();
    spl.params().zero_grad();
    ec.params().zero_grad();
    nk::backward(loss);
    opt_enc.step(enc.params());
    opt_idm.step(idm.params());
    if (cfg.train.spl) opt_spl.step(spl.params());
    if (cfg.train.spl && cfg.train.ec) opt_ec.step(ec.params());
    ema.params().ema_from(enc.params(), real(cfg.train.ema_decay));
  }

  // student distillation: belief-graph embeddings regress onto the frozen
  // teacher's embeddings
  auto& student = bundle.student;
  nk::Adam<real> opt_st(cfg.train.lr);
  int kd_eps = std::min<int>(cfg.train.kd_episodes, int(episodes.size()));
  for (int e = 0; e < kd_eps; ++e) {
    const auto& rec = episodes[std::size_t(e)];
    int T = int(rec.steps.size());
    auto views = graph::step_views_from_record(rec, T);
    nk::Rng grng(seed ^ rec.seed ^ 0xbe11ull);
    for (int t = 0; t < T; ++t) {
      nk::Tensor<real> teacher;
      {
        nk::NoGradGuard ng;
        auto g = graph::build_graph(views[std::size_t(t)], cfg.graph, grng);
        teacher = enc.encode(g).agent_embed;
      }
      for (int a = 0; a < n; ++a) {
        auto bg = belief::build_belief_graph(views[std::size_t(t)], a,
                                             cfg.graph, cfg.belief_h, grng);
        auto se = student.encode(bg).agent_embed;
        auto l = belief::kd_loss(se, gather_rows(teacher, {a}));
        student.params().zero_grad();
        nk::backward(l);
        opt_st.step(student.params());
      }
    }
  }

  enc.save(paths.graph_ckpt().string());
  student.save(paths.graph_student_ckpt().string());
  idm.save(paths.idm_ckpt().string());

  // record which shards trained the models so evals can enforce disjointness
  auto m = auction::read_manifest(paths.dataset());
  nlohmann::ordered_json meta{{"config_hash", m.config_hash},
                              {"seed_begin", m.seed_begin},
                              {"episodes", m.total_episodes}};
  std::ofstream out(paths.train_meta(), std::ios::binary | std::ios::trunc);
  out << meta.dump(2) << '\n';
}

// --- train-ldm --------------------------------------------------------------

inline void train_one_ldm(const ExperimentConfig& cfg, std::uint64_t seed,
                          ldm::LatentDiffusion& dm,
                          const std::vector<auction::EpisodeRecord>& episodes,
                          bool student_embeds, const graph::GnnEncoder& enc) {
  int d = cfg.graph.d;
  nk::Adam<real> opt(cfg.train.lr);
  nk::Rng rng(seed ^ (student_embeds ? 0x57ull : 0x7eull));
  int n_eps = std::min<int>(cfg.train.ldm_episodes, int(episodes.size()));
  for (int e = 0; e < n_eps; ++e) {
    const auto& rec = episodes[std::size_t(e)];
    auto embeds = student_embeds
                      ? episode_embeddings_belief(rec, cfg.graph, cfg.belief_h,
                                                  enc, seed ^ rec.seed)
                      : episode_embeddings(rec, cfg.graph, enc, seed ^ rec.seed);
    int T = int(embeds.size());
    if (T < 2) continue;
    for (int a = 0; a < cfg.auction.n_agents; ++a) {
      auto x0 = agent_trajectory(embeds, a, d);
      int p = 1 + int(rng.randint(std::uint64_t(T - 1)));  // known prefix
      std::vector<real> mask(std::size_t(T), real(0));
      for (int t = 0; t < p; ++t) mask[std::size_t(t)] = real(1);
      auto cond = nk::Tensor<real>::zeros({1, d});
      for (int j = 0; j < d; ++j)
        cond.data()[std::size_t(j)] = x0.at(p - 1, j);
      dm.train_step(x0, mask, cond, rng, opt);
    }
  }
}

inline void stage_train_ldm(const ExperimentConfig& cfg, std::uint64_t seed,
                            const Paths& paths) {
  require_file(paths.graph_ckpt(), "train-ldm");
  require_file(paths.graph_student_ckpt(), "train-ldm");
  require_file(paths.dataset() / "manifest.json", "train-ldm");
  auto episodes = auction::read_dataset(paths.dataset());

  auto bundle = make_graph_bundle(cfg, seed);
  bundle.enc.load(paths.graph_ckpt().string());
  bundle.student.load(paths.graph_student_ckpt().string());

  nk::Rng pr(seed ^ 0x1d4ull);
  ldm::LatentDiffusion teacher(cfg.ldm, pr);
  train_one_ldm(cfg, seed, teacher, episodes, false, bundle.enc);
  teacher.save(paths.ldm_ckpt().string());

  nk::Rng ps(seed ^ 0x1d5ull);
  ldm::LatentDiffusion student(cfg.ldm, ps);
  train_one_ldm(cfg, seed, student, episodes, true, bundle.student);
  student.save(paths.ldm_student_ckpt().string());
}

// --- align ------------------------------------------------------------------

inline void stage_align(const ExperimentConfig& cfg, std::uint64_t seed,
                        const Paths& paths) {
  require_file(paths.ldm_ckpt(), "align");
  require_file(paths.graph_ckpt(), "align");
  require_file(paths.idm_ckpt(), "align");
  require_file(paths.dataset() / "manifest.json", "align");
  auto episodes = auction::read_dataset(paths.dataset());
  fs::create_directories(paths.reports());

  auto bundle = make_graph_bundle(cfg, seed);
  bundle.enc.load(paths.graph_ckpt().string());
  nk::Rng pr(seed ^ 0xa117ull);
  ldm::LatentDiffusion dm(cfg.ldm, pr);
  dm.load(paths.ldm_ckpt().string());
  int d = cfg.graph.d;
  align::ValueHead value(2 * d, pr);

  // value-head targets from recorded episodes: plan-time summary -> KPIs
  std::vector<real> xs, ys;
  int rows = 0;
  int n_eps = std::min<int>(cfg.align.value_episodes, int(episodes.size()));
  for (int e = 0; e < n_eps; ++e) {
    const auto& rec = episodes[std::size_t(e)];
    auto embeds = episode_embeddings(rec, cfg.graph, bundle.enc, seed ^ rec.seed);
    int T = int(embeds.size());
    if (T < 2) continue;
    auto rep = auction::compute_kpis(rec);
    for (int a = 0; a < cfg.auction.n_agents; ++a) {
      auto x0 = agent_trajectory(embeds, a, d);
      for (int t : {0, T / 2}) {
        // mean embedding over [t, T) plus the embedding at t
        for (int j = 0; j < d; ++j) {
          double m = 0;
          for (int s = t; s < T; ++s) m += double(x0.at(s, j));
          xs.push_back(real(m / (T - t)));
        }
        for (int j = 0; j < d; ++j) xs.push_back(x0.at(t, j));
        auto k = kpi_vector(rep, rec, a);
        ys.insert(ys.end(), k.begin(), k.end());
        ++rows;
      }
    }
  }
  if (rows == 0) throw auction::InputError("align: dataset has no usable rows");
  auto X = nk::Tensor<real>::from(xs, {rows, 2 * d});
  auto Y = nk::Tensor<real>::from(ys, {rows, align::kKpiDim});
  nk::Adam<real> vopt(cfg.train.lr);
  for (int s = 0; s < cfg.align.value_steps; ++s)
    align::iql_value_update(value, X, Y, cfg.align.tau, vopt);
  value.save(paths.value_ckpt().string());

  // rejection fine-tuning rounds against the preference-weighted value score
  std::vector<align::RaftContext> ctxs;
  int n_ctx = std::min<int>(cfg.align.raft_contexts, int(episodes.size()));
  for (int c = 0; c < n_ctx; ++c) {
    const auto& rec = episodes[std::size_t(c)];
    auto embeds = episode_embeddings(rec, cfg.graph, bundle.enc, seed ^ rec.seed);
    int T = int(embeds.size());
    align::RaftContext ctx;
    ctx.known = agent_trajectory(embeds, c % cfg.auction.n_agents, d);
    ctx.mask.assign(std::size_t(T), real(0));
    int p = std::max(1, T / 4);
    for (int t = 0; t < p; ++t) ctx.mask[std::size_t(t)] = real(1);
    ctx.cond = nk::Tensor<real>::zeros({1, d});
    for (int j = 0; j < d; ++j)
      ctx.cond.data()[std::size_t(j)] = ctx.known.at(p - 1, j);
    ctxs.push_back(std::move(ctx));
  }

  auto scorer = [&](const nk::Tensor<real>& traj) {
    int T = traj.rows();
    auto in = nk::Tensor<real>::zeros({1, 2 * d});
    for (int j = 0; j < d; ++j) {
      double m = 0;
      for (int t = 0; t < T; ++t) m += double(traj.at(t, j));
      in.data()[std::size_t(j)] = real(m / T);
      in.data()[std::size_t(d + j)] = traj.at(0, j);
    }
    auto k = value.predict(in);
    double s = 0;
    for (int j = 0; j < align::kKpiDim; ++j)
      s += cfg.align.weights[std::size_t(j)] * double(k.at(0, j));
    return s;
  };

  CsvTable log;
  log.header = {"round", "mean_score", "mean_kept_score", "kept_fraction",
                "fine_tune_steps"};
  nk::Adam<real> dopt(cfg.train.lr);
  nk::Rng rrng(seed ^ 0x4af7ull);
  for (int r = 0; r < cfg.align.rounds; ++r) {
    auto res = align::raft_round(dm, ctxs, cfg.align.m, cfg.align.q, scorer,
                                 cfg.align.raft_epochs, dopt, rrng);
    double kept_frac = double(res.kept.size()) /
                       double(std::size_t(cfg.align.m) * ctxs.size());
    log.add_row({std::to_string(r), fmt_num(res.mean_score),
                 fmt_num(res.mean_kept_score), fmt_num(kept_frac),
                 std::to_string(res.fine_tune_steps)});
  }
  dm.save(paths.ldm_aligned_ckpt().string());
  auto m = auction::read_manifest(paths.dataset());
  write_csv((paths.reports() / "align.csv").string(), log);
  write_summary((paths.reports() / "align_summary.txt").string(),
                provenance(m.config_hash, seed),
                {"rounds=" + std::to_string(cfg.align.rounds),
                 "contexts=" + std::to_string(ctxs.size())});
}

// --- eval: forecasting ------------------------------------------------------

inline void stage_eval_forecast(const ExperimentConfig& cfg, std::uint64_t seed,
                                const Paths& paths) {
  require_file(paths.ldm_ckpt(), "eval-forecast");
  require_file(paths.ldm_student_ckpt(), "eval-forecast");
  require_file(paths.graph_ckpt(), "eval-forecast");
  require_file(paths.graph_student_ckpt(), "eval-forecast");
  require_file(paths.eval_dataset() / "manifest.json", "eval-forecast");
  auto episodes = auction::read_dataset(paths.eval_dataset());
  if (episodes.empty()) throw auction::InputError("eval-forecast: empty dataset");
  fs::create_directories(paths.reports());

  auto bundle = make_graph_bundle(cfg, seed);
  bundle.enc.load(paths.graph_ckpt().string());
  bundle.student.load(paths.graph_student_ckpt().string());
  nk::Rng pr(seed ^ 0xf04eull);
  ldm::LatentDiffusion teacher(cfg.ldm, pr);
  teacher.load(paths.ldm_ckpt().string());
  nk::Rng ps(seed ^ 0xf04full);
  ldm::LatentDiffusion student(cfg.ldm, ps);
  student.load(paths.ldm_student_ckpt().string());
  // untrained reference with a config-determined fresh init
  nk::Rng pu(seed ^ 0xf050ull);
  ldm::LatentDiffusion untrained(cfg.ldm, pu);

  int d = cfg.graph.d, K = cfg.eval.forecast_samples;
  CsvTable table;
  table.header = {"split", "seed", "samples", "score"};
  double sum_t = 0, sum_s = 0, sum_u = 0;
  for (int s = 0; s < cfg.eval.forecast_seeds; ++s) {
    const auto& rec = episodes[std::size_t(s) % episodes.size()];
    int agent = s % cfg.auction.n_agents;
    auto et = episode_embeddings(rec, cfg.graph, bundle.enc, seed ^ rec.seed);
    auto es = episode_embeddings_belief(rec, cfg.graph, cfg.belief_h,
                                        bundle.student, seed ^ rec.seed);
    int T = int(et.size());
    std::vector<real> mask(std::size_t(T), real(0));
    for (int t = 0; t < T / 2; ++t) mask[std::size_t(t)] = real(1);
    // All models are scored against the same full-information trajectory;
    // the student only sees its partial-observation encoding as the known
    // prefix, so its score includes the cost of observing less.
    auto truth = agent_trajectory(et, agent, d);
    auto score_one = [&](ldm::LatentDiffusion& dm,
                         const std::vector<std::vector<real>>& embeds,
                         std::uint64_t salt) {
      auto known = agent_trajectory(embeds, agent, d);
      auto cond = nk::Tensor<real>::zeros({1, d});
      for (int j = 0; j < d; ++j)
        cond.data()[std::size_t(j)] = known.at(T / 2 - 1, j);
      nk::Rng r(seed ^ rec.seed ^ salt);
      return dm.forecast_loglik(known, truth, mask, cond, r, K);
    };
    double lt = score_one(teacher, et, 0x71ull);
    double ls = score_one(student, es, 0x72ull);
    double lu = score_one(untrained, et, 0x73ull);
    sum_t += lt;
    sum_s += ls;
    sum_u += lu;
    table.add_row({"teacher", std::to_string(s), std::to_string(K), fmt_num(lt)});
    table.add_row({"student", std::to_string(s), std::to_string(K), fmt_num(ls)});
    table.add_row({"untrained", std::to_string(s), std::to_string(K), fmt_num(lu)});
  }
  int ns = cfg.eval.forecast_seeds;
  // per-dim log-likelihoods are negative; retention compares the implied
  // geometric-mean densities
  double retention = std::exp(sum_s / ns - sum_t / ns);
  write_csv((paths.reports() / "forecast.csv").string(), table);
  auto m = auction::read_manifest(paths.eval_dataset());
  write_summary((paths.reports() / "forecast_summary.txt").string(),
                provenance(m.config_hash, seed),
                {"seeds=" + std::to_string(ns),
                 "teacher_mean=" + fmt_num(sum_t / ns),
                 "student_mean=" + fmt_num(sum_s / ns),
                 "untrained_mean=" + fmt_num(sum_u / ns),
                 "retention_ratio=" + fmt_num(retention)});
}

// --- eval: KPIs (aligned actor vs uniform-scaling baseline) -----------------

struct EvalEpisodeResult {
  auction::KpiReport baseline;
  auction::KpiReport aligned;
  std::vector<double> baseline_cost, aligned_cost;
};

inline EvalEpisodeResult eval_one_seed(const ExperimentConfig& cfg,
                                       std::uint64_t epi_seed,
                                       const graph::GnnEncoder& enc,
                                       const ldm::LatentDiffusion& dm,
                                       const idm::IdmModel& idm,
                                       const align::ValueHead& value) {
  bidders::DatasetParams dp = cfg.data;
  dp.force_uniform = true;
  nk::Rng srng = nk::Rng(epi_seed).split(0xb1d5);
  auto strategies = bidders::assign_strategies(cfg.auction, dp, srng);

  EvalEpisodeResult out;
  auto baseline_rec = auction::run_episode(
      cfg.auction, epi_seed,
      [&](const auction::AuctionEnv& env) {
        return bidders::scaling_bids(env, strategies);
      });
  out.baseline = auction::compute_kpis(baseline_rec);
  out.baseline_cost = baseline_rec.final_cost;

  align::ActConfig acfg;
  acfg.plan_candidates = cfg.align.plan_candidates;
  acfg.plan_every = cfg.align.plan_every;
  acfg.weights = cfg.align.weights;
  align::Actor actor(cfg.graph, acfg, enc, dm, idm, value, {0}, epi_seed ^ 0xac7ull);
  actor.reset();
  auto aligned_rec = auction::run_episode(
      cfg.auction, epi_seed, [&](const auction::AuctionEnv& env) {
        auto bids = actor.bids(env);
        for (const auto* io : env.live_ios())
          for (int a : io->exposure)
            if (a != 0)
              bids.push_back({a, io->id,
                              bidders::strategy_bid(strategies[std::size_t(a)],
                                                    io->value.at(a))});
        return bids;
      });
  out.aligned = auction::compute_kpis(aligned_rec);
  out.aligned_cost = aligned_rec.final_cost;
  return out;
}

inline void stage_eval_kpi(const ExperimentConfig& cfg, std::uint64_t seed,
                           const Paths& paths) {
  require_file(paths.graph_ckpt(), "eval-kpi");
  require_file(paths.idm_ckpt(), "eval-kpi");
  require_file(paths.value_ckpt(), "eval-kpi");
  fs::path dm_path = fs::exists(paths.ldm_aligned_ckpt())
                         ? paths.ldm_aligned_ckpt()
                         : paths.ldm_ckpt();
  require_file(dm_path, "eval-kpi");
  fs::create_directories(paths.reports());

  auto bundle = make_graph_bundle(cfg, seed);
  bundle.enc.load(paths.graph_ckpt().string());
  bundle.idm.load(paths.idm_ckpt().string());
  nk::Rng pr(seed ^ 0xe4a1ull);
  ldm::LatentDiffusion dm(cfg.ldm, pr);
  dm.load(dm_path.string());
  align::ValueHead value(2 * cfg.graph.d, pr);
  value.load(paths.value_ckpt().string());

  int n_seeds = cfg.eval.seeds;
  std::vector<EvalEpisodeResult> results(std::size_t(n_seeds),
                                         EvalEpisodeResult{});
  int workers = worker_count();
  auto run_range = [&](int lo, int hi) {
    for (int s = lo; s < hi; ++s)
      results[std::size_t(s)] = eval_one_seed(cfg, seed + std::uint64_t(s),
                                              bundle.enc, dm, bundle.idm, value);
  };
  if (workers <= 1) {
    run_range(0, n_seeds);
  } else {
    std::vector<std::thread> pool;
    int chunk = (n_seeds + workers - 1) / workers;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back(run_range, std::min(n_seeds, w * chunk),
                        std::min(n_seeds, (w + 1) * chunk));
    for (auto& th : pool) th.join();
  }

  CsvTable table;
  table.header = {"policy", "seed",  "agent",     "cpa",   "roi",
                  "win_rate", "adherence", "welfare", "cost",  "return"};
  double base_ret = 0, act_ret = 0, act_adh = 1.0;
  for (int s = 0; s < n_seeds; ++s) {
    const auto& r = results[std::size_t(s)];
    for (const auto* rep : {&r.baseline, &r.aligned}) {
      bool is_base = rep == &r.baseline;
      const auto& costs = is_base ? r.baseline_cost : r.aligned_cost;
      for (std::size_t a = 0; a < rep->per_agent.size(); ++a) {
        const auto& row = rep->per_agent[a];
        table.add_row({is_base ? "baseline" : "aligned", std::to_string(s),
                       std::to_string(int(a)),
                       fmt_num(std::isfinite(row.cpa) ? row.cpa : -1.0),
                       fmt_num(row.roi), fmt_num(row.win_rate),
                       fmt_num(row.budget_adherence),
                       fmt_num(row.social_welfare), fmt_num(costs[a]),
                       fmt_num(row.ret)});
      }
    }
    base_ret += r.baseline.per_agent[0].ret;
    act_ret += r.aligned.per_agent[0].ret;
    act_adh = std::min(act_adh, r.aligned.per_agent[0].budget_adherence);
  }
  write_csv((paths.reports() / "kpi.csv").string(), table);
  write_summary(
      (paths.reports() / "kpi_summary.txt").string(),
      provenance(auction::config_hash(cfg.auction), seed),
      {"seeds=" + std::to_string(n_seeds),
       "baseline_mean_return_agent0=" + fmt_num(base_ret / n_seeds),
       "aligned_mean_return_agent0=" + fmt_num(act_ret / n_seeds),
       "aligned_min_adherence_agent0=" + fmt_num(act_adh)});
}

// --- eval: bid accuracy -----------------------------------------------------

struct BidAccuracyRow {
  int agent = 0;
  double l2 = 0.0;
  double baseline_l2 = 0.0;  // mean-bid predictor
};

inline std::vector<BidAccuracyRow> eval_bid_accuracy(
    const ExperimentConfig& cfg, std::uint64_t seed,
    const std::vector<auction::EpisodeRecord>& episodes,
    const graph::GnnEncoder& enc, const idm::IdmModel& idm) {
  nk::NoGradGuard ng;
  int n = cfg.auction.n_agents, d = cfg.graph.d;
  // mean-bid baseline per agent from the same held-out set
  std::vector<double> bid_sum(std::size_t(n), 0.0);
  std::vector<int> bid_cnt(std::size_t(n), 0);
  for (const auto& rec : episodes)
    for (const auto& st : rec.steps)
      for (const auto& b : st.bids) {
        bid_sum[std::size_t(b.agent)] += b.bid;
        bid_cnt[std::size_t(b.agent)] += 1;
      }
  std::vector<double> mean_bid(std::size_t(n), 0.0);
  for (int a = 0; a < n; ++a)
    if (bid_cnt[std::size_t(a)] > 0)
      mean_bid[std::size_t(a)] = bid_sum[std::size_t(a)] / bid_cnt[std::size_t(a)];

  std::vector<idm::BidAccuracy> acc(std::size_t(n), idm::BidAccuracy{});
  std::vector<idm::BidAccuracy> base(std::size_t(n), idm::BidAccuracy{});
  for (const auto& rec : episodes) {
    int T = int(rec.steps.size());
    auto views = graph::step_views_from_record(rec, T);
    nk::Rng grng(seed ^ rec.seed);
    std::vector<graph::EncodeResult> res;
    std::vector<graph::AuctionGraph> graphs;
    for (auto& v : views) {
      graphs.push_back(graph::build_graph(v, cfg.graph, grng));
      res.push_back(enc.encode(graphs.back()));
    }
    for (int t = 0; t + 1 < T; ++t) {
      std::map<int, int> io_pos;
      for (std::size_t k = 0; k < graphs[std::size_t(t)].io_ids.size(); ++k)
        io_pos[graphs[std::size_t(t)].io_ids[k]] = int(k);
      std::map<int, std::map<int, double>> true_bids;  // agent -> io -> bid
      for (const auto& b : rec.steps[std::size_t(t)].bids)
        true_bids[b.agent][b.io_id] = b.bid;
      for (int a = 0; a < n; ++a) {
        auto it = true_bids.find(a);
        if (it == true_bids.end() || it->second.empty()) continue;
        std::vector<int> arep, iorep;
        std::vector<real> ctx_rows, targets;
        auto c = idm::context_vector(rec.agents[std::size_t(a)],
                                     views[std::size_t(t)].cum_cost[std::size_t(a)],
                                     views[std::size_t(t)].cum_value[std::size_t(a)],
                                     t, T, cfg.auction.n_categories);
        for (auto& [io_id, bid] : it->second) {
          auto p = io_pos.find(io_id);
          if (p == io_pos.end()) continue;
          arep.push_back(a);
          iorep.push_back(p->second);
          ctx_rows.insert(ctx_rows.end(), c.begin(), c.end());
          targets.push_back(real(bid));
        }
        if (arep.empty()) continue;
        auto x_t = gather_rows(res[std::size_t(t)].agent_embed, arep);
        auto x_n = gather_rows(res[std::size_t(t) + 1].agent_embed, arep);
        auto f_k = gather_rows(res[std::size_t(t)].io_embed, iorep);
        auto ctx = nk::Tensor<real>::from(
            ctx_rows, {int(arep.size()), int(c.size())});
        auto pred = idm.predict(x_t, x_n, f_k, ctx);
        double sq = 0, bq = 0;
        for (int i = 0; i < int(arep.size()); ++i) {
          double e = double(pred.at(i, 0)) - double(targets[std::size_t(i)]);
          sq += e * e;
          double eb = mean_bid[std::size_t(a)] - double(targets[std::size_t(i)]);
          bq += eb * eb;
        }
        acc[std::size_t(a)].sum_l2 += std::sqrt(sq);
        acc[std::size_t(a)].count += 1;
        base[std::size_t(a)].sum_l2 += std::sqrt(bq);
        base[std::size_t(a)].count += 1;
      }
    }
  }
  std::vector<BidAccuracyRow> rows;
  for (int a = 0; a < n; ++a)
    rows.push_back({a, acc[std::size_t(a)].value(), base[std::size_t(a)].value()});
  return rows;
}

inline void stage_eval_bid_accuracy(const ExperimentConfig& cfg,
                                    std::uint64_t seed, const Paths& paths) {
  require_file(paths.graph_ckpt(), "eval-bid-accuracy");
  require_file(paths.idm_ckpt(), "eval-bid-accuracy");
  require_file(paths.train_meta(), "eval-bid-accuracy");
  require_file(paths.eval_dataset() / "manifest.json", "eval-bid-accuracy");

  // manifest-enforced disjointness between training and held-out shards
  std::ifstream in(paths.train_meta());
  auto meta = nlohmann::json::parse(in);
  auto em = auction::read_manifest(paths.eval_dataset());
  std::uint64_t tr_lo = meta.at("seed_begin").get<std::uint64_t>();
  std::uint64_t tr_hi = tr_lo + std::uint64_t(meta.at("episodes").get<int>());
  std::uint64_t ev_lo = em.seed_begin;
  std::uint64_t ev_hi = ev_lo + std::uint64_t(em.total_episodes);
  if (tr_lo < ev_hi && ev_lo < tr_hi)
    throw auction::InputError(
        "eval-bid-accuracy: held-out shards overlap the training shards");

  auto episodes = auction::read_dataset(paths.eval_dataset());
  auto bundle = make_graph_bundle(cfg, seed);
  bundle.enc.load(paths.graph_ckpt().string());
  bundle.idm.load(paths.idm_ckpt().string());
  auto rows = eval_bid_accuracy(cfg, seed, episodes, bundle.enc, bundle.idm);

  fs::create_directories(paths.reports());
  CsvTable table;
  table.header = {"agent", "l2", "baseline_l2"};
  for (auto& r : rows)
    table.add_row({std::to_string(r.agent), fmt_num(r.l2),
                   fmt_num(r.baseline_l2)});
  write_csv((paths.reports() / "bid_accuracy.csv").string(), table);
  write_summary((paths.reports() / "bid_accuracy_summary.txt").string(),
                provenance(em.config_hash, seed),
                {"episodes=" + std::to_string(episodes.size())});
}

}  // namespace bidlab::harness
