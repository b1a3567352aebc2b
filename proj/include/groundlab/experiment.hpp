#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "groundlab/agent.hpp"
#include "groundlab/config.hpp"
#include "groundlab/episodes.hpp"
#include "groundlab/language.hpp"
#include "groundlab/metrics.hpp"
#include "groundlab/scorer.hpp"
#include "groundlab/world.hpp"

namespace groundlab::exp {

struct Dataset {
    std::map<int, world::Environment> train_envs;
    std::map<int, world::Environment> unseen_envs;
    std::vector<world::Episode> train_episodes;
    std::vector<world::Episode> val_seen;
    std::vector<world::Episode> val_unseen;
    lang::Vocabulary vocab;
};

namespace detail {

inline std::vector<int> split_counts(int total, int parts) {
    std::vector<int> out(static_cast<std::size_t>(parts), total / parts);
    for (int i = 0; i < total % parts; ++i) out[static_cast<std::size_t>(i)] += 1;
    return out;
}

inline void append_episodes(std::vector<world::Episode>& sink, const std::map<int, world::Environment>& envs,
                            int total, std::uint64_t seed, std::uint64_t stream, int d_min, int d_max) {
    const auto counts = split_counts(total, static_cast<int>(envs.size()));
    std::size_t slot = 0;
    for (const auto& [id, env] : envs) {
        const int n = counts[slot++];
        if (n == 0) continue;
        auto eps = world::make_episodes(env, n, mix_seed(seed, stream + static_cast<std::uint64_t>(id)), d_min, d_max);
        sink.insert(sink.end(), eps.begin(), eps.end());
    }
}

}  // namespace detail

// Seen/unseen environments draw from disjoint seed streams; episode seeds are
// derived per environment so datasets are reproducible from (config, seed).
inline Dataset build_dataset(const RunConfig& cfg) {
    validate(cfg);
    Dataset ds;
    ds.vocab = lang::default_vocabulary();

    for (int i = 0; i < cfg.n_train_envs; ++i)
        ds.train_envs.emplace(i, world::generate_environment(mix_seed(cfg.seed, 100 + static_cast<std::uint64_t>(i)),
                                                             cfg.world, i));
    world::WorldParams unseen_world = cfg.world;
    unseen_world.feature_noise *= cfg.unseen_noise_scale;
    for (int i = 0; i < cfg.n_unseen_envs; ++i) {
        const int id = 1000 + i;
        ds.unseen_envs.emplace(id, world::generate_environment(mix_seed(cfg.seed, 100000 + static_cast<std::uint64_t>(i)),
                                                               unseen_world, id));
    }

    detail::append_episodes(ds.train_episodes, ds.train_envs, cfg.train_episodes, cfg.seed, 5000, cfg.d_min, cfg.d_max);
    detail::append_episodes(ds.val_seen, ds.train_envs, cfg.val_seen_episodes, cfg.seed, 6000, cfg.d_min, cfg.d_max);
    if (!ds.unseen_envs.empty())
        detail::append_episodes(ds.val_unseen, ds.unseen_envs, cfg.val_unseen_episodes, cfg.seed, 7000, cfg.d_min,
                                cfg.d_max);
    return ds;
}

// Crowded eval-only maps: same local structure, several times more rooms, so
// a hop-limited search ball covers only a small fraction of the environment.
inline std::pair<std::map<int, world::Environment>, std::vector<world::Episode>> build_distractor_eval(
    const RunConfig& cfg) {
    world::WorldParams w = cfg.world;
    w.n_rooms *= cfg.distractor_scale;
    w.n_viewpoints *= cfg.distractor_scale;
    w.n_objects *= cfg.distractor_scale;
    w.feature_noise *= cfg.unseen_noise_scale;

    std::map<int, world::Environment> envs;
    for (int i = 0; i < cfg.n_unseen_envs; ++i) {
        const int id = 2000 + i;
        envs.emplace(id,
                     world::generate_environment(mix_seed(cfg.seed, 200000 + static_cast<std::uint64_t>(i)), w, id));
    }
    std::vector<world::Episode> episodes;
    detail::append_episodes(episodes, envs, cfg.val_unseen_episodes, cfg.seed, 8000, cfg.d_min, cfg.d_max);
    return {std::move(envs), std::move(episodes)};
}

inline int auto_distance_limit(const std::vector<world::Episode>& train_episodes) {
    int L = 1;
    for (const world::Episode& ep : train_episodes) L = std::max(L, ep.gold_steps);
    return L;
}

inline int resolve_distance_limit(const RunConfig& cfg, const Dataset& ds) {
    return cfg.distance_limit >= 0 ? cfg.distance_limit : auto_distance_limit(ds.train_episodes);
}

inline scorer::ScorerConfig scorer_config(const RunConfig& cfg, const lang::Vocabulary& vocab) {
    scorer::ScorerConfig sc;
    sc.model_dim = cfg.model_dim;
    sc.feature_dim = static_cast<int>(lex::feature_dim());
    sc.vocab_size = static_cast<int>(vocab.size());
    sc.max_text_tokens = cfg.max_text_tokens;
    sc.logit_clamp = cfg.logit_clamp;
    return sc;
}

inline scorer::BatchOptions batch_options(const RunConfig& cfg) {
    scorer::BatchOptions opts;
    opts.k_context = cfg.k_context;
    opts.include_context_regions = cfg.include_context_regions;
    opts.frame = scorer::coord_frame_from_string(cfg.coord_frame);
    return opts;
}

inline scorer::TrainHyper train_hyper(const RunConfig& cfg, std::uint64_t seed) {
    scorer::TrainHyper h;
    h.epochs = cfg.epochs;
    h.batch_episodes = cfg.batch_episodes;
    h.lr = cfg.lr;
    h.momentum = cfg.momentum;
    h.weight_decay = cfg.weight_decay;
    h.warmup_frac = cfg.warmup_frac;
    h.negative_rate = cfg.negative_rate;
    h.env_dropout = cfg.env_dropout;
    h.bootstrap = cfg.bootstrap;
    h.text_mask = lang::mask_mode_from_string(cfg.text_mask);
    h.batch = batch_options(cfg);
    h.seed = seed;
    return h;
}

inline scorer::TrainResult train_model(const Dataset& ds, const RunConfig& cfg, std::uint64_t seed) {
    return scorer::train(ds.train_envs, ds.train_episodes, scorer_config(cfg, ds.vocab), train_hyper(cfg, seed));
}

// Runs every episode of a split through the agent. L < 0 means unlimited
// exploration (the whole graph). restrict_to_valid swaps exploration for an
// oracle visited set -- exactly the viewpoints the target is visible from --
// and charges the direct path to the prediction.
inline std::vector<agent::EpisodeResult> run_split(const std::map<int, world::Environment>& envs,
                                                   const std::vector<world::Episode>& episodes,
                                                   const scorer::ScorerParams& params, const RunConfig& cfg, int L) {
    const agent::RunMode mode = agent::run_mode_from_string(cfg.run_mode);
    const lang::MaskMode mask = lang::mask_mode_from_string(cfg.text_mask);

    agent::InferOptions opts;
    opts.batch = batch_options(cfg);
    opts.kind = agent::inference_kind_from_string(cfg.inference);

    std::map<int, scorer::ContextCache> caches;
    for (const auto& [id, env] : envs) caches.emplace(id, scorer::build_context_cache(env));

    std::vector<agent::EpisodeResult> results;
    results.reserve(episodes.size());
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        const world::Episode& ep = episodes[i];
        const auto it = envs.find(ep.environment_id);
        if (it == envs.end())
            throw std::runtime_error("run_split: episode references unknown environment " +
                                     std::to_string(ep.environment_id));
        const world::Environment& env = it->second;
        const scorer::ContextCache& cache = caches.at(ep.environment_id);
        opts.shuffle_seed = mix_seed(cfg.seed, 0xe9a1 + i);

        world::Episode masked = ep;
        masked.instruction = lang::mask_instruction(ep.instruction, mask);

        agent::EpisodeResult result;
        if (cfg.restrict_to_valid) {
            const world::GroundTruthObject& target = env.object(ep.target_object_id);
            const std::set<int> visited(target.valid_viewpoint_ids.begin(), target.valid_viewpoint_ids.end());
            scorer::BatchOptions batch_opts = opts.batch;
            batch_opts.reference = env.graph.viewpoint(ep.start_viewpoint_id).position;
            result.prediction = agent::infer_target(params, masked.instruction, env, visited, batch_opts, cache).first;
            result.visited = visited;
            result.mode = agent::RunMode::PreExplored;
            const auto [path, length] =
                world::shortest_path(env.graph, ep.start_viewpoint_id, result.prediction.viewpoint_id);
            result.trajectory.viewpoint_ids = path;
            result.trajectory.length_m = length;
        } else {
            const int limit = L >= 0 ? L : world::hop_diameter(env.graph);
            result = agent::run_episode(env, masked, params, mode, limit, opts, cache);
        }
        result.episode = ep;  // report the dataset instruction, not the masked model input
        results.push_back(std::move(result));
    }
    return results;
}

inline eval::EvalRules eval_rules(const RunConfig& cfg) {
    eval::EvalRules rules;
    rules.success = cfg.success_rule == "radius" ? eval::EvalRules::Success::Radius
                                                 : eval::EvalRules::Success::Visibility;
    rules.success_radius_m = cfg.success_radius_m;
    return rules;
}

inline eval::MetricsReport evaluate(const std::vector<agent::EpisodeResult>& results,
                                    const std::map<int, world::Environment>& envs, const RunConfig& cfg) {
    return eval::compute_metrics(results, envs, eval_rules(cfg));
}

// Chance level for grounding: picking uniformly among the candidate regions
// reachable within L hops of the start.
inline double random_candidate_baseline(const std::map<int, world::Environment>& envs,
                                        const std::vector<world::Episode>& episodes, int L) {
    if (episodes.empty()) throw std::invalid_argument("random_candidate_baseline: no episodes");
    double acc = 0.0;
    for (const world::Episode& ep : episodes) {
        const world::Environment& env = envs.at(ep.environment_id);
        const std::vector<int> hops = world::hop_distances(env.graph, {ep.start_viewpoint_id});
        long candidates = 0;
        for (int v = 0; v < env.graph.size(); ++v) {
            if (hops[static_cast<std::size_t>(v)] < 0 || hops[static_cast<std::size_t>(v)] > L) continue;
            for (const world::RegionProposal& p : world::extract_regions(env, v))
                if (p.candidate) ++candidates;
        }
        if (candidates > 0) acc += 1.0 / static_cast<double>(candidates);
    }
    return acc / static_cast<double>(episodes.size());
}

}  // namespace groundlab::exp
