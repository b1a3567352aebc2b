#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "groundlab/episodes.hpp"
#include "groundlab/scorer.hpp"
#include "groundlab/world.hpp"

namespace groundlab::agent {

struct Trajectory {
    std::vector<int> viewpoint_ids;
    double length_m = 0.0;
};

struct Prediction {
    int viewpoint_id = -1;
    int region_index = -1;
    double score = 0.0;
};

enum class RunMode { Explore, PreExplored };

inline const char* to_string(RunMode m) { return m == RunMode::Explore ? "explore" : "pre_explored"; }

inline RunMode run_mode_from_string(const std::string& s) {
    if (s == "explore") return RunMode::Explore;
    if (s == "pre_explored") return RunMode::PreExplored;
    throw std::runtime_error("unknown run mode: " + s);
}

// How candidate regions are grouped into scoring batches.
enum class InferenceKind { Grouped, TwoStep, RandomBatches };

inline const char* to_string(InferenceKind k) {
    switch (k) {
        case InferenceKind::Grouped: return "grouped";
        case InferenceKind::TwoStep: return "two_step";
        case InferenceKind::RandomBatches: return "random_batches";
    }
    return "grouped";
}

inline InferenceKind inference_kind_from_string(const std::string& s) {
    if (s == "grouped") return InferenceKind::Grouped;
    if (s == "two_step") return InferenceKind::TwoStep;
    if (s == "random_batches") return InferenceKind::RandomBatches;
    throw std::runtime_error("unknown inference kind: " + s);
}

struct EpisodeResult {
    world::Episode episode;
    Trajectory trajectory;
    Prediction prediction;
    std::set<int> visited;
    RunMode mode = RunMode::Explore;
};

// ---------------------------------------------------------------------------
// Exploration

// Visits exactly the hop-distance-L ball around start, always heading for the
// nearest unvisited viewpoint (ties by lowest id), walking only ball-internal
// edges. Revisited edges count toward the length.
inline std::pair<Trajectory, std::set<int>> frontier_explore(const world::Environment& env, int start, int L) {
    if (L < 0) throw std::invalid_argument("frontier_explore: L must be >= 0");
    const world::NavGraph& g = env.graph;
    g.viewpoint(start);

    const std::vector<int> hops = hop_distances(g, {start});
    std::set<int> ball;
    for (int v = 0; v < g.size(); ++v)
        if (hops[static_cast<std::size_t>(v)] >= 0 && hops[static_cast<std::size_t>(v)] <= L) ball.insert(v);

    Trajectory traj;
    traj.viewpoint_ids.push_back(start);
    std::set<int> seen{start};
    int cur = start;

    while (seen.size() < ball.size()) {
        // BFS from the current position restricted to the ball.
        std::vector<int> dist(static_cast<std::size_t>(g.size()), -1);
        std::vector<int> parent(static_cast<std::size_t>(g.size()), -1);
        std::queue<int> q;
        dist[static_cast<std::size_t>(cur)] = 0;
        q.push(cur);
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            for (int v : g.viewpoint(u).neighbor_ids) {
                if (!ball.count(v) || dist[static_cast<std::size_t>(v)] != -1) continue;
                dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
                parent[static_cast<std::size_t>(v)] = u;
                q.push(v);
            }
        }

        int target = -1;
        int best = std::numeric_limits<int>::max();
        for (int v : ball) {
            if (seen.count(v) || dist[static_cast<std::size_t>(v)] < 0) continue;
            if (dist[static_cast<std::size_t>(v)] < best) {
                best = dist[static_cast<std::size_t>(v)];
                target = v;
            }
        }
        if (target < 0) break;  // unreachable pocket; cannot happen on a connected graph

        std::vector<int> path;
        for (int u = target; u != -1; u = parent[static_cast<std::size_t>(u)]) path.push_back(u);
        std::reverse(path.begin(), path.end());
        for (std::size_t i = 1; i < path.size(); ++i) {
            traj.length_m += g.edge(path[i - 1], path[i]);
            traj.viewpoint_ids.push_back(path[i]);
            seen.insert(path[i]);
        }
        cur = target;
    }
    return {std::move(traj), std::move(ball)};
}

// ---------------------------------------------------------------------------
// Inference

struct InferOptions {
    scorer::BatchOptions batch;
    InferenceKind kind = InferenceKind::Grouped;
    std::uint64_t shuffle_seed = 0;  // RandomBatches row order
};

// One batch per visited viewpoint; per-viewpoint argmax over candidate rows,
// then a global argmax over the per-viewpoint maxima. All ties resolve to the
// lowest (viewpoint_id, region_index).
inline std::pair<Prediction, scorer::ScoreTable> infer_target(const scorer::ScorerParams& params,
                                                              const lang::Instruction& instr,
                                                              const world::Environment& env,
                                                              const std::set<int>& visited,
                                                              const scorer::BatchOptions& opts,
                                                              const scorer::ContextCache& cache) {
    if (visited.empty()) throw std::invalid_argument("infer_target: visited set is empty");

    Prediction best;
    scorer::ScoreTable table;
    for (int vid : visited) {
        const scorer::ViewpointBatch batch = scorer::assemble_batch(instr, vid, env, opts, params.config, cache);
        const std::vector<double> scores = scorer::forward(params, batch);

        Prediction local;
        for (std::size_t r = 0; r < scores.size(); ++r) {
            if (!batch.candidate_mask[r]) continue;
            const int ridx = batch.region_indices[r];
            table.entries[{vid, ridx}] = scores[r];
            // rows arrive in ascending region index, so strict > keeps the
            // lowest index on ties
            if (local.viewpoint_id < 0 || scores[r] > local.score) local = {vid, ridx, scores[r]};
        }
        if (local.viewpoint_id < 0) continue;
        if (best.viewpoint_id < 0 || local.score > best.score) best = local;
    }
    if (best.viewpoint_id < 0)
        throw std::runtime_error("infer_target: no candidate region among " + std::to_string(visited.size()) +
                                 " visited viewpoints");
    return {best, std::move(table)};
}

inline std::pair<Prediction, scorer::ScoreTable> infer_target(const scorer::ScorerParams& params,
                                                              const lang::Instruction& instr,
                                                              const world::Environment& env,
                                                              const std::set<int>& visited, int k_context) {
    scorer::BatchOptions opts;
    opts.k_context = k_context;
    return infer_target(params, instr, env, visited, opts, scorer::build_context_cache(env));
}

// Step 1 scores a synthetic batch whose rows are per-viewpoint mean features;
// step 2 scores regions only at the winning viewpoint.
inline Prediction two_step_infer(const scorer::ScorerParams& params, const lang::Instruction& instr,
                                 const world::Environment& env, const std::set<int>& visited,
                                 const scorer::BatchOptions& opts, const scorer::ContextCache& cache) {
    if (visited.empty()) throw std::invalid_argument("two_step_infer: visited set is empty");
    const std::vector<int> vids(visited.begin(), visited.end());

    const scorer::ScorerConfig& config = params.config;
    const std::size_t dv = static_cast<std::size_t>(config.feature_dim);

    Vec3 origin = env.graph.viewpoint(vids.front()).position;
    if (opts.frame == scorer::CoordFrame::StartRelative) origin = opts.reference;
    if (opts.frame == scorer::CoordFrame::Absolute) origin = Vec3{0.0, 0.0, 0.0};

    scorer::ViewpointBatch step1;
    step1.origin_viewpoint_id = vids.front();
    step1.text_ids.assign(static_cast<std::size_t>(config.max_text_tokens), lang::Vocabulary::kPad);
    for (std::size_t j = 0; j < instr.tokens.size() && j < static_cast<std::size_t>(config.max_text_tokens); ++j)
        step1.text_ids[j] = instr.tokens[j];
    step1.region_features = Matrix(vids.size(), dv);
    step1.region_posenc = Matrix(vids.size(), 4);
    step1.context_features = Matrix(0, dv);
    for (std::size_t r = 0; r < vids.size(); ++r) {
        const auto& mean = cache.mean_feature[static_cast<std::size_t>(vids[r])];
        for (std::size_t k = 0; k < dv && k < mean.size(); ++k) step1.region_features.at(r, k) = mean[k];
        if (opts.frame != scorer::CoordFrame::None) {
            const Vec3 rel = env.graph.viewpoint(vids[r]).position - origin;
            step1.region_posenc.at(r, 0) = rel.x;
            step1.region_posenc.at(r, 1) = rel.y;
            step1.region_posenc.at(r, 2) = rel.z;
            step1.region_posenc.at(r, 3) = cache.mean_radius[static_cast<std::size_t>(vids[r])];
        }
        step1.candidate_mask.push_back(1);
        step1.region_indices.push_back(static_cast<int>(r));
    }

    const std::vector<double> scores = scorer::forward(params, step1);
    std::size_t winner = 0;
    for (std::size_t r = 1; r < scores.size(); ++r)
        if (scores[r] > scores[winner]) winner = r;

    const std::set<int> only{vids[winner]};
    return infer_target(params, instr, env, only, opts, cache).first;
}

namespace detail {

// All candidate rows across the visited set, shuffled and chunked into
// fixed-size batches that ignore viewpoint boundaries. Rows keep their own
// viewpoint-relative positional encodings; context rows are dropped because a
// mixed batch has no single neighborhood.
inline std::pair<Prediction, scorer::ScoreTable> infer_random_batches(const scorer::ScorerParams& params,
                                                                      const lang::Instruction& instr,
                                                                      const world::Environment& env,
                                                                      const std::set<int>& visited,
                                                                      const scorer::BatchOptions& opts,
                                                                      std::uint64_t shuffle_seed) {
    const scorer::ScorerConfig& config = params.config;
    const std::size_t dv = static_cast<std::size_t>(config.feature_dim);

    std::vector<std::pair<int, int>> rows;  // (viewpoint_id, region_index)
    std::size_t chunk = 0;
    for (int vid : visited) {
        const auto& proposals = world::extract_regions(env, vid);
        chunk = std::max(chunk, proposals.size());
        for (int i = 0; i < static_cast<int>(proposals.size()); ++i)
            if (proposals[static_cast<std::size_t>(i)].candidate) rows.emplace_back(vid, i);
    }
    if (rows.empty()) throw std::runtime_error("infer_target: no candidate region among visited viewpoints");

    Rng rng(mix_seed(shuffle_seed, 0x726e64));
    shuffle(rows, rng);

    Prediction best;
    scorer::ScoreTable table;
    for (std::size_t begin = 0; begin < rows.size(); begin += chunk) {
        const std::size_t end = std::min(rows.size(), begin + chunk);
        const std::size_t n = end - begin;

        scorer::ViewpointBatch batch;
        batch.origin_viewpoint_id = rows[begin].first;
        batch.text_ids.assign(static_cast<std::size_t>(config.max_text_tokens), lang::Vocabulary::kPad);
        for (std::size_t j = 0; j < instr.tokens.size() && j < static_cast<std::size_t>(config.max_text_tokens); ++j)
            batch.text_ids[j] = instr.tokens[j];
        batch.region_features = Matrix(n, dv);
        batch.region_posenc = Matrix(n, 4);
        batch.context_features = Matrix(0, dv);
        for (std::size_t r = 0; r < n; ++r) {
            const auto [vid, ridx] = rows[begin + r];
            const world::RegionProposal& prop = world::extract_regions(env, vid)[static_cast<std::size_t>(ridx)];
            for (std::size_t k = 0; k < dv && k < prop.feature.size(); ++k)
                batch.region_features.at(r, k) = prop.feature[k];
            if (opts.frame != scorer::CoordFrame::None) {
                Vec3 origin = env.graph.viewpoint(vid).position;
                if (opts.frame == scorer::CoordFrame::StartRelative) origin = opts.reference;
                if (opts.frame == scorer::CoordFrame::Absolute) origin = Vec3{0.0, 0.0, 0.0};
                const scorer::PosEnc4 q = scorer::positional_encoding(prop, origin);
                batch.region_posenc.at(r, 0) = q.dx;
                batch.region_posenc.at(r, 1) = q.dy;
                batch.region_posenc.at(r, 2) = q.dz;
                batch.region_posenc.at(r, 3) = q.r;
            }
            batch.candidate_mask.push_back(1);
            batch.region_indices.push_back(ridx);
        }

        const std::vector<double> scores = scorer::forward(params, batch);
        for (std::size_t r = 0; r < n; ++r) {
            const auto [vid, ridx] = rows[begin + r];
            table.entries[{vid, ridx}] = scores[r];
        }
    }

    for (const auto& [key, score] : table.entries) {
        if (best.viewpoint_id < 0 || score > best.score) best = {key.first, key.second, score};
    }
    return {best, std::move(table)};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Episode execution

// Explore mode walks the frontier trajectory and then the shortest path to
// the prediction; PreExplored charges only the direct path from the start
// (exploration already amortized), while inference still sees the full ball.
inline EpisodeResult run_episode(const world::Environment& env, const world::Episode& episode,
                                 const scorer::ScorerParams& params, RunMode mode, int L, const InferOptions& opts,
                                 const scorer::ContextCache& cache) {
    scorer::BatchOptions batch_opts = opts.batch;
    batch_opts.reference = env.graph.viewpoint(episode.start_viewpoint_id).position;

    auto [explore_traj, visited] = frontier_explore(env, episode.start_viewpoint_id, L);

    Prediction pred;
    switch (opts.kind) {
        case InferenceKind::Grouped:
            pred = infer_target(params, episode.instruction, env, visited, batch_opts, cache).first;
            break;
        case InferenceKind::TwoStep:
            pred = two_step_infer(params, episode.instruction, env, visited, batch_opts, cache);
            break;
        case InferenceKind::RandomBatches:
            pred = detail::infer_random_batches(params, episode.instruction, env, visited, batch_opts,
                                                opts.shuffle_seed)
                       .first;
            break;
    }

    EpisodeResult result;
    result.episode = episode;
    result.prediction = pred;
    result.visited = std::move(visited);
    result.mode = mode;

    if (mode == RunMode::Explore) {
        result.trajectory = explore_traj;
        const int tail = explore_traj.viewpoint_ids.back();
        const auto [path, length] = world::shortest_path(env.graph, tail, pred.viewpoint_id);
        for (std::size_t i = 1; i < path.size(); ++i) result.trajectory.viewpoint_ids.push_back(path[i]);
        result.trajectory.length_m += length;
    } else {
        const auto [path, length] = world::shortest_path(env.graph, episode.start_viewpoint_id, pred.viewpoint_id);
        result.trajectory.viewpoint_ids = path;
        result.trajectory.length_m = length;
    }
    return result;
}

inline EpisodeResult run_episode(const world::Environment& env, const world::Episode& episode,
                                 const scorer::ScorerParams& params, RunMode mode, int L, int k_context) {
    InferOptions opts;
    opts.batch.k_context = k_context;
    return run_episode(env, episode, params, mode, L, opts, scorer::build_context_cache(env));
}

}  // namespace groundlab::agent
