#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "groundlab/agent.hpp"
#include "groundlab/rng.hpp"
#include "groundlab/world.hpp"

namespace groundlab::eval {

struct MetricsReport {
    int n_episodes = 0;
    double tl = 0.0;     // mean trajectory length, meters
    double sr = 0.0;     // success rate
    double osr = 0.0;    // oracle success rate
    double spl = 0.0;    // success weighted by path length
    double rgs = 0.0;    // remote grounding success
    double rgspl = 0.0;  // grounding success weighted by path length
};

struct EvalRules {
    enum class Success { Visibility, Radius };
    Success success = Success::Visibility;
    double success_radius_m = 3.0;  // used by the Radius variant only
};

namespace detail {
inline bool viewpoint_succeeds(int viewpoint_id, const world::Environment& env,
                               const world::GroundTruthObject& target, const EvalRules& rules) {
    if (rules.success == EvalRules::Success::Visibility) return target.valid_viewpoint_ids.count(viewpoint_id) > 0;
    return distance(env.graph.viewpoint(viewpoint_id).position, target.center) <= rules.success_radius_m;
}
}  // namespace detail

// True iff the predicted region overlaps the target box with IoU >= 0.5 and
// was selected from a viewpoint where the target is actually visible.
inline bool grounding_success(const agent::EpisodeResult& result, const world::Environment& env) {
    const world::GroundTruthObject& target = env.object(result.episode.target_object_id);
    const auto& proposals = world::extract_regions(env, result.prediction.viewpoint_id);
    if (result.prediction.region_index < 0 ||
        result.prediction.region_index >= static_cast<int>(proposals.size()))
        throw std::runtime_error("grounding_success: prediction region index " +
                                 std::to_string(result.prediction.region_index) + " out of range");
    const world::RegionProposal& region = proposals[static_cast<std::size_t>(result.prediction.region_index)];
    if (!target.valid_viewpoint_ids.count(result.prediction.viewpoint_id)) return false;
    return iou_3d(region.box, target.box) >= 0.5;
}

inline bool navigation_success(const agent::EpisodeResult& result, const world::Environment& env,
                               const EvalRules& rules = {}) {
    const world::GroundTruthObject& target = env.object(result.episode.target_object_id);
    if (result.trajectory.viewpoint_ids.empty()) return false;
    return detail::viewpoint_succeeds(result.trajectory.viewpoint_ids.back(), env, target, rules);
}

inline bool oracle_success(const agent::EpisodeResult& result, const world::Environment& env,
                           const EvalRules& rules = {}) {
    const world::GroundTruthObject& target = env.object(result.episode.target_object_id);
    for (int vid : result.trajectory.viewpoint_ids)
        if (detail::viewpoint_succeeds(vid, env, target, rules)) return true;
    return false;
}

// Aggregates the six standard metrics. SPL terms are S_i * l_i / max(p_i, l_i)
// with l_i the gold path length and p_i the traveled length; a successful
// episode whose gold length is zero contributes 1.0.
inline MetricsReport compute_metrics(const std::vector<agent::EpisodeResult>& results,
                                     const std::map<int, world::Environment>& envs, const EvalRules& rules = {}) {
    if (results.empty()) throw std::invalid_argument("compute_metrics: no results");

    MetricsReport rep;
    rep.n_episodes = static_cast<int>(results.size());
    for (const agent::EpisodeResult& r : results) {
        auto it = envs.find(r.episode.environment_id);
        if (it == envs.end())
            throw std::invalid_argument("compute_metrics: result references unknown environment " +
                                        std::to_string(r.episode.environment_id));
        const world::Environment& env = it->second;

        const bool nav = navigation_success(r, env, rules);
        const bool oracle = oracle_success(r, env, rules);
        const bool grounded = grounding_success(r, env);

        const double p = r.trajectory.length_m;
        const double l = r.episode.gold_path_length;
        const double denom = std::max(p, l);
        const double path_weight = denom > 0.0 ? l / denom : 1.0;

        rep.tl += p;
        rep.sr += nav ? 1.0 : 0.0;
        rep.osr += oracle ? 1.0 : 0.0;
        rep.spl += nav ? path_weight : 0.0;
        rep.rgs += grounded ? 1.0 : 0.0;
        rep.rgspl += grounded ? path_weight : 0.0;
    }
    const double inv = 1.0 / static_cast<double>(rep.n_episodes);
    rep.tl *= inv;
    rep.sr *= inv;
    rep.osr *= inv;
    rep.spl *= inv;
    rep.rgs *= inv;
    rep.rgspl *= inv;
    return rep;
}

struct BootstrapInterval {
    double lo = 0.0;
    double hi = 0.0;
};

// Percentile bootstrap (2.5%/97.5%) of the mean.
inline BootstrapInterval bootstrap_ci(const std::vector<double>& values, int n_resamples = 1000,
                                      std::uint64_t seed = 0) {
    if (values.empty()) throw std::invalid_argument("bootstrap_ci: no values");
    if (n_resamples < 1) throw std::invalid_argument("bootstrap_ci: n_resamples must be >= 1");
    Rng rng(mix_seed(seed, 0x626f6f74));  // "boot"
    std::vector<double> means;
    means.reserve(static_cast<std::size_t>(n_resamples));
    for (int i = 0; i < n_resamples; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < values.size(); ++j) sum += values[uniform_index(rng, values.size())];
        means.push_back(sum / static_cast<double>(values.size()));
    }
    std::sort(means.begin(), means.end());
    const auto pick_at = [&](double q) {
        const std::size_t idx = static_cast<std::size_t>(
            std::min<double>(static_cast<double>(means.size()) - 1.0,
                             std::floor(q * static_cast<double>(means.size()))));
        return means[idx];
    };
    return {pick_at(0.025), pick_at(0.975)};
}

}  // namespace groundlab::eval
