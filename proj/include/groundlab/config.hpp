#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "groundlab/agent.hpp"
#include "groundlab/metrics.hpp"
#include "groundlab/scorer.hpp"
#include "groundlab/serialize.hpp"
#include "groundlab/world.hpp"

namespace groundlab::exp {

// One document drives every command. Every field has a default; a parsed
// config re-serializes byte-identically (fixed field order, exact doubles).
struct RunConfig {
    world::WorldParams world;

    // dataset
    int n_train_envs = 20;
    int n_unseen_envs = 5;
    int train_episodes = 400;
    int val_seen_episodes = 100;
    int val_unseen_episodes = 100;
    int d_min = 1;
    int d_max = 4;
    double unseen_noise_scale = 1.5;  // appearance shift: unseen envs get noisier features

    // model
    int model_dim = 32;
    int max_text_tokens = 24;
    double logit_clamp = 30.0;

    // training
    int epochs = 300;
    int batch_episodes = 8;
    double lr = 0.5;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double warmup_frac = 0.1;
    double negative_rate = 0.8;
    double env_dropout = 0.0;
    bool bootstrap = false;
    std::string text_mask = "full_text";

    // inference
    int distance_limit = -1;  // steps; -1 means max training gold_steps
    int k_context = 8;
    bool include_context_regions = true;
    std::string coord_frame = "viewpoint_relative";
    std::string run_mode = "explore";
    std::string inference = "grouped";
    bool restrict_to_valid = false;  // score only the target's valid viewpoints

    // evaluation
    std::string success_rule = "visibility";
    double success_radius_m = 3.0;

    // ablation
    std::vector<std::string> ablation_rows = {
        "full",          "no_posenc",           "no_context_proposals", "no_nbhd_features",
        "no_augmentation", "no_viewpoint_grouping", "no_finetuning",      "full_distractor",
        "no_distance_limit", "two_step",          "text_only_nouns",     "text_no_nouns",
    };
    int ablation_seeds = 3;
    int distractor_scale = 3;  // room/viewpoint/object multiplier for distractor maps

    // provenance and paths
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    std::string data_dir;      // input directory; defaults to out_dir
    std::string weights_path;  // defaults to <data_dir>/weights.json
    std::string split = "val_unseen";

    RunConfig() {
        world.regions_per_viewpoint = 32;
        world.candidate_regions_per_viewpoint = 16;
        world.feature_noise = 0.15;
    }
};

inline io::json to_json(const RunConfig& c) {
    return io::json{{"schema_version", io::kSchemaVersion},
                    {"kind", "run_config"},
                    {"world", io::to_json(c.world)},
                    {"n_train_envs", c.n_train_envs},
                    {"n_unseen_envs", c.n_unseen_envs},
                    {"train_episodes", c.train_episodes},
                    {"val_seen_episodes", c.val_seen_episodes},
                    {"val_unseen_episodes", c.val_unseen_episodes},
                    {"d_min", c.d_min},
                    {"d_max", c.d_max},
                    {"unseen_noise_scale", c.unseen_noise_scale},
                    {"model_dim", c.model_dim},
                    {"max_text_tokens", c.max_text_tokens},
                    {"logit_clamp", c.logit_clamp},
                    {"epochs", c.epochs},
                    {"batch_episodes", c.batch_episodes},
                    {"lr", c.lr},
                    {"momentum", c.momentum},
                    {"weight_decay", c.weight_decay},
                    {"warmup_frac", c.warmup_frac},
                    {"negative_rate", c.negative_rate},
                    {"env_dropout", c.env_dropout},
                    {"bootstrap", c.bootstrap},
                    {"text_mask", c.text_mask},
                    {"distance_limit", c.distance_limit},
                    {"k_context", c.k_context},
                    {"include_context_regions", c.include_context_regions},
                    {"coord_frame", c.coord_frame},
                    {"run_mode", c.run_mode},
                    {"inference", c.inference},
                    {"restrict_to_valid", c.restrict_to_valid},
                    {"success_rule", c.success_rule},
                    {"success_radius_m", c.success_radius_m},
                    {"ablation_rows", c.ablation_rows},
                    {"ablation_seeds", c.ablation_seeds},
                    {"distractor_scale", c.distractor_scale},
                    {"seed", c.seed},
                    {"out_dir", c.out_dir},
                    {"data_dir", c.data_dir},
                    {"weights_path", c.weights_path},
                    {"split", c.split}};
}

namespace detail {

inline void apply_world_field(world::WorldParams& w, const std::string& key, const io::json& v,
                              const std::string& where) {
    if (key == "n_viewpoints") w.n_viewpoints = v.get<int>();
    else if (key == "n_rooms") w.n_rooms = v.get<int>();
    else if (key == "n_objects") w.n_objects = v.get<int>();
    else if (key == "regions_per_viewpoint") w.regions_per_viewpoint = v.get<int>();
    else if (key == "candidate_regions_per_viewpoint") w.candidate_regions_per_viewpoint = v.get<int>();
    else if (key == "grid_spacing") w.grid_spacing = v.get<double>();
    else if (key == "los_radius") w.los_radius = v.get<double>();
    else if (key == "feature_noise") w.feature_noise = v.get<double>();
    else if (key == "depth_noise") w.depth_noise = v.get<double>();
    else if (key == "room_affinity") w.room_affinity = v.get<double>();
    else if (key == "solvability_retries") w.solvability_retries = v.get<int>();
    else throw std::runtime_error("unknown config field '" + where + ".world." + key + "'");
}

}  // namespace detail

// Fields absent from the document keep their defaults; unknown fields are
// rejected so toggle typos fail loudly.
inline RunConfig run_config_from_json(const io::json& j, const std::string& where = "run config") {
    io::require_schema(j, "run_config", where);
    RunConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "schema_version" || key == "kind") continue;
        else if (key == "world") {
            for (const auto& [wk, wv] : v.items()) detail::apply_world_field(c.world, wk, wv, where);
        }
        else if (key == "n_train_envs") c.n_train_envs = v.get<int>();
        else if (key == "n_unseen_envs") c.n_unseen_envs = v.get<int>();
        else if (key == "train_episodes") c.train_episodes = v.get<int>();
        else if (key == "val_seen_episodes") c.val_seen_episodes = v.get<int>();
        else if (key == "val_unseen_episodes") c.val_unseen_episodes = v.get<int>();
        else if (key == "d_min") c.d_min = v.get<int>();
        else if (key == "d_max") c.d_max = v.get<int>();
        else if (key == "unseen_noise_scale") c.unseen_noise_scale = v.get<double>();
        else if (key == "model_dim") c.model_dim = v.get<int>();
        else if (key == "max_text_tokens") c.max_text_tokens = v.get<int>();
        else if (key == "logit_clamp") c.logit_clamp = v.get<double>();
        else if (key == "epochs") c.epochs = v.get<int>();
        else if (key == "batch_episodes") c.batch_episodes = v.get<int>();
        else if (key == "lr") c.lr = v.get<double>();
        else if (key == "momentum") c.momentum = v.get<double>();
        else if (key == "weight_decay") c.weight_decay = v.get<double>();
        else if (key == "warmup_frac") c.warmup_frac = v.get<double>();
        else if (key == "negative_rate") c.negative_rate = v.get<double>();
        else if (key == "env_dropout") c.env_dropout = v.get<double>();
        else if (key == "bootstrap") c.bootstrap = v.get<bool>();
        else if (key == "text_mask") c.text_mask = v.get<std::string>();
        else if (key == "distance_limit") c.distance_limit = v.get<int>();
        else if (key == "k_context") c.k_context = v.get<int>();
        else if (key == "include_context_regions") c.include_context_regions = v.get<bool>();
        else if (key == "coord_frame") c.coord_frame = v.get<std::string>();
        else if (key == "run_mode") c.run_mode = v.get<std::string>();
        else if (key == "inference") c.inference = v.get<std::string>();
        else if (key == "restrict_to_valid") c.restrict_to_valid = v.get<bool>();
        else if (key == "success_rule") c.success_rule = v.get<std::string>();
        else if (key == "success_radius_m") c.success_radius_m = v.get<double>();
        else if (key == "ablation_rows") c.ablation_rows = v.get<std::vector<std::string>>();
        else if (key == "ablation_seeds") c.ablation_seeds = v.get<int>();
        else if (key == "distractor_scale") c.distractor_scale = v.get<int>();
        else if (key == "seed") c.seed = v.get<std::uint64_t>();
        else if (key == "out_dir") c.out_dir = v.get<std::string>();
        else if (key == "data_dir") c.data_dir = v.get<std::string>();
        else if (key == "weights_path") c.weights_path = v.get<std::string>();
        else if (key == "split") c.split = v.get<std::string>();
        else throw std::runtime_error("unknown config field '" + key + "'");
    }
    return c;
}

// Fail fast on inconsistent values and unparsable mode strings.
inline void validate(const RunConfig& c) {
    lang::mask_mode_from_string(c.text_mask);
    scorer::coord_frame_from_string(c.coord_frame);
    agent::run_mode_from_string(c.run_mode);
    agent::inference_kind_from_string(c.inference);
    if (c.success_rule != "visibility" && c.success_rule != "radius")
        throw std::runtime_error("unknown success rule: " + c.success_rule);
    if (c.split != "train" && c.split != "val_seen" && c.split != "val_unseen")
        throw std::runtime_error("unknown split: " + c.split);
    if (c.n_train_envs < 1) throw std::runtime_error("config: n_train_envs must be >= 1");
    if (c.d_min > c.d_max) throw std::runtime_error("config: d_min exceeds d_max");
    if (c.train_episodes < 1) throw std::runtime_error("config: train_episodes must be >= 1");
    if (c.ablation_seeds < 1) throw std::runtime_error("config: ablation_seeds must be >= 1");
    if (c.distractor_scale < 1) throw std::runtime_error("config: distractor_scale must be >= 1");
    if (c.unseen_noise_scale < 0.0) throw std::runtime_error("config: unseen_noise_scale must be >= 0");
}

}  // namespace groundlab::exp
