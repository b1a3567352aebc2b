#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "groundlab/agent.hpp"
#include "groundlab/episodes.hpp"
#include "groundlab/language.hpp"
#include "groundlab/metrics.hpp"
#include "groundlab/scorer.hpp"
#include "groundlab/world.hpp"

namespace groundlab::io {

using json = nlohmann::ordered_json;

constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// File plumbing. Missing files, unparsable files, and wrong schemas each get
// their own message.

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("invalid JSON in " + path + ": " + e.what());
    }
    return j;
}

inline void save_json_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write file: " + path);
}

inline void require_schema(const json& j, const std::string& kind, const std::string& where) {
    if (!j.is_object() || !j.contains("schema_version") || !j.contains("kind"))
        throw std::runtime_error("schema mismatch in " + where + ": missing schema_version/kind header");
    if (j.at("kind").get<std::string>() != kind || j.at("schema_version").get<int>() != kSchemaVersion) {
        throw std::runtime_error("schema mismatch in " + where + ": expected kind '" + kind + "' version " +
                                 std::to_string(kSchemaVersion) + ", found kind '" +
                                 j.at("kind").get<std::string>() + "' version " +
                                 std::to_string(j.at("schema_version").get<int>()));
    }
}

inline const json& require_field(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw std::runtime_error("schema mismatch in " + where + ": missing field '" + key + "'");
    return j.at(key);
}

// ---------------------------------------------------------------------------
// Geometry

inline json to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

inline Vec3 vec3_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw std::runtime_error("schema mismatch: expected 3-element position array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json to_json(const Box3& b) { return json{{"min", to_json(b.min)}, {"max", to_json(b.max)}}; }

inline Box3 box_from_json(const json& j) {
    return {vec3_from_json(require_field(j, "min", "box")), vec3_from_json(require_field(j, "max", "box"))};
}

// ---------------------------------------------------------------------------
// World parameters

inline json to_json(const world::WorldParams& p) {
    return json{{"n_viewpoints", p.n_viewpoints},
                {"n_rooms", p.n_rooms},
                {"n_objects", p.n_objects},
                {"regions_per_viewpoint", p.regions_per_viewpoint},
                {"candidate_regions_per_viewpoint", p.candidate_regions_per_viewpoint},
                {"grid_spacing", p.grid_spacing},
                {"los_radius", p.los_radius},
                {"feature_noise", p.feature_noise},
                {"depth_noise", p.depth_noise},
                {"room_affinity", p.room_affinity},
                {"solvability_retries", p.solvability_retries}};
}

inline world::WorldParams world_params_from_json(const json& j, const std::string& where = "world params") {
    world::WorldParams p;
    p.n_viewpoints = require_field(j, "n_viewpoints", where).get<int>();
    p.n_rooms = require_field(j, "n_rooms", where).get<int>();
    p.n_objects = require_field(j, "n_objects", where).get<int>();
    p.regions_per_viewpoint = require_field(j, "regions_per_viewpoint", where).get<int>();
    p.candidate_regions_per_viewpoint = require_field(j, "candidate_regions_per_viewpoint", where).get<int>();
    p.grid_spacing = require_field(j, "grid_spacing", where).get<double>();
    p.los_radius = require_field(j, "los_radius", where).get<double>();
    p.feature_noise = require_field(j, "feature_noise", where).get<double>();
    p.depth_noise = require_field(j, "depth_noise", where).get<double>();
    p.room_affinity = require_field(j, "room_affinity", where).get<double>();
    p.solvability_retries = require_field(j, "solvability_retries", where).get<int>();
    return p;
}

// ---------------------------------------------------------------------------
// Environment

inline json to_json(const world::Environment& env) {
    json viewpoints = json::array();
    for (const world::Viewpoint& vp : env.graph.viewpoints) {
        viewpoints.push_back(json{{"id", vp.id},
                                  {"position", to_json(vp.position)},
                                  {"room_id", vp.room_id}});
    }
    json edges = json::array();
    for (const auto& [key, len] : env.graph.edge_length)
        edges.push_back(json::array({key.first, key.second, len}));

    json objects = json::array();
    for (const world::GroundTruthObject& obj : env.objects) {
        objects.push_back(json{{"id", obj.id},
                               {"category_id", obj.category_id},
                               {"attribute_ids", obj.attribute_ids},
                               {"center", to_json(obj.center)},
                               {"box", to_json(obj.box)},
                               {"room_id", obj.room_id},
                               {"valid_viewpoint_ids", obj.valid_viewpoint_ids}});
    }

    json regions = json::object();
    for (const auto& [vid, rows] : env.regions) {
        json arr = json::array();
        for (const world::RegionProposal& r : rows) {
            json rj{{"feature", r.feature},
                    {"center", to_json(r.center)},
                    {"radius", r.radius},
                    {"box", to_json(r.box)},
                    {"source_object_id", r.source_object_id ? json(*r.source_object_id) : json(nullptr)},
                    {"candidate", r.candidate}};
            arr.push_back(std::move(rj));
        }
        regions[std::to_string(vid)] = std::move(arr);
    }

    return json{{"schema_version", kSchemaVersion},
                {"kind", "environment"},
                {"id", env.id},
                {"seed", env.seed},
                {"room_types", env.room_types},
                {"viewpoints", std::move(viewpoints)},
                {"edges", std::move(edges)},
                {"objects", std::move(objects)},
                {"regions", std::move(regions)}};
}

inline world::Environment environment_from_json(const json& j, const std::string& where = "environment") {
    require_schema(j, "environment", where);
    world::Environment env;
    env.id = require_field(j, "id", where).get<int>();
    env.seed = require_field(j, "seed", where).get<std::uint64_t>();
    env.room_types = require_field(j, "room_types", where).get<std::vector<int>>();

    for (const json& vj : require_field(j, "viewpoints", where)) {
        world::Viewpoint vp;
        vp.id = require_field(vj, "id", where).get<int>();
        vp.position = vec3_from_json(require_field(vj, "position", where));
        vp.room_id = require_field(vj, "room_id", where).get<int>();
        env.graph.viewpoints.push_back(vp);
    }
    for (const json& ej : require_field(j, "edges", where)) {
        const int a = ej.at(0).get<int>();
        const int b = ej.at(1).get<int>();
        env.graph.edge_length[std::minmax(a, b)] = ej.at(2).get<double>();
        env.graph.viewpoints.at(static_cast<std::size_t>(a)).neighbor_ids.insert(b);
        env.graph.viewpoints.at(static_cast<std::size_t>(b)).neighbor_ids.insert(a);
    }
    for (const json& oj : require_field(j, "objects", where)) {
        world::GroundTruthObject obj;
        obj.id = require_field(oj, "id", where).get<int>();
        obj.category_id = require_field(oj, "category_id", where).get<int>();
        const auto attrs = require_field(oj, "attribute_ids", where).get<std::vector<int>>();
        if (attrs.size() != 4) throw std::runtime_error("schema mismatch in " + where + ": attribute_ids must have 4 entries");
        std::copy(attrs.begin(), attrs.end(), obj.attribute_ids.begin());
        obj.center = vec3_from_json(require_field(oj, "center", where));
        obj.box = box_from_json(require_field(oj, "box", where));
        obj.room_id = require_field(oj, "room_id", where).get<int>();
        for (const json& v : require_field(oj, "valid_viewpoint_ids", where)) obj.valid_viewpoint_ids.insert(v.get<int>());
        env.objects.push_back(std::move(obj));
    }
    for (const auto& [key, arr] : require_field(j, "regions", where).items()) {
        std::vector<world::RegionProposal> rows;
        for (const json& rj : arr) {
            world::RegionProposal r;
            r.viewpoint_id = std::stoi(key);
            r.feature = require_field(rj, "feature", where).get<std::vector<double>>();
            r.center = vec3_from_json(require_field(rj, "center", where));
            r.radius = require_field(rj, "radius", where).get<double>();
            r.box = box_from_json(require_field(rj, "box", where));
            const json& src = require_field(rj, "source_object_id", where);
            if (!src.is_null()) r.source_object_id = src.get<int>();
            r.candidate = require_field(rj, "candidate", where).get<bool>();
            rows.push_back(std::move(r));
        }
        env.regions[std::stoi(key)] = std::move(rows);
    }
    return env;
}

// ---------------------------------------------------------------------------
// Instructions and episodes

inline json to_json(const lang::Instruction& instr) {
    json tags = json::array();
    for (lang::PosTag t : instr.pos_tags) tags.push_back(lang::to_string(t));
    return json{{"tokens", instr.tokens},
                {"text", instr.text},
                {"pos_tags", std::move(tags)},
                {"room_clause_end", instr.room_clause_end}};
}

inline lang::Instruction instruction_from_json(const json& j, const std::string& where = "instruction") {
    lang::Instruction instr;
    instr.tokens = require_field(j, "tokens", where).get<std::vector<int>>();
    instr.text = require_field(j, "text", where).get<std::string>();
    for (const json& t : require_field(j, "pos_tags", where))
        instr.pos_tags.push_back(lang::pos_tag_from_string(t.get<std::string>()));
    instr.room_clause_end = require_field(j, "room_clause_end", where).get<int>();
    return instr;
}

inline json to_json(const world::Episode& ep) {
    return json{{"environment_id", ep.environment_id},
                {"start_viewpoint_id", ep.start_viewpoint_id},
                {"target_object_id", ep.target_object_id},
                {"gold_path_length", ep.gold_path_length},
                {"gold_steps", ep.gold_steps},
                {"instruction", to_json(ep.instruction)}};
}

inline world::Episode episode_from_json(const json& j, const std::string& where = "episode") {
    world::Episode ep;
    ep.environment_id = require_field(j, "environment_id", where).get<int>();
    ep.start_viewpoint_id = require_field(j, "start_viewpoint_id", where).get<int>();
    ep.target_object_id = require_field(j, "target_object_id", where).get<int>();
    ep.gold_path_length = require_field(j, "gold_path_length", where).get<double>();
    ep.gold_steps = require_field(j, "gold_steps", where).get<int>();
    ep.instruction = instruction_from_json(require_field(j, "instruction", where), where);
    return ep;
}

inline json episodes_to_json(const std::vector<world::Episode>& eps) {
    json arr = json::array();
    for (const world::Episode& ep : eps) arr.push_back(to_json(ep));
    return json{{"schema_version", kSchemaVersion}, {"kind", "episodes"}, {"episodes", std::move(arr)}};
}

inline std::vector<world::Episode> episodes_from_json(const json& j, const std::string& where = "episodes") {
    require_schema(j, "episodes", where);
    std::vector<world::Episode> out;
    for (const json& ej : require_field(j, "episodes", where)) out.push_back(episode_from_json(ej, where));
    return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

inline json to_json(const lang::Vocabulary& vocab) {
    json map = json::object();
    for (int id = 0; id < vocab.size(); ++id) map[vocab.token_of(id)] = id;
    return json{{"schema_version", kSchemaVersion}, {"kind", "vocabulary"}, {"tokens", std::move(map)}};
}

inline lang::Vocabulary vocabulary_from_json(const json& j, const std::string& where = "vocabulary") {
    require_schema(j, "vocabulary", where);
    const json& map = require_field(j, "tokens", where);
    std::vector<std::string> by_id(map.size());
    for (const auto& [token, id] : map.items()) {
        const std::size_t idx = id.get<std::size_t>();
        if (idx >= by_id.size()) throw std::runtime_error("schema mismatch in " + where + ": token ids not dense");
        by_id[idx] = token;
    }
    if (by_id.size() < 2 || by_id[0] != "<pad>" || by_id[1] != "<unk>")
        throw std::runtime_error("schema mismatch in " + where + ": specials <pad>/<unk> must occupy ids 0/1");
    lang::Vocabulary vocab;
    for (std::size_t i = 2; i < by_id.size(); ++i) vocab.add(by_id[i]);
    return vocab;
}

// ---------------------------------------------------------------------------
// Scorer parameters

inline json to_json(const scorer::ScorerConfig& c) {
    return json{{"model_dim", c.model_dim},
                {"feature_dim", c.feature_dim},
                {"vocab_size", c.vocab_size},
                {"max_text_tokens", c.max_text_tokens},
                {"logit_clamp", c.logit_clamp}};
}

inline scorer::ScorerConfig scorer_config_from_json(const json& j, const std::string& where = "scorer config") {
    scorer::ScorerConfig c;
    c.model_dim = require_field(j, "model_dim", where).get<int>();
    c.feature_dim = require_field(j, "feature_dim", where).get<int>();
    c.vocab_size = require_field(j, "vocab_size", where).get<int>();
    c.max_text_tokens = require_field(j, "max_text_tokens", where).get<int>();
    c.logit_clamp = require_field(j, "logit_clamp", where).get<double>();
    return c;
}

inline json to_json(const scorer::ScorerParams& p) {
    if (!p.all_finite()) throw std::runtime_error("scorer params contain non-finite values; refusing to save");
    json tensors = json::object();
    const auto names = scorer::ScorerParams::tensor_names();
    const auto mats = p.tensors();
    for (std::size_t i = 0; i < scorer::ScorerParams::kTensorCount; ++i) {
        tensors[names[i]] = json{{"rows", mats[i]->rows()}, {"cols", mats[i]->cols()}, {"data", mats[i]->data()}};
    }
    return json{{"schema_version", kSchemaVersion},
                {"kind", "scorer_params"},
                {"config", to_json(p.config)},
                {"tensors", std::move(tensors)}};
}

inline scorer::ScorerParams scorer_params_from_json(const json& j, const std::string& where = "scorer params") {
    require_schema(j, "scorer_params", where);
    scorer::ScorerParams p = scorer::ScorerParams::zeros(scorer_config_from_json(require_field(j, "config", where)));
    const json& tensors = require_field(j, "tensors", where);
    const auto names = scorer::ScorerParams::tensor_names();
    const auto mats = p.tensors();
    for (std::size_t i = 0; i < scorer::ScorerParams::kTensorCount; ++i) {
        const json& tj = require_field(tensors, names[i], where);
        const std::size_t rows = require_field(tj, "rows", where).get<std::size_t>();
        const std::size_t cols = require_field(tj, "cols", where).get<std::size_t>();
        if (rows != mats[i]->rows() || cols != mats[i]->cols())
            throw std::runtime_error("schema mismatch in " + where + ": tensor '" + names[i] + "' has shape " +
                                     std::to_string(rows) + "x" + std::to_string(cols) + ", expected " +
                                     std::to_string(mats[i]->rows()) + "x" + std::to_string(mats[i]->cols()));
        mats[i]->data() = require_field(tj, "data", where).get<std::vector<double>>();
        if (mats[i]->data().size() != rows * cols)
            throw std::runtime_error("schema mismatch in " + where + ": tensor '" + names[i] + "' data length");
    }
    return p;
}

// ---------------------------------------------------------------------------
// Episode results and metrics

inline json to_json(const agent::EpisodeResult& r) {
    return json{{"episode", to_json(r.episode)},
                {"trajectory", json{{"viewpoint_ids", r.trajectory.viewpoint_ids}, {"length_m", r.trajectory.length_m}}},
                {"prediction", json{{"viewpoint_id", r.prediction.viewpoint_id},
                                    {"region_index", r.prediction.region_index},
                                    {"score", r.prediction.score}}},
                {"visited", r.visited},
                {"mode", agent::to_string(r.mode)}};
}

inline agent::EpisodeResult episode_result_from_json(const json& j, const std::string& where = "episode result") {
    agent::EpisodeResult r;
    r.episode = episode_from_json(require_field(j, "episode", where), where);
    const json& tj = require_field(j, "trajectory", where);
    r.trajectory.viewpoint_ids = require_field(tj, "viewpoint_ids", where).get<std::vector<int>>();
    r.trajectory.length_m = require_field(tj, "length_m", where).get<double>();
    const json& pj = require_field(j, "prediction", where);
    r.prediction.viewpoint_id = require_field(pj, "viewpoint_id", where).get<int>();
    r.prediction.region_index = require_field(pj, "region_index", where).get<int>();
    r.prediction.score = require_field(pj, "score", where).get<double>();
    for (const json& v : require_field(j, "visited", where)) r.visited.insert(v.get<int>());
    r.mode = agent::run_mode_from_string(require_field(j, "mode", where).get<std::string>());
    return r;
}

inline json results_to_json(const std::vector<agent::EpisodeResult>& results) {
    json arr = json::array();
    for (const agent::EpisodeResult& r : results) arr.push_back(to_json(r));
    return json{{"schema_version", kSchemaVersion}, {"kind", "episode_results"}, {"results", std::move(arr)}};
}

inline std::vector<agent::EpisodeResult> results_from_json(const json& j, const std::string& where = "episode results") {
    require_schema(j, "episode_results", where);
    std::vector<agent::EpisodeResult> out;
    for (const json& rj : require_field(j, "results", where)) out.push_back(episode_result_from_json(rj, where));
    return out;
}

inline json to_json(const eval::MetricsReport& m) {
    return json{{"n_episodes", m.n_episodes}, {"tl", m.tl},   {"sr", m.sr},       {"osr", m.osr},
                {"spl", m.spl},               {"rgs", m.rgs}, {"rgspl", m.rgspl}};
}

inline eval::MetricsReport metrics_from_json(const json& j, const std::string& where = "metrics") {
    eval::MetricsReport m;
    m.n_episodes = require_field(j, "n_episodes", where).get<int>();
    m.tl = require_field(j, "tl", where).get<double>();
    m.sr = require_field(j, "sr", where).get<double>();
    m.osr = require_field(j, "osr", where).get<double>();
    m.spl = require_field(j, "spl", where).get<double>();
    m.rgs = require_field(j, "rgs", where).get<double>();
    m.rgspl = require_field(j, "rgspl", where).get<double>();
    return m;
}

}  // namespace groundlab::io
