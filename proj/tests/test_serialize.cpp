#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "groundlab/serialize.hpp"

using namespace groundlab;
using Catch::Matchers::ContainsSubstring;

namespace {

world::WorldParams small_params() {
    world::WorldParams p;
    p.n_viewpoints = 24;
    p.n_rooms = 4;
    p.n_objects = 10;
    p.regions_per_viewpoint = 16;
    p.candidate_regions_per_viewpoint = 12;
    return p;
}

std::filesystem::path temp_file(const std::string& stem) {
    return std::filesystem::temp_directory_path() / ("groundlab_test_" + stem + ".json");
}

scorer::ScorerConfig test_config() {
    scorer::ScorerConfig c;
    c.vocab_size = lang::shared_default_vocabulary().size();
    return c;
}

}  // namespace

TEST_CASE("environments survive a JSON round trip bit for bit") {
    const world::Environment env = world::generate_environment(71, small_params(), 4);
    const world::Environment back = io::environment_from_json(io::to_json(env));

    REQUIRE(back.id == env.id);
    REQUIRE(back.seed == env.seed);
    REQUIRE(back.room_types == env.room_types);
    REQUIRE(back.graph.edge_length == env.graph.edge_length);
    REQUIRE(back.graph.size() == env.graph.size());
    for (int v = 0; v < env.graph.size(); ++v) {
        REQUIRE(back.graph.viewpoint(v).position == env.graph.viewpoint(v).position);
        REQUIRE(back.graph.viewpoint(v).room_id == env.graph.viewpoint(v).room_id);
        REQUIRE(back.graph.viewpoint(v).neighbor_ids == env.graph.viewpoint(v).neighbor_ids);
    }
    REQUIRE(back.objects.size() == env.objects.size());
    for (std::size_t i = 0; i < env.objects.size(); ++i) {
        REQUIRE(back.objects[i].id == env.objects[i].id);
        REQUIRE(back.objects[i].category_id == env.objects[i].category_id);
        REQUIRE(back.objects[i].attribute_ids == env.objects[i].attribute_ids);
        REQUIRE(back.objects[i].center == env.objects[i].center);
        REQUIRE(back.objects[i].box.min == env.objects[i].box.min);
        REQUIRE(back.objects[i].box.max == env.objects[i].box.max);
        REQUIRE(back.objects[i].room_id == env.objects[i].room_id);
        REQUIRE(back.objects[i].valid_viewpoint_ids == env.objects[i].valid_viewpoint_ids);
    }
    for (const auto& [vid, rows] : env.regions) {
        const auto& brows = back.regions.at(vid);
        REQUIRE(brows.size() == rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            REQUIRE(brows[r].viewpoint_id == rows[r].viewpoint_id);
            REQUIRE(brows[r].feature == rows[r].feature);
            REQUIRE(brows[r].center == rows[r].center);
            REQUIRE(brows[r].radius == rows[r].radius);
            REQUIRE(brows[r].box.min == rows[r].box.min);
            REQUIRE(brows[r].box.max == rows[r].box.max);
            REQUIRE(brows[r].source_object_id == rows[r].source_object_id);
            REQUIRE(brows[r].candidate == rows[r].candidate);
        }
    }
}

TEST_CASE("scorer parameters round-trip exactly, including through a file") {
    const scorer::ScorerParams params = scorer::ScorerParams::init(test_config(), 909);
    REQUIRE(io::scorer_params_from_json(io::to_json(params)) == params);

    const auto path = temp_file("params");
    io::save_json_file(io::to_json(params), path.string());
    const scorer::ScorerParams loaded = io::scorer_params_from_json(io::load_json_file(path.string()));
    REQUIRE(loaded == params);
    std::filesystem::remove(path);
}

TEST_CASE("episodes and vocabulary round-trip") {
    const world::Environment env = world::generate_environment(73, small_params());
    const auto episodes = world::make_episodes(env, 12, 2, 1, 3);
    REQUIRE(io::episodes_from_json(io::episodes_to_json(episodes)) == episodes);

    const lang::Vocabulary vocab = lang::default_vocabulary();
    const lang::Vocabulary back = io::vocabulary_from_json(io::to_json(vocab));
    REQUIRE(back.tokens() == vocab.tokens());
}

TEST_CASE("episode results and metric reports round-trip") {
    const world::Environment env = world::generate_environment(73, small_params());
    const auto episodes = world::make_episodes(env, 3, 2, 1, 3);
    const auto params = scorer::ScorerParams::init(test_config(), 5);
    const agent::EpisodeResult r =
        agent::run_episode(env, episodes.front(), params, agent::RunMode::Explore, 3, /*k_context=*/4);

    const auto back = io::results_from_json(io::results_to_json({r}));
    REQUIRE(back.size() == 1);
    REQUIRE(back[0].episode == r.episode);
    REQUIRE(back[0].trajectory.viewpoint_ids == r.trajectory.viewpoint_ids);
    REQUIRE(back[0].trajectory.length_m == r.trajectory.length_m);
    REQUIRE(back[0].prediction.viewpoint_id == r.prediction.viewpoint_id);
    REQUIRE(back[0].prediction.region_index == r.prediction.region_index);
    REQUIRE(back[0].prediction.score == r.prediction.score);
    REQUIRE(back[0].visited == r.visited);
    REQUIRE(back[0].mode == r.mode);

    eval::MetricsReport m;
    m.n_episodes = 7;
    m.tl = 12.3456789012345;
    m.sr = 0.3;
    m.osr = 0.9;
    m.spl = 0.1234567890123456;
    m.rgs = 0.25;
    m.rgspl = 0.0625;
    const eval::MetricsReport mb = io::metrics_from_json(io::to_json(m));
    REQUIRE(mb.n_episodes == m.n_episodes);
    REQUIRE(mb.tl == m.tl);
    REQUIRE(mb.sr == m.sr);
    REQUIRE(mb.osr == m.osr);
    REQUIRE(mb.spl == m.spl);
    REQUIRE(mb.rgs == m.rgs);
    REQUIRE(mb.rgspl == m.rgspl);
}

TEST_CASE("world params round-trip and JSON output is stable") {
    world::WorldParams p = small_params();
    p.feature_noise = 0.17;
    p.room_affinity = 0.61;
    const world::WorldParams q = io::world_params_from_json(io::to_json(p));
    REQUIRE(io::to_json(q).dump() == io::to_json(p).dump());
}

TEST_CASE("missing files, bad JSON and wrong schemas fail with distinct messages") {
    REQUIRE_THROWS_WITH(io::load_json_file("/nonexistent/nowhere.json"), ContainsSubstring("cannot open file"));

    const auto garbled = temp_file("garbled");
    {
        std::ofstream out(garbled);
        out << "{not json at all\n";
    }
    REQUIRE_THROWS_WITH(io::load_json_file(garbled.string()), ContainsSubstring("invalid JSON"));
    std::filesystem::remove(garbled);

    const world::Environment env = world::generate_environment(71, small_params());
    io::json j = io::to_json(env);
    j["kind"] = "picnic";
    REQUIRE_THROWS_WITH(io::environment_from_json(j), ContainsSubstring("schema mismatch"));

    io::json k = io::to_json(env);
    k.erase("objects");
    REQUIRE_THROWS_WITH(io::environment_from_json(k), ContainsSubstring("missing field 'objects'"));

    io::json v = io::to_json(lang::default_vocabulary());
    v["tokens"].erase("<pad>");
    REQUIRE_THROWS_WITH(io::vocabulary_from_json(v), ContainsSubstring("schema mismatch"));
}

TEST_CASE("tampered tensor shapes are rejected") {
    const scorer::ScorerParams params = scorer::ScorerParams::init(test_config(), 11);

    io::json j = io::to_json(params);
    j["tensors"]["embedding"]["rows"] = 3;
    REQUIRE_THROWS_WITH(io::scorer_params_from_json(j), ContainsSubstring("tensor 'embedding' has shape"));

    io::json k = io::to_json(params);
    k["tensors"]["score_weight"]["data"].erase(0);
    REQUIRE_THROWS_WITH(io::scorer_params_from_json(k), ContainsSubstring("data length"));

    io::json m = io::to_json(params);
    m["tensors"].erase("attn_query");
    REQUIRE_THROWS_WITH(io::scorer_params_from_json(m), ContainsSubstring("missing field 'attn_query'"));

    scorer::ScorerParams poisoned = params;
    poisoned.score_bias.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_WITH(io::to_json(poisoned), ContainsSubstring("non-finite"));
}
