#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "groundlab/episodes.hpp"
#include "groundlab/world.hpp"

using namespace groundlab;

namespace {

// Floyd-Warshall over the same graph; O(n^3) but independent of the BFS /
// Dijkstra code under test.
struct AllPairs {
    std::vector<std::vector<int>> hops;
    std::vector<std::vector<double>> metric;
};

AllPairs floyd_warshall(const world::NavGraph& g) {
    const std::size_t n = static_cast<std::size_t>(g.size());
    const double inf = std::numeric_limits<double>::infinity();
    AllPairs ap;
    ap.hops.assign(n, std::vector<int>(n, 1 << 20));
    ap.metric.assign(n, std::vector<double>(n, inf));
    for (std::size_t i = 0; i < n; ++i) {
        ap.hops[i][i] = 0;
        ap.metric[i][i] = 0.0;
    }
    for (const auto& [key, len] : g.edge_length) {
        const auto a = static_cast<std::size_t>(key.first);
        const auto b = static_cast<std::size_t>(key.second);
        ap.hops[a][b] = ap.hops[b][a] = 1;
        ap.metric[a][b] = ap.metric[b][a] = len;
    }
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                ap.hops[i][j] = std::min(ap.hops[i][j], ap.hops[i][k] + ap.hops[k][j]);
                ap.metric[i][j] = std::min(ap.metric[i][j], ap.metric[i][k] + ap.metric[k][j]);
            }
    return ap;
}

world::WorldParams small_params() {
    world::WorldParams p;
    p.n_viewpoints = 24;
    p.n_rooms = 4;
    p.n_objects = 10;
    p.regions_per_viewpoint = 16;
    p.candidate_regions_per_viewpoint = 12;
    return p;
}

}  // namespace

TEST_CASE("generated graphs are connected and edge lengths match positions") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const world::Environment env = world::generate_environment(seed, small_params());
        REQUIRE(world::is_connected(env.graph));
        for (const auto& [key, len] : env.graph.edge_length) {
            const Vec3 a = env.graph.viewpoint(key.first).position;
            const Vec3 b = env.graph.viewpoint(key.second).position;
            REQUIRE(len == Catch::Approx(distance(a, b)).epsilon(1e-12));
        }
        // neighbor sets mirror the edge map
        for (const auto& vp : env.graph.viewpoints)
            for (int nb : vp.neighbor_ids) REQUIRE(env.graph.has_edge(vp.id, nb));
    }
}

TEST_CASE("hop and metric distances agree with Floyd-Warshall") {
    for (std::uint64_t seed : {7ULL, 8ULL}) {
        const world::Environment env = world::generate_environment(seed, small_params());
        const AllPairs ap = floyd_warshall(env.graph);
        for (int s = 0; s < env.graph.size(); ++s) {
            const std::vector<int> hops = world::hop_distances(env.graph, {s});
            const std::vector<double> metric = world::metric_distances(env.graph, s);
            for (int v = 0; v < env.graph.size(); ++v) {
                REQUIRE(hops[static_cast<std::size_t>(v)] ==
                        ap.hops[static_cast<std::size_t>(s)][static_cast<std::size_t>(v)]);
                REQUIRE(metric[static_cast<std::size_t>(v)] ==
                        Catch::Approx(ap.metric[static_cast<std::size_t>(s)][static_cast<std::size_t>(v)])
                            .margin(1e-9));
            }
        }
    }
}

TEST_CASE("multi-source distances equal the minimum over single sources") {
    const world::Environment env = world::generate_environment(11, small_params());
    const std::vector<int> sources = {0, 5, 9};
    const std::vector<int> hops = world::hop_distances(env.graph, sources);
    const std::vector<double> metric = world::metric_distances(env.graph, sources);
    for (int v = 0; v < env.graph.size(); ++v) {
        int best_h = std::numeric_limits<int>::max();
        double best_m = std::numeric_limits<double>::infinity();
        for (int s : sources) {
            best_h = std::min(best_h, world::hop_distances(env.graph, {s})[static_cast<std::size_t>(v)]);
            best_m = std::min(best_m, world::metric_distances(env.graph, s)[static_cast<std::size_t>(v)]);
        }
        REQUIRE(hops[static_cast<std::size_t>(v)] == best_h);
        REQUIRE(metric[static_cast<std::size_t>(v)] == Catch::Approx(best_m).margin(1e-9));
    }
}

TEST_CASE("shortest_path returns a valid path of the optimal length") {
    const world::Environment env = world::generate_environment(13, small_params());
    const AllPairs ap = floyd_warshall(env.graph);
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const int a = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(env.graph.size())));
        const int b = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(env.graph.size())));
        const auto [path, len] = world::shortest_path(env.graph, a, b);
        REQUIRE(path.front() == a);
        REQUIRE(path.back() == b);
        double walked = 0.0;
        for (std::size_t i = 1; i < path.size(); ++i) {
            REQUIRE(env.graph.has_edge(path[i - 1], path[i]));
            walked += env.graph.edge(path[i - 1], path[i]);
        }
        REQUIRE(len == Catch::Approx(walked).margin(1e-9));
        REQUIRE(len ==
                Catch::Approx(ap.metric[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)]).margin(1e-9));
    }
}

TEST_CASE("hop_diameter equals the Floyd-Warshall eccentricity maximum") {
    const world::Environment env = world::generate_environment(17, small_params());
    const AllPairs ap = floyd_warshall(env.graph);
    int want = 0;
    for (const auto& row : ap.hops)
        for (int h : row) want = std::max(want, h);
    REQUIRE(world::hop_diameter(env.graph) == want);
}

TEST_CASE("valid viewpoints are exactly the same-room viewpoints within range") {
    const world::WorldParams p = small_params();
    const world::Environment env = world::generate_environment(19, p);
    for (const auto& obj : env.objects) {
        std::set<int> expected;
        for (const auto& vp : env.graph.viewpoints)
            if (vp.room_id == obj.room_id && distance(vp.position, obj.center) <= p.los_radius)
                expected.insert(vp.id);
        REQUIRE(obj.valid_viewpoint_ids == expected);
        REQUIRE_FALSE(obj.valid_viewpoint_ids.empty());
    }
}

TEST_CASE("every viewpoint carries the configured number of region rows") {
    const world::WorldParams p = small_params();
    const world::Environment env = world::generate_environment(23, p);
    for (const auto& vp : env.graph.viewpoints) {
        const auto& rows = world::extract_regions(env, vp.id);
        REQUIRE(static_cast<int>(rows.size()) == p.regions_per_viewpoint);
        int candidates = 0;
        for (const auto& r : rows) {
            REQUIRE(r.viewpoint_id == vp.id);
            REQUIRE(static_cast<int>(r.feature.size()) == static_cast<int>(lex::feature_dim()));
            REQUIRE(r.radius == Catch::Approx(r.box.half_diagonal()).margin(1e-12));
            if (r.candidate) ++candidates;
        }
        REQUIRE(candidates == p.candidate_regions_per_viewpoint);
        // candidate rows come first
        for (std::size_t i = 1; i < rows.size(); ++i)
            REQUIRE((rows[i - 1].candidate || !rows[i].candidate));
    }
}

TEST_CASE("every object keeps a well-overlapping candidate row at a valid viewpoint") {
    for (std::uint64_t seed : {29ULL, 31ULL, 37ULL}) {
        const world::Environment env = world::generate_environment(seed, small_params());
        for (const auto& obj : env.objects) {
            bool ok = false;
            for (int vid : obj.valid_viewpoint_ids)
                for (const auto& r : world::extract_regions(env, vid))
                    if (r.candidate && r.source_object_id == obj.id && iou_3d(r.box, obj.box) >= 0.5) ok = true;
            REQUIRE(ok);
        }
    }
}

TEST_CASE("generation is deterministic in the seed and sensitive to it") {
    const world::WorldParams p = small_params();
    const world::Environment a = world::generate_environment(41, p);
    const world::Environment b = world::generate_environment(41, p);
    const world::Environment c = world::generate_environment(42, p);

    REQUIRE(a.room_types == b.room_types);
    REQUIRE(a.graph.edge_length == b.graph.edge_length);
    REQUIRE(a.objects.size() == b.objects.size());
    for (std::size_t i = 0; i < a.objects.size(); ++i) {
        REQUIRE(a.objects[i].category_id == b.objects[i].category_id);
        REQUIRE(a.objects[i].attribute_ids == b.objects[i].attribute_ids);
        REQUIRE(a.objects[i].center == b.objects[i].center);
        REQUIRE(a.objects[i].valid_viewpoint_ids == b.objects[i].valid_viewpoint_ids);
    }
    for (const auto& vp : a.graph.viewpoints) {
        const auto& ra = world::extract_regions(a, vp.id);
        const auto& rb = world::extract_regions(b, vp.id);
        REQUIRE(ra.size() == rb.size());
        for (std::size_t i = 0; i < ra.size(); ++i) {
            REQUIRE(ra[i].feature == rb[i].feature);
            REQUIRE(ra[i].center == rb[i].center);
        }
    }

    bool differs = a.objects.size() != c.objects.size();
    for (std::size_t i = 0; !differs && i < a.objects.size(); ++i)
        differs = !(a.objects[i].center == c.objects[i].center);
    REQUIRE(differs);
}

TEST_CASE("translation preserves relative geometry bit for bit") {
    const world::Environment env = world::generate_environment(43, small_params());
    const Vec3 t{128.0, -256.0, 64.0};  // exactly representable offsets
    const world::Environment moved = world::translate_environment(env, t);

    for (int v = 0; v < env.graph.size(); ++v)
        REQUIRE(moved.graph.viewpoint(v).position == env.graph.viewpoint(v).position + t);
    REQUIRE(moved.graph.edge_length == env.graph.edge_length);

    for (std::size_t i = 0; i < env.objects.size(); ++i) {
        const Vec3 d = moved.objects[i].center - env.objects[i].center;
        REQUIRE(d == t);
    }
    for (const auto& vp : env.graph.viewpoints) {
        const auto& before = world::extract_regions(env, vp.id);
        const auto& after = world::extract_regions(moved, vp.id);
        for (std::size_t i = 0; i < before.size(); ++i) {
            // relative offset to the viewpoint is unchanged, features untouched
            const Vec3 rel_before = before[i].center - env.graph.viewpoint(vp.id).position;
            const Vec3 rel_after = after[i].center - moved.graph.viewpoint(vp.id).position;
            REQUIRE(rel_before == rel_after);
            REQUIRE(before[i].feature == after[i].feature);
            REQUIRE(iou_3d(before[i].box, env.objects.front().box) ==
                    iou_3d(after[i].box, moved.objects.front().box));
        }
    }
}

TEST_CASE("volume IoU matches hand-computed boxes") {
    const Box3 unit{{0, 0, 0}, {1, 1, 1}};
    REQUIRE(iou_3d(unit, unit) == 1.0);

    const Box3 shifted{{0.5, 0, 0}, {1.5, 1, 1}};  // overlap 0.5, union 1.5
    REQUIRE(iou_3d(unit, shifted) == Catch::Approx(0.5 / 1.5).margin(1e-12));

    const Box3 disjoint{{5, 5, 5}, {6, 6, 6}};
    REQUIRE(iou_3d(unit, disjoint) == 0.0);

    const Box3 touching{{1, 0, 0}, {2, 1, 1}};  // shared face only
    REQUIRE(iou_3d(unit, touching) == 0.0);

    const Box3 inside{{0.25, 0.25, 0.25}, {0.75, 0.75, 0.75}};  // volume 1/8
    REQUIRE(iou_3d(unit, inside) == Catch::Approx(0.125).margin(1e-12));
}

TEST_CASE("parameter validation rejects nonsense") {
    world::WorldParams p = small_params();
    p.n_viewpoints = 0;
    REQUIRE_THROWS_AS(world::generate_environment(1, p), std::invalid_argument);

    p = small_params();
    p.candidate_regions_per_viewpoint = p.regions_per_viewpoint + 1;
    REQUIRE_THROWS_AS(world::generate_environment(1, p), std::invalid_argument);

    p = small_params();
    p.room_affinity = 1.5;
    REQUIRE_THROWS_AS(world::generate_environment(1, p), std::invalid_argument);

    p = small_params();
    p.feature_noise = -0.1;
    REQUIRE_THROWS_AS(world::generate_environment(1, p), std::invalid_argument);
}

TEST_CASE("episodes honour the hop-distance window and gold annotations") {
    const world::Environment env = world::generate_environment(47, small_params());
    const auto episodes = world::make_episodes(env, 60, 5, 1, 3);
    REQUIRE(episodes.size() == 60);
    for (const auto& ep : episodes) {
        REQUIRE(ep.environment_id == env.id);
        const auto& target = env.object(ep.target_object_id);
        const std::vector<int> valid(target.valid_viewpoint_ids.begin(), target.valid_viewpoint_ids.end());
        const auto hops = world::hop_distances(env.graph, valid);
        const auto lengths = world::metric_distances(env.graph, valid);
        REQUIRE(ep.gold_steps == hops[static_cast<std::size_t>(ep.start_viewpoint_id)]);
        REQUIRE(ep.gold_steps >= 1);
        REQUIRE(ep.gold_steps <= 3);
        REQUIRE(ep.gold_path_length ==
                Catch::Approx(lengths[static_cast<std::size_t>(ep.start_viewpoint_id)]).margin(1e-9));
        REQUIRE_FALSE(ep.instruction.tokens.empty());
    }
}

TEST_CASE("episode generation is deterministic and rejects impossible windows") {
    const world::Environment env = world::generate_environment(53, small_params());
    const auto a = world::make_episodes(env, 20, 9, 1, 3);
    const auto b = world::make_episodes(env, 20, 9, 1, 3);
    REQUIRE(a == b);
    REQUIRE_THROWS_AS(world::make_episodes(env, 5, 9, 500, 600), std::runtime_error);
    REQUIRE_THROWS_AS(world::make_episodes(env, 5, 9, 3, 1), std::invalid_argument);
}

TEST_CASE("co-visible same-category pairs exist so category words stay ambiguous") {
    const auto has_pair = [](const world::Environment& env) {
        for (const auto& a : env.objects)
            for (const auto& b : env.objects) {
                if (a.id >= b.id || a.category_id != b.category_id) continue;
                for (int v : a.valid_viewpoint_ids)
                    if (b.valid_viewpoint_ids.count(v)) return true;
            }
        return false;
    };
    int with_pair = 0;
    for (std::uint64_t seed : {61ULL, 67ULL, 71ULL})
        if (has_pair(world::generate_environment(seed, small_params()))) ++with_pair;
    REQUIRE(with_pair == 3);
}
