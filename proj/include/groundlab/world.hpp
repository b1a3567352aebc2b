#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "groundlab/geometry.hpp"
#include "groundlab/lexicon.hpp"
#include "groundlab/rng.hpp"

namespace groundlab::world {

struct WorldParams {
    int n_viewpoints = 63;
    int n_rooms = 7;
    int n_objects = 24;
    int regions_per_viewpoint = 64;             // total rows observed at a viewpoint
    int candidate_regions_per_viewpoint = 24;   // rows eligible for final selection
    double grid_spacing = 2.0;                  // meters between neighboring viewpoints
    double los_radius = 3.0;                    // same-room visibility radius, meters
    double feature_noise = 0.1;                 // sigma of i.i.d. feature noise
    double depth_noise = 0.05;                  // sigma of along-ray center noise, meters
    double room_affinity = 0.7;                 // chance an object lands in its preferred room
    int solvability_retries = 25;
};

struct Viewpoint {
    int id = 0;
    Vec3 position;
    int room_id = 0;
    std::set<int> neighbor_ids;
};

struct NavGraph {
    std::vector<Viewpoint> viewpoints;
    std::map<std::pair<int, int>, double> edge_length;  // keys normalized (a<b)

    const Viewpoint& viewpoint(int id) const {
        if (id < 0 || id >= static_cast<int>(viewpoints.size()))
            throw std::runtime_error("NavGraph: unknown viewpoint id " + std::to_string(id));
        return viewpoints[static_cast<std::size_t>(id)];
    }

    double edge(int a, int b) const {
        auto it = edge_length.find(std::minmax(a, b));
        if (it == edge_length.end())
            throw std::runtime_error("NavGraph: no edge " + std::to_string(a) + "-" + std::to_string(b));
        return it->second;
    }

    bool has_edge(int a, int b) const { return edge_length.count(std::minmax(a, b)) > 0; }
    int size() const { return static_cast<int>(viewpoints.size()); }
};

inline void add_edge(NavGraph& g, int a, int b) {
    if (a == b) throw std::runtime_error("NavGraph: self-edge rejected");
    const double len = distance(g.viewpoint(a).position, g.viewpoint(b).position);
    g.edge_length[std::minmax(a, b)] = len;
    g.viewpoints[static_cast<std::size_t>(a)].neighbor_ids.insert(b);
    g.viewpoints[static_cast<std::size_t>(b)].neighbor_ids.insert(a);
}

struct GroundTruthObject {
    int id = 0;
    int category_id = 0;
    std::array<int, 4> attribute_ids{};  // color, size, material, relation-anchor object id (-1 none)
    Vec3 center;
    Box3 box;
    int room_id = 0;
    std::set<int> valid_viewpoint_ids;
};

struct RegionProposal {
    int viewpoint_id = 0;
    std::vector<double> feature;
    Vec3 center;
    double radius = 0.0;
    Box3 box;
    std::optional<int> source_object_id;
    bool candidate = false;
};

struct Environment {
    int id = 0;
    NavGraph graph;
    std::vector<GroundTruthObject> objects;
    std::map<int, std::vector<RegionProposal>> regions;
    std::uint64_t seed = 0;
    std::vector<int> room_types;  // room id -> index into lex::kRooms

    const GroundTruthObject& object(int id_) const {
        if (id_ < 0 || id_ >= static_cast<int>(objects.size()))
            throw std::runtime_error("Environment: unknown object id " + std::to_string(id_));
        return objects[static_cast<std::size_t>(id_)];
    }
};

// ---------------------------------------------------------------------------
// Graph algorithms

// Hop distance from a set of sources; unreached nodes get -1.
inline std::vector<int> hop_distances(const NavGraph& g, const std::vector<int>& sources) {
    std::vector<int> dist(static_cast<std::size_t>(g.size()), -1);
    std::queue<int> q;
    for (int s : sources) {
        if (dist[static_cast<std::size_t>(s)] == -1) {
            dist[static_cast<std::size_t>(s)] = 0;
            q.push(s);
        }
    }
    while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (int v : g.viewpoint(u).neighbor_ids) {
            if (dist[static_cast<std::size_t>(v)] == -1) {
                dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
                q.push(v);
            }
        }
    }
    return dist;
}

inline bool is_connected(const NavGraph& g) {
    if (g.size() == 0) return false;
    const std::vector<int> d = hop_distances(g, {0});
    return std::none_of(d.begin(), d.end(), [](int x) { return x < 0; });
}

inline int hop_diameter(const NavGraph& g) {
    int best = 0;
    for (int s = 0; s < g.size(); ++s) {
        const std::vector<int> d = hop_distances(g, {s});
        for (int x : d) best = std::max(best, x);
    }
    return best;
}

// Metric shortest path (Dijkstra). Pops are ordered by (distance, id) so the
// result is deterministic.
inline std::pair<std::vector<int>, double> shortest_path(const NavGraph& g, int a, int b) {
    g.viewpoint(a);
    g.viewpoint(b);
    if (a == b) return {{a}, 0.0};

    const std::size_t n = static_cast<std::size_t>(g.size());
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::vector<int> parent(n, -1);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
    dist[static_cast<std::size_t>(a)] = 0.0;
    pq.emplace(0.0, a);
    while (!pq.empty()) {
        const auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[static_cast<std::size_t>(u)]) continue;
        if (u == b) break;
        for (int v : g.viewpoint(u).neighbor_ids) {
            const double nd = d + g.edge(u, v);
            if (nd < dist[static_cast<std::size_t>(v)]) {
                dist[static_cast<std::size_t>(v)] = nd;
                parent[static_cast<std::size_t>(v)] = u;
                pq.emplace(nd, v);
            }
        }
    }
    if (!std::isfinite(dist[static_cast<std::size_t>(b)]))
        throw std::runtime_error("shortest_path: viewpoint " + std::to_string(b) + " unreachable from " +
                                 std::to_string(a));
    std::vector<int> path;
    for (int u = b; u != -1; u = parent[static_cast<std::size_t>(u)]) path.push_back(u);
    std::reverse(path.begin(), path.end());
    return {path, dist[static_cast<std::size_t>(b)]};
}

// Metric distances from a set of sources to all viewpoints.
inline std::vector<double> metric_distances(const NavGraph& g, const std::vector<int>& sources) {
    const std::size_t n = static_cast<std::size_t>(g.size());
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
    for (int a : sources) {
        dist[static_cast<std::size_t>(a)] = 0.0;
        pq.emplace(0.0, a);
    }
    while (!pq.empty()) {
        const auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[static_cast<std::size_t>(u)]) continue;
        for (int v : g.viewpoint(u).neighbor_ids) {
            const double nd = d + g.edge(u, v);
            if (nd < dist[static_cast<std::size_t>(v)]) {
                dist[static_cast<std::size_t>(v)] = nd;
                pq.emplace(nd, v);
            }
        }
    }
    return dist;
}

inline std::vector<double> metric_distances(const NavGraph& g, int a) {
    return metric_distances(g, std::vector<int>{a});
}

// ---------------------------------------------------------------------------
// Feature encoding

// Concatenated one-hot blocks (category, color, size, material).
inline std::vector<double> encode_attributes(int category, int color, int size, int material) {
    std::vector<double> f(lex::feature_dim(), 0.0);
    std::size_t off = 0;
    f[off + static_cast<std::size_t>(category)] = 1.0;
    off += lex::num_categories();
    f[off + static_cast<std::size_t>(color)] = 1.0;
    off += lex::num_colors();
    f[off + static_cast<std::size_t>(size)] = 1.0;
    off += lex::num_sizes();
    f[off + static_cast<std::size_t>(material)] = 1.0;
    return f;
}

inline std::vector<double> noisy_feature(const std::vector<double>& base, double sigma, Rng& rng) {
    std::vector<double> f = base;
    if (sigma > 0.0)
        for (double& v : f) v += normal(rng, 0.0, sigma);
    return f;
}

// ---------------------------------------------------------------------------
// Generation

namespace detail {

constexpr double kCameraHeight = 1.4;

inline void validate_params(const WorldParams& p) {
    const auto fail = [](const std::string& what) {
        throw std::invalid_argument("WorldParams: " + what);
    };
    if (p.n_viewpoints < 1) fail("n_viewpoints must be >= 1");
    if (p.n_rooms < 1) fail("n_rooms must be >= 1");
    if (p.n_objects < 1) fail("n_objects must be >= 1");
    if (p.regions_per_viewpoint < 1) fail("regions_per_viewpoint must be >= 1");
    if (p.candidate_regions_per_viewpoint < 1) fail("candidate_regions_per_viewpoint must be >= 1");
    if (p.candidate_regions_per_viewpoint > p.regions_per_viewpoint)
        fail("candidate_regions_per_viewpoint exceeds regions_per_viewpoint");
    if (p.grid_spacing <= 0.0) fail("grid_spacing must be positive");
    if (p.los_radius <= 0.0) fail("los_radius must be positive");
    if (p.feature_noise < 0.0) fail("feature_noise must be >= 0");
    if (p.depth_noise < 0.0) fail("depth_noise must be >= 0");
    if (p.room_affinity < 0.0 || p.room_affinity > 1.0) fail("room_affinity must be in [0,1]");
}

inline NavGraph build_graph(const WorldParams& p) {
    NavGraph g;
    const int n_rooms = std::min(p.n_rooms, p.n_viewpoints);
    const int room_cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_rooms))));

    // Near-equal split of viewpoints over rooms.
    std::vector<int> room_sizes(static_cast<std::size_t>(n_rooms), p.n_viewpoints / n_rooms);
    for (int r = 0; r < p.n_viewpoints % n_rooms; ++r) room_sizes[static_cast<std::size_t>(r)]++;

    int max_room = 0;
    for (int s : room_sizes) max_room = std::max(max_room, s);
    const int cell_cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(max_room))));
    const int cell_rows = (max_room + cell_cols - 1) / cell_cols;
    // One extra spacing between rooms acts as the doorway gap.
    const double pitch_x = (cell_cols + 1) * p.grid_spacing;
    const double pitch_y = (cell_rows + 1) * p.grid_spacing;

    std::vector<std::vector<int>> room_members(static_cast<std::size_t>(n_rooms));
    for (int r = 0; r < n_rooms; ++r) {
        const int rx = r % room_cols;
        const int ry = r / room_cols;
        const Vec3 origin{rx * pitch_x, ry * pitch_y, kCameraHeight};
        const int m = room_sizes[static_cast<std::size_t>(r)];
        const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(m))));
        for (int i = 0; i < m; ++i) {
            Viewpoint vp;
            vp.id = static_cast<int>(g.viewpoints.size());
            vp.room_id = r;
            vp.position = snap(origin + Vec3{(i % cols) * p.grid_spacing, (i / cols) * p.grid_spacing, 0.0});
            room_members[static_cast<std::size_t>(r)].push_back(vp.id);
            g.viewpoints.push_back(vp);
        }
        // 4-neighborhood grid edges inside the room.
        for (int i = 0; i < m; ++i) {
            const int id = room_members[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)];
            if (i % cols + 1 < cols && i + 1 < m)
                add_edge(g, id, room_members[static_cast<std::size_t>(r)][static_cast<std::size_t>(i + 1)]);
            if (i + cols < m)
                add_edge(g, id, room_members[static_cast<std::size_t>(r)][static_cast<std::size_t>(i + cols)]);
        }
    }

    // Door edges between grid-adjacent rooms: connect the closest pair.
    const auto connect_rooms = [&](int ra, int rb) {
        double best = std::numeric_limits<double>::infinity();
        std::pair<int, int> pair{-1, -1};
        for (int a : room_members[static_cast<std::size_t>(ra)]) {
            for (int b : room_members[static_cast<std::size_t>(rb)]) {
                const double d = distance(g.viewpoint(a).position, g.viewpoint(b).position);
                if (d < best - 1e-12) {
                    best = d;
                    pair = {a, b};
                }
            }
        }
        if (pair.first >= 0) add_edge(g, pair.first, pair.second);
    };
    for (int r = 0; r < n_rooms; ++r) {
        if (r % room_cols + 1 < room_cols && r + 1 < n_rooms) connect_rooms(r, r + 1);
        if (r + room_cols < n_rooms) connect_rooms(r, r + room_cols);
    }
    return g;
}

inline std::vector<int> assign_room_types(int n_rooms, Rng& rng) {
    std::vector<int> room_types(static_cast<std::size_t>(n_rooms));
    for (int r = 0; r < n_rooms; ++r) room_types[static_cast<std::size_t>(r)] = r % static_cast<int>(lex::num_rooms());
    shuffle(room_types, rng);
    return room_types;
}

inline std::vector<GroundTruthObject> place_objects(const NavGraph& g, const std::vector<int>& room_types,
                                                    const WorldParams& p, Rng& rng) {
    const int n_rooms = std::min(p.n_rooms, p.n_viewpoints);
    std::vector<std::vector<int>> room_members(static_cast<std::size_t>(n_rooms));
    for (const Viewpoint& vp : g.viewpoints) room_members[static_cast<std::size_t>(vp.room_id)].push_back(vp.id);

    // Each environment reuses a narrow color/material palette, so an attribute
    // word rarely pins down an object by itself.
    const auto draw_palette = [&rng](std::size_t n, std::size_t k) {
        std::vector<int> all(n);
        std::iota(all.begin(), all.end(), 0);
        shuffle(all, rng);
        all.resize(std::min(n, k));
        return all;
    };
    const std::vector<int> palette_colors = draw_palette(lex::num_colors(), 3);
    const std::vector<int> palette_materials = draw_palette(lex::num_materials(), 2);

    std::set<std::array<int, 4>> used_combos;
    std::vector<GroundTruthObject> objects;
    int prev_anchor_vp = -1;
    for (int i = 0; i < p.n_objects; ++i) {
        GroundTruthObject obj;
        obj.id = i;

        // Roughly a third of objects are rivals: same category, room and
        // anchor viewpoint as the previous object but a different look in
        // every attribute slot, so a category word alone stays ambiguous and
        // adjectives carry real weight.
        const bool rival = i % 2 == 1 && !objects.empty() && bernoulli(rng, 0.7);

        // Attributes; retry a few times to keep combos unique within the env
        // (and rivals separable in all three attribute slots).
        std::array<int, 4> combo{};
        for (int attempt = 0; attempt < 40; ++attempt) {
            combo = {rival ? objects.back().category_id : static_cast<int>(uniform_index(rng, lex::num_categories())),
                     pick(palette_colors, rng),
                     static_cast<int>(uniform_index(rng, lex::num_sizes())),
                     pick(palette_materials, rng)};
            if (rival) {
                const GroundTruthObject& prev = objects.back();
                if (combo[1] == prev.attribute_ids[0] || combo[2] == prev.attribute_ids[1] ||
                    combo[3] == prev.attribute_ids[2])
                    continue;
            }
            if (used_combos.insert(combo).second) break;
        }
        obj.category_id = combo[0];
        obj.attribute_ids = {combo[1], combo[2], combo[3], -1};

        // Preferred room when a room of that type exists.
        const int wanted_type = lex::kCategoryRoomAffinity[static_cast<std::size_t>(obj.category_id)];
        std::vector<int> matching;
        for (int r = 0; r < n_rooms; ++r)
            if (room_types[static_cast<std::size_t>(r)] == wanted_type) matching.push_back(r);
        if (rival)
            obj.room_id = objects.back().room_id;
        else if (!matching.empty() && bernoulli(rng, p.room_affinity))
            obj.room_id = pick(matching, rng);
        else
            obj.room_id = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n_rooms)));

        // Center near an anchor viewpoint, comfortably inside the visibility
        // radius so the valid set is never empty. Rivals share their
        // partner's anchor so the pair is seen side by side.
        const int anchor_vp = rival ? prev_anchor_vp : pick(room_members[static_cast<std::size_t>(obj.room_id)], rng);
        prev_anchor_vp = anchor_vp;
        const Vec3 vp_pos = g.viewpoint(anchor_vp).position;
        const double max_r = 0.9 * p.los_radius;
        const double zb = 0.6 * p.los_radius;
        const double z = uniform_real(rng, std::max(0.3, vp_pos.z - zb), std::min(1.8, vp_pos.z + zb));
        const double dz = z - vp_pos.z;
        const double horiz = std::sqrt(std::max(1e-4, max_r * max_r - dz * dz));
        const double ang = uniform_real(rng, 0.0, 6.283185307179586);
        const double rad = horiz * std::sqrt(uniform_real(rng));
        obj.center = snap(Vec3{vp_pos.x + rad * std::cos(ang), vp_pos.y + rad * std::sin(ang), z});

        const Vec3 half = {uniform_real(rng, 0.15, 0.45), uniform_real(rng, 0.15, 0.45),
                           uniform_real(rng, 0.15, 0.45)};
        obj.box = {snap(obj.center - half), snap(obj.center + half)};

        for (const Viewpoint& vp : g.viewpoints)
            if (vp.room_id == obj.room_id && distance(vp.position, obj.center) <= p.los_radius)
                obj.valid_viewpoint_ids.insert(vp.id);

        objects.push_back(std::move(obj));
    }

    // Relation anchors: nearest same-room object of a different category
    // ("the mug near the mug" helps nobody).
    for (GroundTruthObject& obj : objects) {
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (const GroundTruthObject& other : objects) {
            if (other.id == obj.id || other.room_id != obj.room_id || other.category_id == obj.category_id) continue;
            const double d = distance(obj.center, other.center);
            if (d < best_d) {
                best_d = d;
                best = other.id;
            }
        }
        obj.attribute_ids[3] = best;
    }
    return objects;
}

// Spurious detections fall in two families: low-confidence smears with a
// random attribute readout, and ghosts -- duplicate detections of a real
// object that inherit its crisp attributes, so appearance alone cannot rule
// them out. Both come out shard-sized and hug the far shell of the view
// range; geometry is the reliable tell.
inline RegionProposal make_clutter(int viewpoint_id, const Vec3& vp_pos, bool candidate,
                                   const std::vector<GroundTruthObject>& objects, const WorldParams& p, Rng& rng) {
    RegionProposal r;
    r.viewpoint_id = viewpoint_id;
    r.candidate = candidate;
    std::vector<double> base;
    if (!objects.empty() && bernoulli(rng, 0.5)) {
        const GroundTruthObject& src = objects[uniform_index(rng, objects.size())];
        base = encode_attributes(src.category_id, src.attribute_ids[0], src.attribute_ids[1], src.attribute_ids[2]);
    } else {
        const int cat = static_cast<int>(uniform_index(rng, lex::num_categories()));
        const int col = static_cast<int>(uniform_index(rng, lex::num_colors()));
        const int siz = static_cast<int>(uniform_index(rng, lex::num_sizes()));
        const int mat = static_cast<int>(uniform_index(rng, lex::num_materials()));
        base = encode_attributes(cat, col, siz, mat);
        const double confidence = uniform_real(rng, 0.1, 0.55);
        for (double& v : base) v *= confidence;
    }
    r.feature = noisy_feature(base, p.feature_noise, rng);

    const double zb = 0.6 * p.los_radius;
    const double z = uniform_real(rng, std::max(0.3, vp_pos.z - zb), std::min(1.8, vp_pos.z + zb));
    const double dz = z - vp_pos.z;
    const double max_r = 0.95 * p.los_radius;
    const double horiz = std::sqrt(std::max(1e-4, max_r * max_r - dz * dz));
    const double ang = uniform_real(rng, 0.0, 6.283185307179586);
    const double rad = horiz * std::sqrt(uniform_real(rng, 0.45, 1.0));
    r.center = snap(Vec3{vp_pos.x + rad * std::cos(ang), vp_pos.y + rad * std::sin(ang), z});
    const Vec3 half = {uniform_real(rng, 0.05, 0.18), uniform_real(rng, 0.05, 0.18), uniform_real(rng, 0.05, 0.18)};
    r.box = {snap(r.center - half), snap(r.center + half)};
    r.radius = r.box.half_diagonal();
    return r;
}

inline std::map<int, std::vector<RegionProposal>> synthesize_regions(const NavGraph& g,
                                                                     const std::vector<GroundTruthObject>& objects,
                                                                     const WorldParams& p, Rng& rng) {
    std::map<int, std::vector<RegionProposal>> out;
    for (const Viewpoint& vp : g.viewpoints) {
        std::vector<RegionProposal> rows;

        // Visible objects, nearest first.
        std::vector<std::pair<double, int>> visible;
        for (const GroundTruthObject& obj : objects)
            if (obj.valid_viewpoint_ids.count(vp.id))
                visible.emplace_back(distance(vp.position, obj.center), obj.id);
        std::sort(visible.begin(), visible.end());

        const int budget = p.candidate_regions_per_viewpoint;
        for (std::size_t i = 0; i < visible.size() && static_cast<int>(i) < budget; ++i) {
            const GroundTruthObject& obj = objects[static_cast<std::size_t>(visible[i].second)];
            RegionProposal r;
            r.viewpoint_id = vp.id;
            r.candidate = true;
            r.source_object_id = obj.id;
            r.feature = noisy_feature(
                encode_attributes(obj.category_id, obj.attribute_ids[0], obj.attribute_ids[1], obj.attribute_ids[2]),
                p.feature_noise, rng);

            // Median-depth placement noise acts along the viewing ray.
            Vec3 ray = obj.center - vp.position;
            const double len = ray.norm();
            ray = len > 1e-9 ? ray * (1.0 / len) : Vec3{1.0, 0.0, 0.0};
            const double eps = p.depth_noise > 0.0 ? normal(rng, 0.0, p.depth_noise) : 0.0;
            r.center = snap(obj.center + ray * eps);
            const Vec3 delta = r.center - obj.center;  // exact on the snapped grid
            r.box = obj.box.translated(delta);
            r.radius = r.box.half_diagonal();
            rows.push_back(std::move(r));
        }
        while (static_cast<int>(rows.size()) < budget)
            rows.push_back(make_clutter(vp.id, vp.position, true, objects, p, rng));
        while (static_cast<int>(rows.size()) < p.regions_per_viewpoint)
            rows.push_back(make_clutter(vp.id, vp.position, false, objects, p, rng));
        out[vp.id] = std::move(rows);
    }
    return out;
}

// Every object must keep at least one candidate proposal with IoU >= 0.5 at
// some valid viewpoint, otherwise an episode on it would be unsolvable.
inline bool solvable(const Environment& env) {
    for (const GroundTruthObject& obj : env.objects) {
        bool ok = false;
        for (int vid : obj.valid_viewpoint_ids) {
            for (const RegionProposal& r : env.regions.at(vid)) {
                if (r.candidate && r.source_object_id == obj.id && iou_3d(r.box, obj.box) >= 0.5) {
                    ok = true;
                    break;
                }
            }
            if (ok) break;
        }
        if (!ok) return false;
    }
    return true;
}

}  // namespace detail

// Deterministic in (seed, params). Throws std::invalid_argument on bad params
// and std::runtime_error when the solvability invariant cannot be met within
// the retry budget.
inline Environment generate_environment(std::uint64_t seed, const WorldParams& params, int env_id = 0) {
    detail::validate_params(params);

    Environment env;
    env.id = env_id;
    env.seed = seed;

    Rng rng(mix_seed(seed, 0x67656e)); // "gen"
    env.graph = detail::build_graph(params);
    if (!is_connected(env.graph)) throw std::runtime_error("generate_environment: graph not connected");
    env.room_types = detail::assign_room_types(std::min(params.n_rooms, params.n_viewpoints), rng);
    env.objects = detail::place_objects(env.graph, env.room_types, params, rng);

    for (int attempt = 0; attempt <= params.solvability_retries; ++attempt) {
        Rng region_rng(mix_seed(seed, 0x726567 + static_cast<std::uint64_t>(attempt)));
        env.regions = detail::synthesize_regions(env.graph, env.objects, params, region_rng);
        if (detail::solvable(env)) return env;
    }
    throw std::runtime_error(
        "generate_environment: could not satisfy solvability (every object needs a candidate proposal with IoU >= "
        "0.5 at some valid viewpoint); either depth_noise is too large for the object box sizes or "
        "candidate_regions_per_viewpoint is smaller than the number of co-visible objects");
}

// Stored per-viewpoint observation rows.
inline const std::vector<RegionProposal>& extract_regions(const Environment& env, int viewpoint_id) {
    auto it = env.regions.find(viewpoint_id);
    if (it == env.regions.end())
        throw std::runtime_error("extract_regions: unknown viewpoint id " + std::to_string(viewpoint_id));
    return it->second;
}

inline const std::set<int>& valid_viewpoints(const Environment& env, int object_id) {
    return env.object(object_id).valid_viewpoint_ids;
}

// Shifts every coordinate in the environment by t. Relative geometry is
// preserved exactly because coordinates live on the snap grid.
inline Environment translate_environment(const Environment& env, const Vec3& t) {
    Environment out = env;
    for (Viewpoint& vp : out.graph.viewpoints) vp.position = vp.position + t;
    for (GroundTruthObject& obj : out.objects) {
        obj.center = obj.center + t;
        obj.box = obj.box.translated(t);
    }
    for (auto& [vid, rows] : out.regions) {
        for (RegionProposal& r : rows) {
            r.center = r.center + t;
            r.box = r.box.translated(t);
        }
    }
    return out;
}

}  // namespace groundlab::world
