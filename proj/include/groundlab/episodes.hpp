#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "groundlab/language.hpp"
#include "groundlab/rng.hpp"
#include "groundlab/world.hpp"

namespace groundlab::lang {

// Pattern is a whitespace-separated mix of literal words and the placeholders
// {room}, {category}, {adjs} (zero to two attribute adjectives) and {rel}
// (optional "near the <anchor>" fragment, dropped when the target has no
// relation anchor).
struct Template {
    std::string pattern;
};

using TemplateSet = std::vector<Template>;

inline const TemplateSet& default_templates() {
    static const TemplateSet t = {
        {"go to the {room} and find the {adjs} {category}"},
        {"walk to the {room} and locate the {adjs} {category}"},
        {"head to the {room} and fetch the {adjs} {category} {rel}"},
        {"go to the {room} and bring me the {adjs} {category} {rel}"},
        {"find the {adjs} {category} in the {room}"},
        {"locate the {adjs} {category} {rel} in the {room}"},
        {"bring me the {adjs} {category} from the {room}"},
        {"fetch the {adjs} {category} {rel} from the {room}"},
    };
    return t;
}

namespace detail {
inline bool is_preposition(const std::string& w) {
    return w == "to" || w == "in" || w == "near" || w == "from";
}
}  // namespace detail

inline Instruction generate_instruction(const world::Environment& env, int target_object_id, std::uint64_t seed,
                                        const TemplateSet& templates,
                                        const Vocabulary& vocab = shared_default_vocabulary()) {
    if (templates.empty()) throw std::invalid_argument("generate_instruction: empty template set");
    const world::GroundTruthObject& obj = env.object(target_object_id);

    Rng rng(mix_seed(seed, 0x696e7374));  // "inst"
    const Template& tpl = templates[uniform_index(rng, templates.size())];

    // Same-category objects visible from a shared viewpoint force the
    // speaker's hand: an adjective appears when it tells the target apart
    // (plus the occasional decorative one), never as filler.
    const auto co_visible = [](const world::GroundTruthObject& a, const world::GroundTruthObject& b) {
        for (int v : a.valid_viewpoint_ids)
            if (b.valid_viewpoint_ids.count(v)) return true;
        return false;
    };
    std::vector<const world::GroundTruthObject*> confusables;
    for (const world::GroundTruthObject& other : env.objects)
        if (other.id != obj.id && other.category_id == obj.category_id && co_visible(obj, other))
            confusables.push_back(&other);

    // Adjective slots in surface order (size, color, material).
    const std::array<int, 3> slot_attr = {1, 0, 2};
    const std::array<const std::vector<std::string>*, 3> slot_words = {&lex::kSizes, &lex::kColors, &lex::kMaterials};
    const auto slot_value = [&](const world::GroundTruthObject& o, int s) {
        return o.attribute_ids[static_cast<std::size_t>(slot_attr[static_cast<std::size_t>(s)])];
    };

    // Pragmatic speaker: scan the attribute slots from a random starting
    // point and mention just enough of them to separate the target from
    // every look-alike in view; with no look-alikes, decorate half the time.
    std::vector<int> chosen;
    if (!confusables.empty()) {
        std::vector<const world::GroundTruthObject*> open = confusables;
        const int first = static_cast<int>(uniform_index(rng, 3));
        for (int k = 0; k < 3 && !open.empty(); ++k) {
            const int s = (first + k) % 3;
            std::vector<const world::GroundTruthObject*> still;
            for (const world::GroundTruthObject* c : open)
                if (slot_value(*c, s) == slot_value(obj, s)) still.push_back(c);
            if (still.size() < open.size()) chosen.push_back(s);
            open = std::move(still);
        }
        std::sort(chosen.begin(), chosen.end());  // back to surface order
    } else if (bernoulli(rng, 0.5)) {
        chosen.push_back(static_cast<int>(uniform_index(rng, 3)));
    }
    std::vector<std::string> adjs;
    for (int s : chosen)
        adjs.push_back((*slot_words[static_cast<std::size_t>(s)])[static_cast<std::size_t>(slot_value(obj, s))]);

    const std::string room_word = lex::kRooms[static_cast<std::size_t>(env.room_types[static_cast<std::size_t>(obj.room_id)])];
    const std::string cat_word = lex::kCategories[static_cast<std::size_t>(obj.category_id)];
    const int anchor_id = obj.attribute_ids[3];

    std::vector<std::pair<std::string, PosTag>> out;
    for (const std::string& item : split_words(tpl.pattern)) {
        if (item == "{room}") {
            out.emplace_back(room_word, PosTag::Room);
        } else if (item == "{category}") {
            out.emplace_back(cat_word, PosTag::Noun);
        } else if (item == "{adjs}") {
            for (const std::string& a : adjs) out.emplace_back(a, PosTag::Adj);
        } else if (item == "{rel}") {
            if (anchor_id >= 0) {
                const std::string anchor_word =
                    lex::kCategories[static_cast<std::size_t>(env.object(anchor_id).category_id)];
                out.emplace_back("near", PosTag::Prep);
                out.emplace_back("the", PosTag::Other);
                out.emplace_back(anchor_word, PosTag::Noun);
            }
        } else if (item.front() == '{') {
            throw std::invalid_argument("generate_instruction: unknown placeholder " + item);
        } else {
            out.emplace_back(item, detail::is_preposition(item) ? PosTag::Prep : PosTag::Other);
        }
    }

    Instruction instr;
    for (std::size_t i = 0; i < out.size(); ++i) {
        instr.tokens.push_back(vocab.id_of(out[i].first));
        instr.pos_tags.push_back(out[i].second);
        if (i > 0) instr.text += ' ';
        instr.text += out[i].first;
    }
    // The leading room clause is everything before the first "and" (when a
    // room word actually precedes it).
    instr.room_clause_end = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i].first == "and" && out[i].second == PosTag::Other) {
            for (std::size_t j = 0; j < i; ++j)
                if (out[j].second == PosTag::Room) instr.room_clause_end = static_cast<int>(i);
            break;
        }
    }
    return instr;
}

}  // namespace groundlab::lang

namespace groundlab::world {

struct Episode {
    int environment_id = 0;
    int start_viewpoint_id = 0;
    lang::Instruction instruction;
    int target_object_id = 0;
    double gold_path_length = 0.0;  // meters, start to nearest valid viewpoint
    int gold_steps = 0;             // hops, start to nearest valid viewpoint

    bool operator==(const Episode& o) const {
        return environment_id == o.environment_id && start_viewpoint_id == o.start_viewpoint_id &&
               instruction == o.instruction && target_object_id == o.target_object_id &&
               gold_path_length == o.gold_path_length && gold_steps == o.gold_steps;
    }
};

inline std::vector<Episode> make_episodes(const Environment& env, int n, std::uint64_t seed, int d_min, int d_max,
                                          const lang::TemplateSet& templates = lang::default_templates(),
                                          const lang::Vocabulary& vocab = lang::shared_default_vocabulary()) {
    if (d_min > d_max) throw std::invalid_argument("make_episodes: d_min exceeds d_max");
    if (d_min < 0) throw std::invalid_argument("make_episodes: d_min must be >= 0");
    if (n < 0) throw std::invalid_argument("make_episodes: n must be >= 0");
    if (n == 0) return {};

    struct Pair {
        int start;
        int target;
        int steps;
        double length;
    };
    std::vector<Pair> feasible;
    int lo = std::numeric_limits<int>::max();
    int hi = -1;
    for (const GroundTruthObject& obj : env.objects) {
        const std::vector<int> valid(obj.valid_viewpoint_ids.begin(), obj.valid_viewpoint_ids.end());
        const std::vector<int> hops = hop_distances(env.graph, valid);
        const std::vector<double> lengths = metric_distances(env.graph, valid);
        for (int v = 0; v < env.graph.size(); ++v) {
            const int h = hops[static_cast<std::size_t>(v)];
            if (h < 0) continue;
            lo = std::min(lo, h);
            hi = std::max(hi, h);
            if (h >= d_min && h <= d_max)
                feasible.push_back({v, obj.id, h, lengths[static_cast<std::size_t>(v)]});
        }
    }
    if (feasible.empty())
        throw std::runtime_error("make_episodes: no start/target pair has gold_steps in [" + std::to_string(d_min) +
                                 ", " + std::to_string(d_max) + "]; achievable range is [" + std::to_string(lo) +
                                 ", " + std::to_string(hi) + "]");

    Rng rng(mix_seed(seed, 0x657073));  // "eps"
    std::vector<Episode> episodes;
    episodes.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const Pair& p = feasible[uniform_index(rng, feasible.size())];
        Episode ep;
        ep.environment_id = env.id;
        ep.start_viewpoint_id = p.start;
        ep.target_object_id = p.target;
        ep.gold_steps = p.steps;
        ep.gold_path_length = p.length;
        ep.instruction = lang::generate_instruction(env, p.target, mix_seed(seed, 1000 + static_cast<std::uint64_t>(i)),
                                                    templates, vocab);
        episodes.push_back(std::move(ep));
    }
    return episodes;
}

}  // namespace groundlab::world
