#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "groundlab/episodes.hpp"
#include "groundlab/scorer.hpp"
#include "groundlab/world.hpp"

using namespace groundlab;

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

scorer::ScorerConfig test_config() {
    scorer::ScorerConfig c;
    c.vocab_size = lang::shared_default_vocabulary().size();
    return c;
}

// Loss recomputed from scratch: plain BCE over candidate rows of the sigmoid
// outputs. Independent of the log-sum-exp form inside loss_and_grad.
double oracle_loss(const scorer::ScorerParams& p, const scorer::ViewpointBatch& b, const scorer::Labels& labels) {
    const std::vector<double> s = scorer::forward(p, b);
    double loss = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!b.candidate_mask[i]) continue;
        const double y = labels.y[i] ? 1.0 : 0.0;
        loss += -(y * std::log(s[i]) + (1.0 - y) * std::log(1.0 - s[i]));
        ++n;
    }
    return n > 0 ? loss / static_cast<double>(n) : 0.0;
}

struct FdCase {
    world::Environment env;
    scorer::ViewpointBatch batch;
    scorer::Labels labels;
};

FdCase make_case(std::uint64_t seed, int k_context) {
    FdCase fc{world::generate_environment(seed, small_params()), {}, {}};
    const auto episodes = world::make_episodes(fc.env, 4, seed + 1, 1, 3);
    const auto& ep = episodes[seed % episodes.size()];
    const auto& target = fc.env.object(ep.target_object_id);
    const int vid = *target.valid_viewpoint_ids.begin();

    scorer::BatchOptions opts;
    opts.k_context = k_context;
    fc.batch = scorer::assemble_batch(ep.instruction, vid, fc.env, opts, test_config(), scorer::build_context_cache(fc.env));
    for (const auto& prop : world::extract_regions(fc.env, vid))
        fc.labels.y.push_back(prop.candidate && iou_3d(prop.box, target.box) >= 0.5 ? 1 : 0);
    return fc;
}

}  // namespace

TEST_CASE("positional encodings are offsets from the requested origin") {
    world::RegionProposal prop;
    prop.center = {4.0, 6.0, 1.5};
    prop.radius = 0.7;
    const scorer::PosEnc4 q = scorer::positional_encoding(prop, Vec3{1.0, 2.0, 0.5});
    REQUIRE(q.dx == 3.0);
    REQUIRE(q.dy == 4.0);
    REQUIRE(q.dz == 1.0);
    REQUIRE(q.r == 0.7);
}

TEST_CASE("assembled batches carry padded text, masks and neighbor context") {
    const world::Environment env = world::generate_environment(31, small_params());
    const lang::Instruction instr = lang::generate_instruction(env, 0, 3, lang::default_templates());
    const scorer::ScorerConfig cfg = test_config();
    const auto cache = scorer::build_context_cache(env);
    const int vid = 5;
    const Vec3 vp_pos = env.graph.viewpoint(vid).position;
    const auto& proposals = world::extract_regions(env, vid);

    scorer::BatchOptions opts;
    opts.k_context = 3;
    const scorer::ViewpointBatch b = scorer::assemble_batch(instr, vid, env, opts, cfg, cache);

    REQUIRE(b.origin_viewpoint_id == vid);
    REQUIRE(b.text_ids.size() == static_cast<std::size_t>(cfg.max_text_tokens));
    for (std::size_t j = 0; j < b.text_ids.size(); ++j) {
        if (j < instr.tokens.size())
            REQUIRE(b.text_ids[j] == instr.tokens[j]);
        else
            REQUIRE(b.text_ids[j] == lang::Vocabulary::kPad);
    }

    REQUIRE(b.n_regions() == proposals.size());
    for (std::size_t r = 0; r < proposals.size(); ++r) {
        REQUIRE(b.region_indices[r] == static_cast<int>(r));
        REQUIRE(b.candidate_mask[r] == (proposals[r].candidate ? 1 : 0));
        REQUIRE(b.region_posenc.at(r, 0) == proposals[r].center.x - vp_pos.x);
        REQUIRE(b.region_posenc.at(r, 1) == proposals[r].center.y - vp_pos.y);
        REQUIRE(b.region_posenc.at(r, 2) == proposals[r].center.z - vp_pos.z);
        REQUIRE(b.region_posenc.at(r, 3) == proposals[r].radius);
        for (std::size_t k = 0; k < static_cast<std::size_t>(cfg.feature_dim); ++k)
            REQUIRE(b.region_features.at(r, k) == proposals[r].feature[k]);
    }

    // context rows are the mean features of the three nearest viewpoints
    REQUIRE(b.n_context() == 3);
    std::vector<std::pair<double, int>> order;
    for (int u = 0; u < env.graph.size(); ++u)
        if (u != vid) order.emplace_back(distance(vp_pos, env.graph.viewpoint(u).position), u);
    std::sort(order.begin(), order.end());
    for (std::size_t j = 0; j < 3; ++j) {
        const auto& rows = world::extract_regions(env, order[j].second);
        for (std::size_t k = 0; k < static_cast<std::size_t>(cfg.feature_dim); ++k) {
            double mean = 0.0;
            for (const auto& r : rows) mean += r.feature[k];
            mean /= static_cast<double>(rows.size());
            REQUIRE(b.context_features.at(j, k) == Catch::Approx(mean).margin(1e-12));
        }
    }

    // candidates-only variant keeps original region indices
    opts.include_context_regions = false;
    const scorer::ViewpointBatch cand = scorer::assemble_batch(instr, vid, env, opts, cfg, cache);
    REQUIRE(cand.n_regions() == static_cast<std::size_t>(small_params().candidate_regions_per_viewpoint));
    for (std::size_t r = 0; r < cand.n_regions(); ++r) {
        REQUIRE(cand.candidate_mask[r] == 1);
        REQUIRE(proposals[static_cast<std::size_t>(cand.region_indices[r])].candidate);
    }

    // no-geometry frame zeroes every positional row
    opts.include_context_regions = true;
    opts.frame = scorer::CoordFrame::None;
    const scorer::ViewpointBatch flat = scorer::assemble_batch(instr, vid, env, opts, cfg, cache);
    for (std::size_t r = 0; r < flat.n_regions(); ++r)
        for (std::size_t k = 0; k < 4; ++k) REQUIRE(flat.region_posenc.at(r, k) == 0.0);

    // start-relative frame measures from the provided reference
    opts.frame = scorer::CoordFrame::StartRelative;
    opts.reference = Vec3{1.0, 1.0, 0.0};
    const scorer::ViewpointBatch rel = scorer::assemble_batch(instr, vid, env, opts, cfg, cache);
    REQUIRE(rel.region_posenc.at(0, 0) == proposals[0].center.x - 1.0);

    opts.frame = scorer::CoordFrame::ViewpointRelative;
    opts.k_context = 0;
    REQUIRE(scorer::assemble_batch(instr, vid, env, opts, cfg, cache).n_context() == 0);
    opts.k_context = 10000;
    REQUIRE(scorer::assemble_batch(instr, vid, env, opts, cfg, cache).n_context() ==
            static_cast<std::size_t>(env.graph.size() - 1));
}

TEST_CASE("zeroed parameters score one half everywhere") {
    const FdCase fc = make_case(101, 4);
    const auto scores = scorer::forward(scorer::ScorerParams::zeros(test_config()), fc.batch);
    REQUIRE(scores.size() == fc.batch.n_regions());
    for (double s : scores) REQUIRE(s == 0.5);
}

TEST_CASE("parameter init is deterministic, seed-sensitive and finite") {
    const scorer::ScorerConfig cfg = test_config();
    const auto a = scorer::ScorerParams::init(cfg, 5);
    const auto b = scorer::ScorerParams::init(cfg, 5);
    const auto c = scorer::ScorerParams::init(cfg, 6);
    REQUIRE(a == b);
    REQUIRE_FALSE(a == c);
    REQUIRE(a.all_finite());

    scorer::ScorerConfig bad = cfg;
    bad.vocab_size = 1;
    REQUIRE_THROWS_AS(scorer::ScorerParams::init(bad, 1), std::invalid_argument);
}

TEST_CASE("forward is deterministic and keeps scores inside the clamp range") {
    const FdCase fc = make_case(103, 4);
    const auto params = scorer::ScorerParams::init(test_config(), 9);
    const auto a = scorer::forward(params, fc.batch);
    const auto b = scorer::forward(params, fc.batch);
    REQUIRE(a == b);
    const double lo = 1.0 / (1.0 + std::exp(30.0));
    for (double s : a) {
        REQUIRE(s >= lo);
        REQUIRE(s <= 1.0 - lo + 1e-15);
    }
}

TEST_CASE("padding-only text reduces the score to a constant per batch") {
    FdCase fc = make_case(107, 4);
    std::fill(fc.batch.text_ids.begin(), fc.batch.text_ids.end(), lang::Vocabulary::kPad);
    const auto scores = scorer::forward(scorer::ScorerParams::init(test_config(), 11), fc.batch);
    for (double s : scores) REQUIRE(s == Catch::Approx(scores.front()).margin(1e-12));
}

TEST_CASE("permuting region rows permutes the scores") {
    FdCase fc = make_case(109, 4);
    const auto params = scorer::ScorerParams::init(test_config(), 13);
    const auto base = scorer::forward(params, fc.batch);

    const std::size_t n = fc.batch.n_regions();
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = (i * 7 + 3) % n;  // bijective for n=16

    scorer::ViewpointBatch shuffled = fc.batch;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < shuffled.region_features.cols(); ++k)
            shuffled.region_features.at(i, k) = fc.batch.region_features.at(perm[i], k);
        for (std::size_t k = 0; k < 4; ++k) shuffled.region_posenc.at(i, k) = fc.batch.region_posenc.at(perm[i], k);
        shuffled.candidate_mask[i] = fc.batch.candidate_mask[perm[i]];
        shuffled.region_indices[i] = fc.batch.region_indices[perm[i]];
    }

    const auto got = scorer::forward(params, shuffled);
    for (std::size_t i = 0; i < n; ++i) REQUIRE(got[i] == Catch::Approx(base[perm[i]]).margin(1e-9));
}

TEST_CASE("analytic gradients match central differences on every tensor") {
    const double h = 1e-5;
    const double tol = 1e-4;
    Rng coord_rng(555);

    for (std::uint64_t seed : {201ULL, 202ULL, 203ULL, 204ULL, 205ULL, 206ULL}) {
        const FdCase fc = make_case(seed, seed % 2 == 0 ? 4 : 0);
        scorer::ScorerParams params = scorer::ScorerParams::init(test_config(), seed);
        const scorer::LossGrad lg = scorer::loss_and_grad(params, fc.batch, fc.labels);
        REQUIRE(lg.grads.all_finite());
        REQUIRE(lg.loss == Catch::Approx(oracle_loss(params, fc.batch, fc.labels)).epsilon(1e-9));

        const auto names = params.tensor_names();
        auto tensors = params.tensors();
        auto grads = lg.grads.tensors();
        for (std::size_t t = 0; t < tensors.size(); ++t) {
            Matrix& m = *tensors[t];
            for (int c = 0; c < 5; ++c) {
                std::size_t i = uniform_index(coord_rng, m.rows());
                const std::size_t j = uniform_index(coord_rng, m.cols());
                if (names[t] == std::string("embedding") && c < 3) {
                    // bias the draw toward rows that actually occur in the text
                    const int tok = fc.batch.text_ids[static_cast<std::size_t>(c) % fc.batch.text_ids.size()];
                    if (tok != lang::Vocabulary::kPad) i = static_cast<std::size_t>(tok);
                }
                const double keep = m.at(i, j);
                m.at(i, j) = keep + h;
                const double up = oracle_loss(params, fc.batch, fc.labels);
                m.at(i, j) = keep - h;
                const double dn = oracle_loss(params, fc.batch, fc.labels);
                m.at(i, j) = keep;

                const double fd = (up - dn) / (2.0 * h);
                const double an = grads[t]->at(i, j);
                const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
                INFO(names[t] << "[" << i << "," << j << "] fd=" << fd << " an=" << an);
                REQUIRE(rel < tol);
            }
        }
    }
}

TEST_CASE("the PAD embedding row never receives gradient") {
    const FdCase fc = make_case(211, 4);
    const auto params = scorer::ScorerParams::init(test_config(), 3);
    const auto lg = scorer::loss_and_grad(params, fc.batch, fc.labels);
    for (std::size_t k = 0; k < lg.grads.embedding.cols(); ++k)
        REQUIRE(lg.grads.embedding.at(lang::Vocabulary::kPad, k) == 0.0);
}

TEST_CASE("saturated logits stop the gradient but not the loss") {
    const FdCase fc = make_case(213, 4);
    scorer::ScorerParams params = scorer::ScorerParams::init(test_config(), 7);
    params.score_bias.at(0, 0) = 100.0;  // everything clamps at +30
    const auto lg = scorer::loss_and_grad(params, fc.batch, fc.labels);
    REQUIRE(lg.loss > 0.0);
    REQUIRE(lg.grads == scorer::ScorerParams::zeros(test_config()));
}

TEST_CASE("a batch with no candidate rows contributes nothing") {
    FdCase fc = make_case(217, 4);
    std::fill(fc.batch.candidate_mask.begin(), fc.batch.candidate_mask.end(), 0);
    const auto lg = scorer::loss_and_grad(scorer::ScorerParams::init(test_config(), 5), fc.batch, fc.labels);
    REQUIRE(lg.loss == 0.0);
    REQUIRE(lg.grads == scorer::ScorerParams::zeros(test_config()));
}

TEST_CASE("gradient descent on one batch drives its loss down") {
    const FdCase fc = make_case(219, 4);
    scorer::ScorerParams params = scorer::ScorerParams::init(test_config(), 15);
    const double before = scorer::loss_and_grad(params, fc.batch, fc.labels).loss;
    double after = before;
    for (int step = 0; step < 40; ++step) {
        const auto lg = scorer::loss_and_grad(params, fc.batch, fc.labels);
        after = lg.loss;
        auto ts = params.tensors();
        auto gs = lg.grads.tensors();
        for (std::size_t t = 0; t < ts.size(); ++t)
            for (std::size_t i = 0; i < ts[t]->rows(); ++i)
                for (std::size_t j = 0; j < ts[t]->cols(); ++j) ts[t]->at(i, j) -= 0.5 * gs[t]->at(i, j);
    }
    REQUIRE(after < before * 0.5);
    REQUIRE(params.all_finite());
}

TEST_CASE("loss rejects label vectors of the wrong length") {
    const FdCase fc = make_case(223, 4);
    scorer::Labels bad;
    bad.y.assign(fc.batch.n_regions() + 1, 0);
    REQUIRE_THROWS_AS(scorer::loss_and_grad(scorer::ScorerParams::init(test_config(), 1), fc.batch, bad),
                      std::runtime_error);
}

TEST_CASE("tokens outside the vocabulary are rejected") {
    FdCase fc = make_case(227, 4);
    fc.batch.text_ids[0] = test_config().vocab_size + 5;
    REQUIRE_THROWS_AS(scorer::forward(scorer::ScorerParams::init(test_config(), 1), fc.batch), std::runtime_error);
}

TEST_CASE("negative-viewpoint sampling honours the requested rate") {
    const world::Environment env = world::generate_environment(35, small_params());
    const auto episodes = world::make_episodes(env, 10, 4, 1, 3);
    const auto& ep = episodes.front();
    const auto& target = env.object(ep.target_object_id);

    Rng rng(808);
    int negatives = 0;
    const int draws = 4000;
    bool saw_positive_label = false;
    for (int i = 0; i < draws; ++i) {
        const auto draw = scorer::sample_training_viewpoint(ep, env, 0.8, rng);
        REQUIRE(draw.labels.y.size() == world::extract_regions(env, draw.viewpoint_id).size());
        if (draw.negative) {
            ++negatives;
            REQUIRE(target.valid_viewpoint_ids.count(draw.viewpoint_id) == 0);
            for (char y : draw.labels.y) REQUIRE(y == 0);
        } else {
            REQUIRE(target.valid_viewpoint_ids.count(draw.viewpoint_id) == 1);
            const auto& props = world::extract_regions(env, draw.viewpoint_id);
            for (std::size_t r = 0; r < props.size(); ++r) {
                const char want = props[r].candidate && iou_3d(props[r].box, target.box) >= 0.5 ? 1 : 0;
                REQUIRE(draw.labels.y[r] == want);
                saw_positive_label = saw_positive_label || want;
            }
        }
    }
    const double rate = static_cast<double>(negatives) / draws;
    REQUIRE(rate > 0.75);
    REQUIRE(rate < 0.85);
    REQUIRE(saw_positive_label);

    Rng rng2(809);
    for (int i = 0; i < 50; ++i) REQUIRE_FALSE(scorer::sample_training_viewpoint(ep, env, 0.0, rng2).negative);
    REQUIRE_THROWS_AS(scorer::sample_training_viewpoint(ep, env, 1.5, rng2), std::invalid_argument);
}
