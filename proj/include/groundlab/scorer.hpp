#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "groundlab/episodes.hpp"
#include "groundlab/language.hpp"
#include "groundlab/matrix.hpp"
#include "groundlab/rng.hpp"
#include "groundlab/world.hpp"

namespace groundlab::scorer {

struct ScorerConfig {
    int model_dim = 32;
    int feature_dim = static_cast<int>(lex::feature_dim());
    int vocab_size = 0;
    int max_text_tokens = 24;
    double logit_clamp = 30.0;
};

// Coordinate frame for the 4-vector positional encoding attached to each
// region row. None feeds constant zeros, severing the model from geometry.
enum class CoordFrame { ViewpointRelative, StartRelative, Absolute, None };

inline const char* to_string(CoordFrame f) {
    switch (f) {
        case CoordFrame::ViewpointRelative: return "viewpoint_relative";
        case CoordFrame::StartRelative: return "start_relative";
        case CoordFrame::Absolute: return "absolute";
        case CoordFrame::None: return "none";
    }
    return "viewpoint_relative";
}

inline CoordFrame coord_frame_from_string(const std::string& s) {
    if (s == "viewpoint_relative") return CoordFrame::ViewpointRelative;
    if (s == "start_relative") return CoordFrame::StartRelative;
    if (s == "absolute") return CoordFrame::Absolute;
    if (s == "none") return CoordFrame::None;
    throw std::runtime_error("unknown coordinate frame: " + s);
}

struct PosEnc4 {
    double dx = 0.0;
    double dy = 0.0;
    double dz = 0.0;
    double r = 0.0;
};

inline PosEnc4 positional_encoding(const world::RegionProposal& region, const Vec3& viewpoint_pos) {
    const Vec3 d = region.center - viewpoint_pos;
    return {d.x, d.y, d.z, region.radius};
}

// One viewpoint's worth of model input. Region rows keep their index into the
// environment's stored proposal list (region_indices) so scores stay
// addressable when context-only proposals are excluded or rows are resampled.
struct ViewpointBatch {
    std::vector<int> text_ids;         // padded to max_text_tokens
    Matrix region_features;            // T_v x d_v
    Matrix region_posenc;              // T_v x 4
    Matrix context_features;           // K x d_v
    std::vector<char> candidate_mask;  // T_v
    std::vector<int> region_indices;   // T_v, row -> proposal index
    int origin_viewpoint_id = 0;

    int n_regions() const { return static_cast<int>(region_features.rows()); }
    int n_context() const { return static_cast<int>(context_features.rows()); }
};

struct Labels {
    std::vector<char> y;
};

struct ScoreTable {
    std::map<std::pair<int, int>, double> entries;  // (viewpoint_id, region_index) -> score
};

struct ScorerParams {
    ScorerConfig config;
    Matrix embedding;     // V x d
    Matrix text_proj;     // d x d
    Matrix region_proj;   // d_v x d
    Matrix pos_proj;      // 4 x d
    Matrix context_proj;  // d_v x d
    Matrix attn_query;    // d x d
    Matrix attn_key;      // d x d
    Matrix attn_value;    // d x d
    Matrix attn_output;   // d x d
    Matrix score_weight;  // 1 x d
    Matrix score_bias;    // 1 x 1

    static constexpr std::size_t kTensorCount = 11;

    static constexpr std::array<const char*, kTensorCount> tensor_names() {
        return {"embedding",  "text_proj",  "region_proj", "pos_proj",     "context_proj", "attn_query",
                "attn_key",   "attn_value", "attn_output", "score_weight", "score_bias"};
    }

    std::array<Matrix*, kTensorCount> tensors() {
        return {&embedding,  &text_proj,  &region_proj, &pos_proj,     &context_proj, &attn_query,
                &attn_key,   &attn_value, &attn_output, &score_weight, &score_bias};
    }

    std::array<const Matrix*, kTensorCount> tensors() const {
        return {&embedding,  &text_proj,  &region_proj, &pos_proj,     &context_proj, &attn_query,
                &attn_key,   &attn_value, &attn_output, &score_weight, &score_bias};
    }

    static ScorerParams zeros(const ScorerConfig& c) {
        const auto d = static_cast<std::size_t>(c.model_dim);
        const auto dv = static_cast<std::size_t>(c.feature_dim);
        ScorerParams p;
        p.config = c;
        p.embedding = Matrix(static_cast<std::size_t>(c.vocab_size), d);
        p.text_proj = Matrix(d, d);
        p.region_proj = Matrix(dv, d);
        p.pos_proj = Matrix(4, d);
        p.context_proj = Matrix(dv, d);
        p.attn_query = Matrix(d, d);
        p.attn_key = Matrix(d, d);
        p.attn_value = Matrix(d, d);
        p.attn_output = Matrix(d, d);
        p.score_weight = Matrix(1, d);
        p.score_bias = Matrix(1, 1);
        return p;
    }

    static ScorerParams init(const ScorerConfig& c, std::uint64_t seed) {
        if (c.vocab_size < 2) throw std::invalid_argument("ScorerParams: vocab_size must cover PAD and UNK");
        if (c.model_dim < 1 || c.feature_dim < 1 || c.max_text_tokens < 1)
            throw std::invalid_argument("ScorerParams: dimensions must be positive");
        Rng rng(mix_seed(seed, 0x706172));  // "par"
        const double d_in = 1.0 / std::sqrt(static_cast<double>(c.model_dim));
        const double dv_in = 1.0 / std::sqrt(static_cast<double>(c.feature_dim));
        ScorerParams p = zeros(c);
        // the text/score paths start wide and the gate starts open: the score
        // is a product of three learned factors, and tiny factors stall plain
        // SGD near the constant-logit solution
        p.embedding = Matrix::randn(p.embedding.rows(), p.embedding.cols(), 0.5, rng);
        p.text_proj = Matrix::randn(p.text_proj.rows(), p.text_proj.cols(), d_in, rng);
        p.region_proj = Matrix::randn(p.region_proj.rows(), p.region_proj.cols(), dv_in, rng);
        p.pos_proj = Matrix::randn(4, p.pos_proj.cols(), 0.05, rng);
        p.context_proj = Matrix::randn(p.context_proj.rows(), p.context_proj.cols(), dv_in, rng);
        p.attn_query = Matrix::randn(p.attn_query.rows(), p.attn_query.cols(), d_in, rng);
        p.attn_key = Matrix::randn(p.attn_key.rows(), p.attn_key.cols(), d_in, rng);
        p.attn_value = Matrix::randn(p.attn_value.rows(), p.attn_value.cols(), d_in, rng);
        p.attn_output = Matrix::randn(p.attn_output.rows(), p.attn_output.cols(), d_in, rng);
        p.score_weight.fill(1.0);
        return p;
    }

    bool all_finite() const {
        for (const Matrix* m : tensors())
            if (!m->all_finite()) return false;
        return true;
    }

    friend bool operator==(const ScorerParams& a, const ScorerParams& b) {
        const bool eq = a.config.model_dim == b.config.model_dim && a.config.feature_dim == b.config.feature_dim &&
                        a.config.vocab_size == b.config.vocab_size &&
                        a.config.max_text_tokens == b.config.max_text_tokens &&
                        a.config.logit_clamp == b.config.logit_clamp;
        if (!eq) return false;
        const auto ta = a.tensors();
        const auto tb = b.tensors();
        for (std::size_t i = 0; i < kTensorCount; ++i)
            if (!(*ta[i] == *tb[i])) return false;
        return true;
    }
};

// ---------------------------------------------------------------------------
// Batch assembly

// Per-environment aggregates reused across batches: mean proposal feature and
// radius per viewpoint, plus each viewpoint's neighbors sorted by (Euclidean
// distance, id).
struct ContextCache {
    std::vector<std::vector<double>> mean_feature;  // viewpoint id -> d_v
    std::vector<double> mean_radius;                // viewpoint id -> meters
    std::vector<std::vector<int>> neighbors;        // viewpoint id -> other ids, nearest first
};

inline ContextCache build_context_cache(const world::Environment& env) {
    const int n = env.graph.size();
    ContextCache cache;
    cache.mean_feature.resize(static_cast<std::size_t>(n));
    cache.mean_radius.assign(static_cast<std::size_t>(n), 0.0);
    cache.neighbors.resize(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) {
        const auto& rows = world::extract_regions(env, v);
        std::vector<double> mean(lex::feature_dim(), 0.0);
        double radius = 0.0;
        for (const world::RegionProposal& r : rows) {
            for (std::size_t k = 0; k < mean.size() && k < r.feature.size(); ++k) mean[k] += r.feature[k];
            radius += r.radius;
        }
        if (!rows.empty()) {
            const double inv = 1.0 / static_cast<double>(rows.size());
            for (double& x : mean) x *= inv;
            radius *= inv;
        }
        cache.mean_feature[static_cast<std::size_t>(v)] = std::move(mean);
        cache.mean_radius[static_cast<std::size_t>(v)] = radius;
    }
    for (int v = 0; v < n; ++v) {
        std::vector<std::pair<double, int>> order;
        for (int u = 0; u < n; ++u) {
            if (u == v) continue;
            order.emplace_back(distance(env.graph.viewpoint(v).position, env.graph.viewpoint(u).position), u);
        }
        std::sort(order.begin(), order.end());
        for (const auto& [d, u] : order) cache.neighbors[static_cast<std::size_t>(v)].push_back(u);
    }
    return cache;
}

struct BatchOptions {
    int k_context = 8;
    bool include_context_regions = true;
    CoordFrame frame = CoordFrame::ViewpointRelative;
    Vec3 reference;  // origin for StartRelative
};

inline ViewpointBatch assemble_batch(const lang::Instruction& instr, int viewpoint_id, const world::Environment& env,
                                     const BatchOptions& opts, const ScorerConfig& config, const ContextCache& cache) {
    const Vec3 vp_pos = env.graph.viewpoint(viewpoint_id).position;
    const auto& proposals = world::extract_regions(env, viewpoint_id);

    ViewpointBatch b;
    b.origin_viewpoint_id = viewpoint_id;
    b.text_ids.assign(static_cast<std::size_t>(config.max_text_tokens), lang::Vocabulary::kPad);
    for (std::size_t j = 0; j < instr.tokens.size() && j < static_cast<std::size_t>(config.max_text_tokens); ++j)
        b.text_ids[j] = instr.tokens[j];

    std::vector<int> rows;
    for (int i = 0; i < static_cast<int>(proposals.size()); ++i)
        if (opts.include_context_regions || proposals[static_cast<std::size_t>(i)].candidate) rows.push_back(i);

    const std::size_t dv = static_cast<std::size_t>(config.feature_dim);
    b.region_features = Matrix(rows.size(), dv);
    b.region_posenc = Matrix(rows.size(), 4);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const world::RegionProposal& prop = proposals[static_cast<std::size_t>(rows[r])];
        if (prop.feature.size() != dv)
            throw std::runtime_error("assemble_batch: proposal feature width " + std::to_string(prop.feature.size()) +
                                     " does not match configured feature_dim " + std::to_string(config.feature_dim));
        for (std::size_t k = 0; k < dv; ++k) b.region_features.at(r, k) = prop.feature[k];
        b.candidate_mask.push_back(prop.candidate ? 1 : 0);
        b.region_indices.push_back(rows[r]);

        Vec3 origin = vp_pos;
        if (opts.frame == CoordFrame::StartRelative) origin = opts.reference;
        if (opts.frame == CoordFrame::Absolute) origin = Vec3{0.0, 0.0, 0.0};
        if (opts.frame == CoordFrame::None) {
            // constant rows: no geometric information reaches the model
            continue;
        }
        const PosEnc4 q = positional_encoding(prop, origin);
        b.region_posenc.at(r, 0) = q.dx;
        b.region_posenc.at(r, 1) = q.dy;
        b.region_posenc.at(r, 2) = q.dz;
        b.region_posenc.at(r, 3) = q.r;
    }

    const auto& nbrs = cache.neighbors[static_cast<std::size_t>(viewpoint_id)];
    const std::size_t k = std::min(static_cast<std::size_t>(std::max(0, opts.k_context)), nbrs.size());
    b.context_features = Matrix(k, dv);
    for (std::size_t j = 0; j < k; ++j) {
        const auto& mean = cache.mean_feature[static_cast<std::size_t>(nbrs[j])];
        for (std::size_t c = 0; c < dv && c < mean.size(); ++c) b.context_features.at(j, c) = mean[c];
    }
    return b;
}

inline ViewpointBatch assemble_batch(const lang::Instruction& instr, int viewpoint_id, const world::Environment& env,
                                     int k_context, bool include_context_regions, const ScorerConfig& config) {
    BatchOptions opts;
    opts.k_context = k_context;
    opts.include_context_regions = include_context_regions;
    return assemble_batch(instr, viewpoint_id, env, opts, config, build_context_cache(env));
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace detail {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline void check_dim(const std::string& what, std::size_t got, std::size_t want) {
    if (got != want)
        throw std::runtime_error("forward: " + what + " is " + std::to_string(got) + ", expected " +
                                 std::to_string(want));
}

}  // namespace detail

struct ForwardTrace {
    std::vector<double> scores;  // T_v, sigmoid outputs
    std::vector<double> logits;  // T_v, pre-clamp
    Matrix text_embed;           // 1 x d, mean-pooled token embedding
    Matrix text_vec;             // 1 x d, after text projection
    Matrix tokens_in;            // N x d, attention input U
    Matrix query, key, value;    // N x d
    Matrix attn;                 // N x N, softmax weights
    Matrix mixed;                // N x d, attn * value
    Matrix hidden;               // N x d, after residual + output proj
    int n_text_tokens = 0;
};

inline ForwardTrace forward_trace(const ScorerParams& p, const ViewpointBatch& b) {
    const ScorerConfig& c = p.config;
    const std::size_t d = static_cast<std::size_t>(c.model_dim);
    const std::size_t dv = static_cast<std::size_t>(c.feature_dim);
    const std::size_t tv = b.region_features.rows();
    const std::size_t kc = b.context_features.rows();

    detail::check_dim("region feature width", b.region_features.cols(), dv);
    detail::check_dim("positional encoding width", b.region_posenc.cols(), 4);
    detail::check_dim("positional encoding rows", b.region_posenc.rows(), tv);
    if (kc > 0) detail::check_dim("context feature width", b.context_features.cols(), dv);
    detail::check_dim("candidate mask length", b.candidate_mask.size(), tv);
    detail::check_dim("region index length", b.region_indices.size(), tv);
    detail::check_dim("text length", b.text_ids.size(), static_cast<std::size_t>(c.max_text_tokens));

    ForwardTrace t;

    // Mean-pooled embedding of non-PAD tokens, then text projection.
    t.text_embed = Matrix(1, d);
    int n_tok = 0;
    for (int id : b.text_ids) {
        if (id == lang::Vocabulary::kPad) continue;
        if (id < 0 || id >= c.vocab_size)
            throw std::runtime_error("forward: token id " + std::to_string(id) + " outside vocabulary of size " +
                                     std::to_string(c.vocab_size));
        const double* e = p.embedding.row(static_cast<std::size_t>(id));
        for (std::size_t k = 0; k < d; ++k) t.text_embed.at(0, k) += e[k];
        ++n_tok;
    }
    t.n_text_tokens = std::max(1, n_tok);
    t.text_embed *= 1.0 / static_cast<double>(t.n_text_tokens);
    t.text_vec = matmul(t.text_embed, p.text_proj);

    // Token matrix: region rows then context rows.
    const std::size_t n = tv + kc;
    Matrix top = matmul(b.region_features, p.region_proj);
    top += matmul(b.region_posenc, p.pos_proj);
    Matrix bottom = matmul(b.context_features, p.context_proj);
    t.tokens_in = Matrix(n, d);
    for (std::size_t i = 0; i < tv; ++i)
        for (std::size_t k = 0; k < d; ++k) t.tokens_in.at(i, k) = top.at(i, k);
    for (std::size_t j = 0; j < kc; ++j)
        for (std::size_t k = 0; k < d; ++k) t.tokens_in.at(tv + j, k) = bottom.at(j, k);

    // Single self-attention pass with a residual connection.
    t.query = matmul(t.tokens_in, p.attn_query);
    t.key = matmul(t.tokens_in, p.attn_key);
    t.value = matmul(t.tokens_in, p.attn_value);
    t.attn = matmul_nt(t.query, t.key);
    const double scale = 1.0 / std::sqrt(static_cast<double>(c.model_dim));
    for (std::size_t i = 0; i < n; ++i) {
        double* row = t.attn.row(i);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            row[j] *= scale;
            mx = std::max(mx, row[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
    }
    t.mixed = matmul(t.attn, t.value);
    t.hidden = t.tokens_in;
    t.hidden += matmul(t.mixed, p.attn_output);

    // Text-conditioned score head over region rows only.
    t.logits.resize(tv);
    t.scores.resize(tv);
    for (std::size_t i = 0; i < tv; ++i) {
        double z = p.score_bias.at(0, 0);
        const double* h = t.hidden.row(i);
        const double* tx = t.text_vec.row(0);
        const double* w = p.score_weight.row(0);
        for (std::size_t k = 0; k < d; ++k) z += h[k] * tx[k] * w[k];
        t.logits[i] = z;
        const double zc = std::clamp(z, -c.logit_clamp, c.logit_clamp);
        t.scores[i] = detail::sigmoid(zc);
    }
    return t;
}

inline std::vector<double> forward(const ScorerParams& p, const ViewpointBatch& b) {
    return forward_trace(p, b).scores;
}

struct LossGrad {
    double loss = 0.0;
    ScorerParams grads;
};

// Mean binary cross-entropy over candidate rows, with exact gradients of the
// computed (clamped) function.
inline LossGrad loss_and_grad(const ScorerParams& p, const ViewpointBatch& b, const Labels& labels) {
    const ScorerConfig& c = p.config;
    const std::size_t tv = b.region_features.rows();
    if (labels.y.size() != tv)
        throw std::runtime_error("loss_and_grad: labels length " + std::to_string(labels.y.size()) +
                                 " does not match batch rows " + std::to_string(tv));

    LossGrad out;
    out.grads = ScorerParams::zeros(c);

    std::size_t n_cand = 0;
    for (char m : b.candidate_mask) n_cand += m ? 1 : 0;
    if (n_cand == 0) return out;

    const ForwardTrace t = forward_trace(p, b);
    const std::size_t d = static_cast<std::size_t>(c.model_dim);
    const std::size_t kc = b.context_features.rows();
    const std::size_t n = tv + kc;

    // Loss and dL/dlogit per candidate row (stable log-sum-exp form).
    std::vector<double> dz(tv, 0.0);
    const double inv_cand = 1.0 / static_cast<double>(n_cand);
    for (std::size_t i = 0; i < tv; ++i) {
        if (!b.candidate_mask[i]) continue;
        const double y = labels.y[i] ? 1.0 : 0.0;
        const double z = std::clamp(t.logits[i], -c.logit_clamp, c.logit_clamp);
        out.loss += (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)))) * inv_cand;
        const double gate = std::abs(t.logits[i]) < c.logit_clamp ? 1.0 : 0.0;
        dz[i] = (detail::sigmoid(z) - y) * inv_cand * gate;
    }

    // Score head: z_i = sum_k h_ik * t_k * w_k + bias.
    Matrix d_hidden(n, d);
    Matrix d_text_vec(1, d);
    {
        const double* tx = t.text_vec.row(0);
        const double* w = p.score_weight.row(0);
        double* dw = out.grads.score_weight.row(0);
        double* dt = d_text_vec.row(0);
        double db = 0.0;
        for (std::size_t i = 0; i < tv; ++i) {
            if (dz[i] == 0.0) continue;
            const double* h = t.hidden.row(i);
            double* dh = d_hidden.row(i);
            for (std::size_t k = 0; k < d; ++k) {
                dw[k] += dz[i] * h[k] * tx[k];
                dt[k] += dz[i] * h[k] * w[k];
                dh[k] += dz[i] * tx[k] * w[k];
            }
            db += dz[i];
        }
        out.grads.score_bias.at(0, 0) = db;
    }

    // Attention block backward. hidden = tokens_in + (attn * value) * Wo.
    Matrix d_tokens = d_hidden;  // residual path
    Matrix d_mixed = matmul_nt(d_hidden, p.attn_output);
    out.grads.attn_output = matmul_tn(t.mixed, d_hidden);

    Matrix d_attn = matmul_nt(d_mixed, t.value);
    Matrix d_value = matmul_tn(t.attn, d_mixed);

    // Row-wise softmax backward, then the 1/sqrt(d) score scaling.
    const double scale = 1.0 / std::sqrt(static_cast<double>(c.model_dim));
    Matrix d_scores(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* a = t.attn.row(i);
        const double* da = d_attn.row(i);
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += a[j] * da[j];
        double* ds = d_scores.row(i);
        for (std::size_t j = 0; j < n; ++j) ds[j] = a[j] * (da[j] - dot) * scale;
    }

    Matrix d_query = matmul(d_scores, t.key);
    Matrix d_key = matmul_tn(d_scores, t.query);
    out.grads.attn_query = matmul_tn(t.tokens_in, d_query);
    out.grads.attn_key = matmul_tn(t.tokens_in, d_key);
    out.grads.attn_value = matmul_tn(t.tokens_in, d_value);
    d_tokens += matmul_nt(d_query, p.attn_query);
    d_tokens += matmul_nt(d_key, p.attn_key);
    d_tokens += matmul_nt(d_value, p.attn_value);

    // Split token gradients back to the three input projections.
    Matrix d_top(tv, d);
    Matrix d_bottom(kc, d);
    for (std::size_t i = 0; i < tv; ++i)
        for (std::size_t k = 0; k < d; ++k) d_top.at(i, k) = d_tokens.at(i, k);
    for (std::size_t j = 0; j < kc; ++j)
        for (std::size_t k = 0; k < d; ++k) d_bottom.at(j, k) = d_tokens.at(tv + j, k);
    out.grads.region_proj = matmul_tn(b.region_features, d_top);
    out.grads.pos_proj = matmul_tn(b.region_posenc, d_top);
    out.grads.context_proj = matmul_tn(b.context_features, d_bottom);

    // Text path: text_vec = text_embed * Wt; embedding rows share the mean.
    out.grads.text_proj = matmul_tn(t.text_embed, d_text_vec);
    const Matrix d_text_embed = matmul_nt(d_text_vec, p.text_proj);
    const double inv_tok = 1.0 / static_cast<double>(t.n_text_tokens);
    for (int id : b.text_ids) {
        if (id == lang::Vocabulary::kPad) continue;
        double* grow = out.grads.embedding.row(static_cast<std::size_t>(id));
        const double* de = d_text_embed.row(0);
        for (std::size_t k = 0; k < d; ++k) grow[k] += de[k] * inv_tok;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainingDraw {
    int viewpoint_id = 0;
    Labels labels;       // one entry per stored proposal at the viewpoint
    bool negative = false;
    bool fallback = false;  // wanted a negative viewpoint but none exists
};

// With probability R, a uniformly random viewpoint where the target is not
// visible (labels all-false); otherwise a uniformly random valid viewpoint
// with labels from the 0.5-IoU rule over candidate rows.
inline TrainingDraw sample_training_viewpoint(const world::Episode& episode, const world::Environment& env, double R,
                                              Rng& rng) {
    if (R < 0.0 || R > 1.0) throw std::invalid_argument("sample_training_viewpoint: R must be in [0,1]");
    const world::GroundTruthObject& target = env.object(episode.target_object_id);

    std::vector<int> negatives;
    for (int v = 0; v < env.graph.size(); ++v)
        if (!target.valid_viewpoint_ids.count(v)) negatives.push_back(v);

    TrainingDraw draw;
    const bool want_negative = bernoulli(rng, R);
    if (want_negative && !negatives.empty()) {
        draw.viewpoint_id = pick(negatives, rng);
        draw.negative = true;
        draw.labels.y.assign(world::extract_regions(env, draw.viewpoint_id).size(), 0);
        return draw;
    }
    draw.fallback = want_negative;

    const std::vector<int> valid(target.valid_viewpoint_ids.begin(), target.valid_viewpoint_ids.end());
    draw.viewpoint_id = pick(valid, rng);
    const auto& proposals = world::extract_regions(env, draw.viewpoint_id);
    draw.labels.y.reserve(proposals.size());
    for (const world::RegionProposal& prop : proposals)
        draw.labels.y.push_back(prop.candidate && iou_3d(prop.box, target.box) >= 0.5 ? 1 : 0);
    return draw;
}

struct TrainHyper {
    int epochs = 40;
    int batch_episodes = 8;
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double warmup_frac = 0.1;
    double negative_rate = 0.8;  // R
    double env_dropout = 0.0;    // per-row feature replacement probability
    bool bootstrap = false;      // resample batch rows with replacement
    lang::MaskMode text_mask = lang::MaskMode::FullText;
    BatchOptions batch;
    std::uint64_t seed = 0;
};

struct TrainResult {
    ScorerParams params;
    std::vector<double> epoch_loss;
    double negative_fraction = 0.0;
    int fallback_draws = 0;
};

namespace detail {

// Labels stored per proposal index; batches address rows through
// region_indices, so subset after assembly.
inline Labels labels_for_batch(const Labels& full, const ViewpointBatch& b) {
    Labels out;
    out.y.reserve(b.region_indices.size());
    for (int idx : b.region_indices) out.y.push_back(full.y[static_cast<std::size_t>(idx)]);
    return out;
}

inline void bootstrap_rows(ViewpointBatch& b, Labels& labels, Rng& rng) {
    const std::size_t tv = b.region_features.rows();
    if (tv == 0) return;
    ViewpointBatch nb = b;
    Labels nl = labels;
    for (std::size_t r = 0; r < tv; ++r) {
        const std::size_t src = uniform_index(rng, tv);
        for (std::size_t k = 0; k < b.region_features.cols(); ++k)
            nb.region_features.at(r, k) = b.region_features.at(src, k);
        for (std::size_t k = 0; k < 4; ++k) nb.region_posenc.at(r, k) = b.region_posenc.at(src, k);
        nb.candidate_mask[r] = b.candidate_mask[src];
        nb.region_indices[r] = b.region_indices[src];
        nl.y[r] = labels.y[src];
    }
    b = std::move(nb);
    labels = std::move(nl);
}

inline void env_dropout_rows(ViewpointBatch& b, const world::Environment& env, double rate, Rng& rng) {
    if (rate <= 0.0) return;
    const std::size_t dv = b.region_features.cols();
    for (std::size_t r = 0; r < b.region_features.rows(); ++r) {
        if (!bernoulli(rng, rate)) continue;
        const int vid = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(env.graph.size())));
        const auto& rows = world::extract_regions(env, vid);
        const world::RegionProposal& src = rows[uniform_index(rng, rows.size())];
        for (std::size_t k = 0; k < dv && k < src.feature.size(); ++k) b.region_features.at(r, k) = src.feature[k];
    }
}

}  // namespace detail

// SGD with momentum over loss_and_grad, linear warmup then linear decay.
// Deterministic in hyper.seed.
inline TrainResult train(const std::map<int, world::Environment>& envs, const std::vector<world::Episode>& episodes,
                         const ScorerConfig& config, const TrainHyper& hyper) {
    if (episodes.empty()) throw std::invalid_argument("train: no episodes");
    if (hyper.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (hyper.batch_episodes < 1) throw std::invalid_argument("train: batch_episodes must be >= 1");
    for (const world::Episode& ep : episodes)
        if (!envs.count(ep.environment_id))
            throw std::invalid_argument("train: episode references unknown environment " +
                                        std::to_string(ep.environment_id));

    std::map<int, ContextCache> caches;
    for (const auto& [id, env] : envs) caches.emplace(id, build_context_cache(env));

    TrainResult result;
    result.params = ScorerParams::init(config, mix_seed(hyper.seed, 0x696e6974));
    ScorerParams velocity = ScorerParams::zeros(config);

    Rng rng(mix_seed(hyper.seed, 0x747261696e));  // "train"

    const int groups_per_epoch =
        (static_cast<int>(episodes.size()) + hyper.batch_episodes - 1) / hyper.batch_episodes;
    const int total_steps = hyper.epochs * groups_per_epoch;
    const int warmup_steps =
        std::max(1, static_cast<int>(std::llround(hyper.warmup_frac * static_cast<double>(total_steps))));

    std::vector<std::size_t> order(episodes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    long long draws = 0;
    long long negative_draws = 0;
    int step = 0;
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        shuffle(order, rng);
        double epoch_loss = 0.0;
        std::size_t epoch_samples = 0;

        for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(hyper.batch_episodes)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(hyper.batch_episodes));
            ScorerParams grad_sum = ScorerParams::zeros(config);
            double group_loss = 0.0;

            for (std::size_t g = begin; g < end; ++g) {
                const world::Episode& ep = episodes[order[g]];
                const world::Environment& env = envs.at(ep.environment_id);

                const TrainingDraw draw = sample_training_viewpoint(ep, env, hyper.negative_rate, rng);
                ++draws;
                if (draw.negative) ++negative_draws;
                if (draw.fallback) ++result.fallback_draws;

                BatchOptions opts = hyper.batch;
                opts.reference = env.graph.viewpoint(ep.start_viewpoint_id).position;
                const lang::Instruction text = lang::mask_instruction(ep.instruction, hyper.text_mask);
                ViewpointBatch batch =
                    assemble_batch(text, draw.viewpoint_id, env, opts, config, caches.at(ep.environment_id));
                Labels labels = detail::labels_for_batch(draw.labels, batch);
                if (hyper.bootstrap) detail::bootstrap_rows(batch, labels, rng);
                detail::env_dropout_rows(batch, env, hyper.env_dropout, rng);

                const LossGrad lg = loss_and_grad(result.params, batch, labels);
                if (!std::isfinite(lg.loss))
                    throw std::runtime_error("train: loss diverged at epoch " + std::to_string(epoch) + " step " +
                                             std::to_string(step));
                group_loss += lg.loss;
                const auto src = lg.grads.tensors();
                const auto dst = grad_sum.tensors();
                for (std::size_t i = 0; i < ScorerParams::kTensorCount; ++i) *dst[i] += *src[i];
            }

            const double inv_group = 1.0 / static_cast<double>(end - begin);
            const double lr_now = step < warmup_steps
                                      ? hyper.lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps)
                                      : hyper.lr * static_cast<double>(total_steps - step) /
                                            static_cast<double>(std::max(1, total_steps - warmup_steps));

            {
                const auto vel = velocity.tensors();
                const auto grd = grad_sum.tensors();
                const auto par = result.params.tensors();
                for (std::size_t i = 0; i < ScorerParams::kTensorCount; ++i) {
                    auto& v = vel[i]->data();
                    const auto& g = grd[i]->data();
                    auto& theta = par[i]->data();
                    for (std::size_t j = 0; j < v.size(); ++j) {
                        const double grad = g[j] * inv_group + hyper.weight_decay * theta[j];
                        v[j] = hyper.momentum * v[j] - lr_now * grad;
                        theta[j] += v[j];
                    }
                }
            }

            epoch_loss += group_loss;
            epoch_samples += end - begin;
            ++step;
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(epoch_samples));
    }
    result.negative_fraction = draws > 0 ? static_cast<double>(negative_draws) / static_cast<double>(draws) : 0.0;
    if (!result.params.all_finite()) throw std::runtime_error("train: non-finite parameters after training");
    return result;
}

}  // namespace groundlab::scorer
