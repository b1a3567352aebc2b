#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "groundlab/config.hpp"
#include "groundlab/experiment.hpp"
#include "groundlab/metrics.hpp"
#include "groundlab/serialize.hpp"

namespace groundlab::exp {

// A row is the base config plus one toggle. Rows whose training recipe equals
// another row's reuse that row's trained weights (keyed below), so pure
// inference toggles never retrain.
struct RowSetup {
    RunConfig cfg;
    bool trained = true;      // false scores with freshly initialized weights
    bool distractor = false;  // evaluate on scaled-up crowded maps
    bool unlimited = false;   // no exploration cap; search the whole graph
};

inline const std::vector<std::string>& known_ablation_rows() {
    static const std::vector<std::string> rows = {
        "full",           "no_posenc",      "start_relative",     "absolute_coords",
        "no_context_proposals", "no_nbhd_features", "no_augmentation",  "aug_50",
        "aug_90",         "bootstrapping",  "env_dropout_50",     "env_dropout_80",
        "no_viewpoint_grouping", "two_step", "no_finetuning",     "no_distance_limit",
        "full_distractor", "text_full_text", "text_no_adjectives", "text_only_adj_nouns",
        "text_only_nouns", "text_no_room",  "text_only_room",     "text_no_nouns",
    };
    return rows;
}

inline RowSetup apply_row(const RunConfig& base, const std::string& name) {
    RowSetup row;
    row.cfg = base;
    if (name == "full") return row;
    if (name == "no_posenc") { row.cfg.coord_frame = "none"; return row; }
    if (name == "start_relative") { row.cfg.coord_frame = "start_relative"; return row; }
    if (name == "absolute_coords") { row.cfg.coord_frame = "absolute"; return row; }
    if (name == "no_context_proposals") { row.cfg.include_context_regions = false; return row; }
    if (name == "no_nbhd_features") { row.cfg.k_context = 0; return row; }
    if (name == "no_augmentation") { row.cfg.negative_rate = 0.0; return row; }
    if (name == "aug_50") { row.cfg.negative_rate = 0.5; return row; }
    if (name == "aug_90") { row.cfg.negative_rate = 0.9; return row; }
    if (name == "bootstrapping") { row.cfg.bootstrap = true; return row; }
    if (name == "env_dropout_50") { row.cfg.env_dropout = 0.5; return row; }
    if (name == "env_dropout_80") { row.cfg.env_dropout = 0.8; return row; }
    if (name == "no_viewpoint_grouping") { row.cfg.inference = "random_batches"; return row; }
    if (name == "two_step") { row.cfg.inference = "two_step"; return row; }
    if (name == "no_finetuning") { row.trained = false; return row; }
    if (name == "no_distance_limit") { row.distractor = true; row.unlimited = true; return row; }
    if (name == "full_distractor") { row.distractor = true; return row; }
    if (name.rfind("text_", 0) == 0) {
        const std::string mode = name.substr(5);
        lang::mask_mode_from_string(mode);  // throws on bad suffix
        row.cfg.text_mask = mode;
        return row;
    }
    throw std::runtime_error("unknown ablation row: " + name);
}

namespace detail {

// Everything that changes the weights: the training recipe plus the seed.
inline std::string training_key(const RowSetup& row, std::uint64_t seed) {
    const RunConfig& c = row.cfg;
    io::json j{{"trained", row.trained},
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
               {"coord_frame", c.coord_frame},
               {"k_context", c.k_context},
               {"include_context_regions", c.include_context_regions},
               {"model_dim", c.model_dim},
               {"max_text_tokens", c.max_text_tokens},
               {"logit_clamp", c.logit_clamp},
               {"seed", seed}};
    return j.dump();
}

inline void accumulate(eval::MetricsReport& acc, const eval::MetricsReport& r) {
    acc.tl += r.tl;
    acc.sr += r.sr;
    acc.osr += r.osr;
    acc.spl += r.spl;
    acc.rgs += r.rgs;
    acc.rgspl += r.rgspl;
}

}  // namespace detail

struct AblationRow {
    std::string name;
    std::vector<eval::MetricsReport> reports;  // one per seed
    eval::MetricsReport mean;
    eval::MetricsReport stddev;
};

struct AblationTable {
    std::vector<AblationRow> rows;
    int n_seeds = 0;
    int distance_limit = 0;
    double baseline_rgs = 0.0;  // uniform choice among candidates in the search ball
};

inline std::pair<eval::MetricsReport, eval::MetricsReport> mean_and_std(
    const std::vector<eval::MetricsReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("mean_and_std: no reports");
    eval::MetricsReport mean;
    mean.n_episodes = reports.front().n_episodes;
    for (const auto& r : reports) detail::accumulate(mean, r);
    const double n = static_cast<double>(reports.size());
    mean.tl /= n; mean.sr /= n; mean.osr /= n; mean.spl /= n; mean.rgs /= n; mean.rgspl /= n;

    eval::MetricsReport sd;
    sd.n_episodes = mean.n_episodes;
    if (reports.size() > 1) {
        for (const auto& r : reports) {
            sd.tl += (r.tl - mean.tl) * (r.tl - mean.tl);
            sd.sr += (r.sr - mean.sr) * (r.sr - mean.sr);
            sd.osr += (r.osr - mean.osr) * (r.osr - mean.osr);
            sd.spl += (r.spl - mean.spl) * (r.spl - mean.spl);
            sd.rgs += (r.rgs - mean.rgs) * (r.rgs - mean.rgs);
            sd.rgspl += (r.rgspl - mean.rgspl) * (r.rgspl - mean.rgspl);
        }
        const double m = n - 1.0;
        sd.tl = std::sqrt(sd.tl / m);
        sd.sr = std::sqrt(sd.sr / m);
        sd.osr = std::sqrt(sd.osr / m);
        sd.spl = std::sqrt(sd.spl / m);
        sd.rgs = std::sqrt(sd.rgs / m);
        sd.rgspl = std::sqrt(sd.rgspl / m);
    }
    return {mean, sd};
}

// Trains each distinct recipe once per seed, evaluates every requested row on
// the unseen split (or on crowded distractor maps for the distance rows), and
// aggregates across seeds.
inline AblationTable run_ablation_suite(const RunConfig& base, const Dataset& ds) {
    validate(base);
    for (const std::string& name : base.ablation_rows) apply_row(base, name);  // reject typos up front

    AblationTable table;
    table.n_seeds = base.ablation_seeds;
    table.distance_limit = resolve_distance_limit(base, ds);

    bool needs_distractor = false;
    for (const std::string& name : base.ablation_rows) {
        const RowSetup row = apply_row(base, name);
        needs_distractor = needs_distractor || row.distractor;
    }
    std::map<int, world::Environment> distractor_envs;
    std::vector<world::Episode> distractor_episodes;
    if (needs_distractor) {
        auto built = build_distractor_eval(base);
        distractor_envs = std::move(built.first);
        distractor_episodes = std::move(built.second);
    }

    table.baseline_rgs = random_candidate_baseline(ds.unseen_envs, ds.val_unseen, table.distance_limit);

    std::map<std::string, scorer::ScorerParams> weights_cache;
    const scorer::ScorerConfig sc = scorer_config(base, ds.vocab);

    for (const std::string& name : base.ablation_rows) {
        const RowSetup row = apply_row(base, name);
        AblationRow out;
        out.name = name;

        for (int s = 0; s < base.ablation_seeds; ++s) {
            const std::uint64_t train_seed = mix_seed(base.seed, 9000 + static_cast<std::uint64_t>(s));
            const std::string key = detail::training_key(row, train_seed);
            auto it = weights_cache.find(key);
            if (it == weights_cache.end()) {
                scorer::ScorerParams params =
                    row.trained ? train_model(ds, row.cfg, train_seed).params
                                : scorer::ScorerParams::init(sc, mix_seed(train_seed, 0x696e6974));
                it = weights_cache.emplace(key, std::move(params)).first;
            }

            const auto& envs = row.distractor ? distractor_envs : ds.unseen_envs;
            const auto& episodes = row.distractor ? distractor_episodes : ds.val_unseen;
            const int L = row.unlimited ? -1 : table.distance_limit;
            const auto results = run_split(envs, episodes, it->second, row.cfg, L);
            out.reports.push_back(evaluate(results, envs, row.cfg));
        }

        const auto [mean, sd] = mean_and_std(out.reports);
        out.mean = mean;
        out.stddev = sd;
        table.rows.push_back(std::move(out));
    }
    return table;
}

inline std::string format_ablation_table(const AblationTable& table) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3);
    os << "rows over " << table.n_seeds << " seed(s), L=" << table.distance_limit
       << ", chance RGS=" << table.baseline_rgs << "\n";
    os << std::left << std::setw(24) << "row" << std::right;
    for (const char* col : {"TL", "SR", "OSR", "SPL", "RGS", "RGSPL"}) os << std::setw(16) << col;
    os << '\n';
    for (const AblationRow& row : table.rows) {
        os << std::left << std::setw(24) << row.name << std::right;
        const double cols[6][2] = {{row.mean.tl, row.stddev.tl},   {row.mean.sr, row.stddev.sr},
                                   {row.mean.osr, row.stddev.osr}, {row.mean.spl, row.stddev.spl},
                                   {row.mean.rgs, row.stddev.rgs}, {row.mean.rgspl, row.stddev.rgspl}};
        for (const auto& c : cols) {
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(3) << c[0] << "+-" << c[1];
            os << std::setw(16) << cell.str();
        }
        os << '\n';
    }
    return os.str();
}

inline std::string ablation_csv(const AblationTable& table) {
    std::ostringstream os;
    os << "row,seed,n_episodes,tl,sr,osr,spl,rgs,rgspl\n";
    os << std::setprecision(17);
    for (const AblationRow& row : table.rows) {
        for (std::size_t s = 0; s < row.reports.size(); ++s) {
            const eval::MetricsReport& r = row.reports[s];
            os << row.name << ',' << s << ',' << r.n_episodes << ',' << r.tl << ',' << r.sr << ',' << r.osr << ','
               << r.spl << ',' << r.rgs << ',' << r.rgspl << '\n';
        }
        os << row.name << ",mean," << row.mean.n_episodes << ',' << row.mean.tl << ',' << row.mean.sr << ','
           << row.mean.osr << ',' << row.mean.spl << ',' << row.mean.rgs << ',' << row.mean.rgspl << '\n';
    }
    return os.str();
}

inline io::json to_json(const AblationTable& table) {
    io::json rows = io::json::array();
    for (const AblationRow& row : table.rows) {
        io::json reports = io::json::array();
        for (const auto& r : row.reports) reports.push_back(io::to_json(r));
        rows.push_back(io::json{{"name", row.name},
                                {"reports", std::move(reports)},
                                {"mean", io::to_json(row.mean)},
                                {"stddev", io::to_json(row.stddev)}});
    }
    return io::json{{"schema_version", io::kSchemaVersion},
                    {"kind", "ablation_table"},
                    {"n_seeds", table.n_seeds},
                    {"distance_limit", table.distance_limit},
                    {"baseline_rgs", table.baseline_rgs},
                    {"rows", std::move(rows)}};
}

}  // namespace groundlab::exp
