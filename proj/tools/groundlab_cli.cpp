#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "groundlab/groundlab.hpp"

namespace fs = std::filesystem;
using namespace groundlab;

namespace {

struct Cli {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string out;
    std::string data;
    std::string weights;
    std::string split;
    std::vector<std::string> rows;
    int ablation_seeds = 0;
    std::vector<std::string> inputs;  // report only

    CLI::Option* opt_config = nullptr;
    CLI::Option* opt_seed = nullptr;
    CLI::Option* opt_out = nullptr;
    CLI::Option* opt_data = nullptr;
    CLI::Option* opt_weights = nullptr;
    CLI::Option* opt_split = nullptr;
    CLI::Option* opt_rows = nullptr;
    CLI::Option* opt_ablation_seeds = nullptr;
};

void add_common(CLI::App* sub, Cli& cli) {
    cli.opt_config = sub->add_option("--config", cli.config_path, "run config JSON; omitted fields keep defaults");
    cli.opt_seed = sub->add_option("--seed", cli.seed, "master seed (overrides the config file)");
    cli.opt_out = sub->add_option("--out", cli.out, "output directory (overrides the config file)");
    cli.opt_data = sub->add_option("--data", cli.data, "dataset directory written by gen (defaults to --out)");
    cli.opt_weights = sub->add_option("--weights", cli.weights, "trained weights JSON (defaults to <data>/weights.json)");
}

// Precedence: built-in defaults < config file < command-line flags.
exp::RunConfig resolve_config(const Cli& cli) {
    exp::RunConfig cfg;
    if (cli.opt_config->count()) cfg = exp::run_config_from_json(io::load_json_file(cli.config_path), cli.config_path);
    if (cli.opt_seed->count()) cfg.seed = cli.seed;
    if (cli.opt_out->count()) cfg.out_dir = cli.out;
    if (cli.opt_data->count()) cfg.data_dir = cli.data;
    if (cli.opt_weights->count()) cfg.weights_path = cli.weights;
    if (cli.opt_split && cli.opt_split->count()) cfg.split = cli.split;
    if (cli.opt_rows && cli.opt_rows->count()) cfg.ablation_rows = cli.rows;
    if (cli.opt_ablation_seeds && cli.opt_ablation_seeds->count()) cfg.ablation_seeds = cli.ablation_seeds;
    exp::validate(cfg);
    return cfg;
}

std::string data_dir(const exp::RunConfig& cfg) { return cfg.data_dir.empty() ? cfg.out_dir : cfg.data_dir; }

std::string weights_path(const exp::RunConfig& cfg) {
    return cfg.weights_path.empty() ? data_dir(cfg) + "/weights.json" : cfg.weights_path;
}

void write_resolved(const exp::RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    io::save_json_file(exp::to_json(cfg), cfg.out_dir + "/resolved_config.json");
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << text;
    if (!out) throw std::runtime_error("cannot write file: " + path);
}

std::string format_metrics(const eval::MetricsReport& m) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3);
    os << "n=" << m.n_episodes << "  TL=" << m.tl << "  SR=" << m.sr << "  OSR=" << m.osr << "  SPL=" << m.spl
       << "  RGS=" << m.rgs << "  RGSPL=" << m.rgspl;
    return os.str();
}

std::string metrics_csv(const eval::MetricsReport& m) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "n_episodes,tl,sr,osr,spl,rgs,rgspl\n";
    os << m.n_episodes << ',' << m.tl << ',' << m.sr << ',' << m.osr << ',' << m.spl << ',' << m.rgs << ','
       << m.rgspl << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// gen

int cmd_gen(const exp::RunConfig& cfg) {
    const exp::Dataset ds = exp::build_dataset(cfg);
    write_resolved(cfg);
    fs::create_directories(cfg.out_dir + "/envs");

    io::json train_files = io::json::array();
    for (const auto& [id, env] : ds.train_envs) {
        const std::string rel = "envs/env_" + std::to_string(id) + ".json";
        io::save_json_file(io::to_json(env), cfg.out_dir + "/" + rel);
        train_files.push_back(rel);
    }
    io::json unseen_files = io::json::array();
    for (const auto& [id, env] : ds.unseen_envs) {
        const std::string rel = "envs/env_" + std::to_string(id) + ".json";
        io::save_json_file(io::to_json(env), cfg.out_dir + "/" + rel);
        unseen_files.push_back(rel);
    }

    io::save_json_file(io::episodes_to_json(ds.train_episodes), cfg.out_dir + "/episodes_train.json");
    io::save_json_file(io::episodes_to_json(ds.val_seen), cfg.out_dir + "/episodes_val_seen.json");
    io::save_json_file(io::episodes_to_json(ds.val_unseen), cfg.out_dir + "/episodes_val_unseen.json");
    io::save_json_file(io::to_json(ds.vocab), cfg.out_dir + "/vocabulary.json");

    const io::json manifest{{"schema_version", io::kSchemaVersion},
                            {"kind", "dataset_manifest"},
                            {"seed", cfg.seed},
                            {"train_envs", std::move(train_files)},
                            {"unseen_envs", std::move(unseen_files)},
                            {"train_episodes", "episodes_train.json"},
                            {"val_seen", "episodes_val_seen.json"},
                            {"val_unseen", "episodes_val_unseen.json"},
                            {"vocabulary", "vocabulary.json"}};
    io::save_json_file(manifest, cfg.out_dir + "/dataset.json");

    std::cout << "wrote dataset: " << ds.train_envs.size() << " train envs, " << ds.unseen_envs.size()
              << " unseen envs, " << ds.train_episodes.size() << "/" << ds.val_seen.size() << "/"
              << ds.val_unseen.size() << " episodes -> " << cfg.out_dir << "\n";
    return 0;
}

exp::Dataset load_dataset(const std::string& dir) {
    const std::string manifest_path = dir + "/dataset.json";
    const io::json manifest = io::load_json_file(manifest_path);
    io::require_schema(manifest, "dataset_manifest", manifest_path);

    exp::Dataset ds;
    for (const io::json& rel : io::require_field(manifest, "train_envs", manifest_path)) {
        world::Environment env = io::environment_from_json(io::load_json_file(dir + "/" + rel.get<std::string>()));
        const int id = env.id;
        ds.train_envs.emplace(id, std::move(env));
    }
    for (const io::json& rel : io::require_field(manifest, "unseen_envs", manifest_path)) {
        world::Environment env = io::environment_from_json(io::load_json_file(dir + "/" + rel.get<std::string>()));
        const int id = env.id;
        ds.unseen_envs.emplace(id, std::move(env));
    }
    const auto episodes_at = [&](const char* key) {
        const std::string rel = io::require_field(manifest, key, manifest_path).get<std::string>();
        return io::episodes_from_json(io::load_json_file(dir + "/" + rel), rel);
    };
    ds.train_episodes = episodes_at("train_episodes");
    ds.val_seen = episodes_at("val_seen");
    ds.val_unseen = episodes_at("val_unseen");
    const std::string vocab_rel = io::require_field(manifest, "vocabulary", manifest_path).get<std::string>();
    ds.vocab = io::vocabulary_from_json(io::load_json_file(dir + "/" + vocab_rel), vocab_rel);
    return ds;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const exp::RunConfig& cfg) {
    const exp::Dataset ds = load_dataset(data_dir(cfg));
    const scorer::TrainResult result = exp::train_model(ds, cfg, cfg.seed);
    write_resolved(cfg);

    io::save_json_file(io::to_json(result.params), cfg.out_dir + "/weights.json");

    std::ostringstream trace;
    trace << "epoch,loss\n" << std::setprecision(17);
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) trace << e << ',' << result.epoch_loss[e] << '\n';
    write_text(cfg.out_dir + "/loss_trace.csv", trace.str());

    std::cout << std::fixed << std::setprecision(4) << "trained " << cfg.epochs << " epochs on "
              << ds.train_episodes.size() << " episodes, final loss " << result.epoch_loss.back()
              << ", negative draw fraction " << result.negative_fraction << " -> " << cfg.out_dir
              << "/weights.json\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const exp::RunConfig& cfg) {
    const exp::Dataset ds = load_dataset(data_dir(cfg));
    const std::string wpath = weights_path(cfg);
    const scorer::ScorerParams params = io::scorer_params_from_json(io::load_json_file(wpath), wpath);
    if (params.config.vocab_size != ds.vocab.size())
        throw std::runtime_error("weights expect vocabulary size " + std::to_string(params.config.vocab_size) +
                                 " but dataset vocabulary has " + std::to_string(ds.vocab.size()));

    const auto& envs = cfg.split == "val_unseen" ? ds.unseen_envs : ds.train_envs;
    const auto& episodes = cfg.split == "val_unseen" ? ds.val_unseen
                           : cfg.split == "val_seen" ? ds.val_seen
                                                     : ds.train_episodes;
    const int L = exp::resolve_distance_limit(cfg, ds);

    const auto results = exp::run_split(envs, episodes, params, cfg, L);
    const eval::MetricsReport report = exp::evaluate(results, envs, cfg);

    write_resolved(cfg);
    io::save_json_file(io::results_to_json(results), cfg.out_dir + "/results_" + cfg.split + ".json");
    write_text(cfg.out_dir + "/metrics_" + cfg.split + ".txt",
               cfg.split + ": " + format_metrics(report) + " (L=" + std::to_string(L) + ")\n");
    write_text(cfg.out_dir + "/metrics_" + cfg.split + ".csv", metrics_csv(report));

    std::cout << cfg.split << ": " << format_metrics(report) << " (L=" << L << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// ablate

int cmd_ablate(const exp::RunConfig& cfg) {
    const exp::Dataset ds = load_dataset(data_dir(cfg));
    const exp::AblationTable table = exp::run_ablation_suite(cfg, ds);

    write_resolved(cfg);
    const std::string text = exp::format_ablation_table(table);
    write_text(cfg.out_dir + "/ablation.txt", text);
    write_text(cfg.out_dir + "/ablation.csv", exp::ablation_csv(table));
    io::save_json_file(exp::to_json(table), cfg.out_dir + "/ablation.json");

    std::cout << text;
    return 0;
}

// ---------------------------------------------------------------------------
// report

struct Bucketed {
    std::map<int, int> n, nav, ground;
};

std::string bucket_csv(const Bucketed& b, const char* key) {
    std::ostringstream os;
    os << key << ",n,sr,rgs\n" << std::setprecision(17);
    for (const auto& [bucket, count] : b.n) {
        os << bucket << ',' << count << ',' << static_cast<double>(b.nav.at(bucket)) / count << ','
           << static_cast<double>(b.ground.at(bucket)) / count << '\n';
    }
    return os.str();
}

int cmd_report(const exp::RunConfig& cfg, const std::vector<std::string>& inputs) {
    if (inputs.empty()) throw std::runtime_error("report: no results files given");
    const exp::Dataset ds = load_dataset(data_dir(cfg));
    std::map<int, world::Environment> envs = ds.train_envs;
    for (const auto& [id, env] : ds.unseen_envs) envs.emplace(id, env);

    const eval::EvalRules rules = exp::eval_rules(cfg);
    std::ostringstream text;
    Bucketed by_length, by_gold, by_ball;

    for (const std::string& path : inputs) {
        const auto results = io::results_from_json(io::load_json_file(path), path);
        const eval::MetricsReport report = eval::compute_metrics(results, envs, rules);
        text << path << ": " << format_metrics(report) << '\n';

        for (const agent::EpisodeResult& r : results) {
            const world::Environment& env = envs.at(r.episode.environment_id);
            const int nav = eval::navigation_success(r, env, rules) ? 1 : 0;
            const int ground = eval::grounding_success(r, env) ? 1 : 0;
            const int buckets[3] = {static_cast<int>(r.episode.instruction.tokens.size()), r.episode.gold_steps,
                                    static_cast<int>(r.visited.size())};
            Bucketed* sinks[3] = {&by_length, &by_gold, &by_ball};
            for (int i = 0; i < 3; ++i) {
                sinks[i]->n[buckets[i]] += 1;
                sinks[i]->nav[buckets[i]] += nav;
                sinks[i]->ground[buckets[i]] += ground;
            }
        }
    }

    write_resolved(cfg);
    write_text(cfg.out_dir + "/report.txt", text.str());
    write_text(cfg.out_dir + "/plot_success_vs_length.csv", bucket_csv(by_length, "instruction_tokens"));
    write_text(cfg.out_dir + "/plot_success_vs_gold_steps.csv", bucket_csv(by_gold, "gold_steps"));
    write_text(cfg.out_dir + "/plot_success_vs_ball.csv", bucket_csv(by_ball, "viewpoints_in_range"));

    std::cout << text.str();
    std::cout << "plots -> " << cfg.out_dir << "/plot_success_vs_{length,gold_steps,ball}.csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"procedural remote-grounding lab"};
    app.require_subcommand(1);

    Cli gen_cli, train_cli, eval_cli, ablate_cli, report_cli;

    CLI::App* gen = app.add_subcommand("gen", "generate environments, episodes, and vocabulary");
    add_common(gen, gen_cli);

    CLI::App* train = app.add_subcommand("train", "train the region scorer on a generated dataset");
    add_common(train, train_cli);

    CLI::App* eval_cmd = app.add_subcommand("eval", "run the agent on a split and score it");
    add_common(eval_cmd, eval_cli);
    eval_cli.opt_split = eval_cmd->add_option("--split", eval_cli.split, "train, val_seen, or val_unseen");

    CLI::App* ablate = app.add_subcommand("ablate", "run the toggle matrix and tabulate per-row metrics");
    add_common(ablate, ablate_cli);
    ablate_cli.opt_rows = ablate->add_option("--rows", ablate_cli.rows, "ablation rows (overrides the config list)");
    ablate_cli.opt_ablation_seeds = ablate->add_option("--seeds", ablate_cli.ablation_seeds, "seeds per row");

    CLI::App* report = app.add_subcommand("report", "merge results files into tables and plot data");
    add_common(report, report_cli);
    report->add_option("inputs", report_cli.inputs, "episode results JSON files")->expected(-1);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(resolve_config(gen_cli));
        if (train->parsed()) return cmd_train(resolve_config(train_cli));
        if (eval_cmd->parsed()) return cmd_eval(resolve_config(eval_cli));
        if (ablate->parsed()) return cmd_ablate(resolve_config(ablate_cli));
        if (report->parsed()) return cmd_report(resolve_config(report_cli), report_cli.inputs);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
