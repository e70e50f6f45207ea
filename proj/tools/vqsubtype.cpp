// vqsubtype: fetch → preprocess → train → embed → evaluate.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>

#include "vqs/analysis.hpp"
#include "vqs/binio.hpp"
#include "vqs/errors.hpp"
#include "vqs/ingestion.hpp"
#include "vqs/run_config.hpp"
#include "vqs/training.hpp"

namespace fs = std::filesystem;
using namespace vqs;

namespace {

const std::vector<std::string> kTrainKeys = {
    "hidden1",    "hidden2",       "latent_dim", "codebook_size", "activation", "batch_size",
    "steps",      "learning_rate", "adam_beta1", "adam_beta2",    "adam_eps",   "commitment",
    "codebook_mode", "ema_decay",  "ema_epsilon", "seed",         "smoothing_window", "checkpoint_interval"};

/// Config-key flags for one subcommand, remembered so only flags actually
/// given on the command line override the config file.
struct KeyFlags {
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;

    void add(CLI::App* app, const std::vector<std::string>& keys) {
        const RunConfig defaults;
        for (const auto& key : keys) {
            std::string desc;
            for (const auto& k : config_keys())
                if (k.name == key) desc = k.description;
            auto* opt = app->add_option(flag_for_key(key), values[key], desc);
            opt->default_str(config_value(defaults, key));
            options[key] = opt;
        }
    }

    std::vector<std::pair<std::string, std::string>> overrides() const {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& [key, opt] : options)
            if (opt->count() > 0) out.emplace_back(key, values.at(key));
        return out;
    }
};

std::optional<fs::path> optional_path(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return fs::path(s);
}

int cmd_fetch(const std::string& manifest_path, const std::string& out_dir) {
    const auto manifest = parse_manifest(fs::path(manifest_path));
    const auto report = fetch_manifest(manifest, out_dir);
    for (const auto& r : report.records) {
        if (r.outcome == FetchOutcome::failed) std::cerr << "failed: " << r.entry.dest_name << ": " << r.detail << '\n';
    }
    std::cerr << report.count(FetchOutcome::fetched) << " fetched, " << report.count(FetchOutcome::skipped)
              << " skipped, " << report.count(FetchOutcome::failed) << " failed\n";
    return report.count(FetchOutcome::failed) == 0 ? 0 : 1;
}

struct PreprocessArgs {
    std::vector<std::string> mrna, mirna;
    std::vector<std::string> platforms;
    std::string out, summary, config;
};

int cmd_preprocess(const PreprocessArgs& a, std::vector<std::pair<std::string, std::string>> overrides) {
    if (!a.platforms.empty()) {
        std::string joined;
        for (std::size_t i = 0; i < a.platforms.size(); ++i) joined += (i ? "," : "") + a.platforms[i];
        overrides.emplace_back("platforms", joined);
    }
    const RunConfig cfg = resolve_config(optional_path(a.config), overrides);
    const std::size_t n_files = a.mrna.size() + a.mirna.size();
    if (cfg.platforms.size() > n_files) {
        throw UsageError(std::to_string(cfg.platforms.size()) + " platform kinds given for " +
                         std::to_string(n_files) + " input files");
    }
    auto platform_of = [&](std::size_t i) { return i < cfg.platforms.size() ? cfg.platforms[i] : Platform::array; };

    std::vector<PlatformInput> mrna, mirna;
    std::size_t index = 0;
    for (const auto& p : a.mrna) mrna.push_back({load_expression(p), platform_of(index++), p});
    for (const auto& p : a.mirna) mirna.push_back({load_expression(p), platform_of(index++), p});

    PreprocessOptions opts;
    opts.impute_k = cfg.impute_k;
    if (cfg.exclude) opts.excluded_features = read_id_list(*cfg.exclude);
    const auto result = preprocess(std::move(mrna), std::move(mirna), opts);

    save_matrix_cache(result.matrix, a.out);
    const std::string text = result.summary.to_text();
    write_text_atomic(a.summary.empty() ? fs::path(a.out + ".summary.txt") : fs::path(a.summary), text);
    std::cerr << text;
    return 0;
}

struct TrainArgs {
    std::string data, config, out_ckpt, metrics, resume;
};

int cmd_train(const TrainArgs& a, const std::vector<std::pair<std::string, std::string>>& overrides) {
    const RunConfig cfg = resolve_config(optional_path(a.config), overrides);
    const auto data = load_expression(a.data);

    std::optional<Checkpoint> start;
    if (!a.resume.empty()) {
        start = load_checkpoint(a.resume);
        TrainConfig wanted = cfg.train;
        wanted.steps = start->config.steps;
        if (!(wanted == start->config)) {
            std::cerr << "note: resuming uses the training settings stored in " << a.resume
                      << "; only steps is taken from the configuration\n";
        }
    }

    std::vector<MetricRecord> history = start ? start->state.history : std::vector<MetricRecord>{};
    const std::size_t total = cfg.train.steps;
    const std::size_t window = start ? start->config.smoothing_window : cfg.train.smoothing_window;
    const std::size_t every = std::max<std::size_t>(1, total / 20);

    TrainHooks hooks;
    hooks.checkpoint_path = a.out_ckpt;
    hooks.on_step = [&](const MetricRecord& r) {
        history.push_back(r);
        if (r.step % every == 0 || r.step == total) {
            std::cerr << "step " << r.step << "/" << total << "  nmse " << r.nmse << "  perplexity " << r.perplexity
                      << '\n';
        }
    };
    auto write_metrics = [&] {
        if (!a.metrics.empty()) write_text_atomic(a.metrics, metrics_csv(history, window));
    };
    try {
        if (start) {
            resume(std::move(*start), data, total, hooks);
        } else {
            train(data, cfg.train, hooks);
        }
    } catch (const TrainingDiverged&) {
        write_metrics();
        throw;
    }
    write_metrics();
    return 0;
}

int cmd_embed(const std::string& ckpt_path, const std::string& data_path, const std::string& out) {
    const auto ckpt = load_checkpoint(ckpt_path);
    const auto data = load_expression(data_path);
    const auto table = embed(ckpt, data);
    write_latent_table(table, out);
    std::cerr << "embedded " << table.size() << " samples into " << table.z_e.cols() << " dimensions\n";
    return 0;
}

struct EvaluateArgs {
    std::string latents, data, labels, out_dir, config;
    std::string latent = "z_e";
};

int cmd_evaluate(const EvaluateArgs& a, const std::vector<std::pair<std::string, std::string>>& overrides) {
    const RunConfig cfg = resolve_config(optional_path(a.config), overrides);
    const auto latents = read_latent_table(a.latents);
    const auto data = load_expression(a.data);
    const auto labels = read_labels(a.labels);
    EvaluateOptions opts;
    opts.pca_components = cfg.pca_components;
    opts.kmeans_restarts = cfg.kmeans_restarts;
    opts.seed = cfg.train.seed;
    opts.latent = a.latent == "z_q" ? LatentSpace::z_q : LatentSpace::z_e;
    const auto report = evaluate(latents, data, labels, opts);
    write_evaluation(report, a.out_dir);
    std::cerr << report.to_csv();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    keep_freed_memory();
    CLI::App app{"VQ-VAE subtype analysis of paired mRNA/miRNA expression data.\n"
                 "Pipeline order: fetch, preprocess, train, embed, evaluate."};
    app.name("vqsubtype");
    app.require_subcommand(1);

    std::string manifest, fetch_out;
    auto* fetch = app.add_subcommand("fetch", "Download manifest entries and verify their SHA-256");
    fetch->add_option("--manifest", manifest, "Manifest: source<TAB>sha256<TAB>file name per line")->required();
    fetch->add_option("--out", fetch_out, "Destination directory")->required();

    PreprocessArgs pre;
    KeyFlags pre_flags;
    auto* preprocess_cmd = app.add_subcommand("preprocess", "Build the normalised mRNA+miRNA matrix cache");
    preprocess_cmd->add_option("--mrna", pre.mrna, "mRNA expression TSV or cache (repeatable)")->required();
    preprocess_cmd->add_option("--mirna", pre.mirna, "miRNA expression TSV or cache (repeatable)")->required();
    preprocess_cmd->add_option("--out", pre.out, "Output matrix cache")->required();
    preprocess_cmd->add_option("--summary", pre.summary, "Summary text file")->default_str("<out>.summary.txt");
    preprocess_cmd->add_option("--platform", pre.platforms,
                               "hiseq or array per input file, mRNA files first (repeatable; unlisted files: array)");
    preprocess_cmd->add_option("--config", pre.config, "Config file of key = value lines");
    pre_flags.add(preprocess_cmd, {"impute_k", "exclude"});

    TrainArgs tr;
    KeyFlags train_flags;
    auto* train_cmd = app.add_subcommand("train", "Train the VQ-VAE on a preprocessed matrix");
    train_cmd->add_option("--data", tr.data, "Preprocessed matrix (cache or TSV)")->required();
    train_cmd->add_option("--config", tr.config, "Config file of key = value lines");
    train_cmd->add_option("--out-ckpt", tr.out_ckpt, "Checkpoint path (periodic and final)")->required();
    train_cmd->add_option("--metrics", tr.metrics, "Per-step metrics CSV");
    train_cmd->add_option("--resume", tr.resume, "Continue from this checkpoint up to --steps");
    train_flags.add(train_cmd, kTrainKeys);

    std::string ckpt, embed_data, embed_out;
    auto* embed_cmd = app.add_subcommand("embed", "Write z_e, code index and z_q for every sample");
    embed_cmd->add_option("--ckpt", ckpt, "Trained checkpoint")->required();
    embed_cmd->add_option("--data", embed_data, "Preprocessed matrix")->required();
    embed_cmd->add_option("--out", embed_out, "Latent table TSV")->required();

    EvaluateArgs ev;
    KeyFlags eval_flags;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "PCA plots and subtype separation scores");
    evaluate_cmd->add_option("--latents", ev.latents, "Latent table from embed")->required();
    evaluate_cmd->add_option("--data", ev.data, "Preprocessed matrix")->required();
    evaluate_cmd->add_option("--labels", ev.labels, "sample_id<TAB>subtype file")->required();
    evaluate_cmd->add_option("--out-dir", ev.out_dir, "Directory for report.csv and the two SVGs")->required();
    evaluate_cmd->add_option("--config", ev.config, "Config file of key = value lines");
    evaluate_cmd->add_option("--latent", ev.latent, "Latent vectors to analyse: z_e or z_q")
        ->check(CLI::IsMember({"z_e", "z_q"}))
        ->default_str("z_e");
    eval_flags.add(evaluate_cmd, {"seed", "kmeans_restarts", "pca_components"});

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*fetch) return cmd_fetch(manifest, fetch_out);
        if (*preprocess_cmd) return cmd_preprocess(pre, pre_flags.overrides());
        if (*train_cmd) return cmd_train(tr, train_flags.overrides());
        if (*embed_cmd) return cmd_embed(ckpt, embed_data, embed_out);
        if (*evaluate_cmd) return cmd_evaluate(ev, eval_flags.overrides());
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
