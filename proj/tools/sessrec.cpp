#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "sessrec/dataset_io.hpp"
#include "sessrec/ingest.hpp"
#include "sessrec/train.hpp"

namespace fs = std::filesystem;
using namespace sessrec;

namespace {

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << text;
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::string token;
    std::istringstream in(csv);
    while (std::getline(in, token, ',')) out.push_back(token);
    return out;
}

void check_catalog(const ParameterStore& store, const Catalog& catalog) {
    size_t want_rows = static_cast<size_t>(catalog.item_count()) + 1;
    if (store.block("item_embeddings").value.rows != want_rows)
        throw ConfigError("checkpoint was built for a different item catalog");
}

void cmd_prep(const RunConfig& cfg, const std::string& raw_path, const std::string& out_dir) {
    std::ifstream in(raw_path);
    if (!in) throw IoError("cannot open " + raw_path);
    DatasetSplit split = ingest(in, cfg.ingest);
    save_dataset_file(join(out_dir, "dataset.bin"), split);
    std::string stats = format_stats(compute_stats(split));
    write_text(join(out_dir, "stats.txt"), stats);
    save_config_file(cfg, join(out_dir, "prep_config.txt"));
    std::cout << stats;
}

void cmd_pretrain(const RunConfig& cfg, const std::string& dataset, const std::string& out_dir) {
    DatasetSplit split = load_dataset_file(dataset);
    validate(cfg.train);
    ParameterStore store = make_store(split.catalog.item_count(), cfg.train);
    double loss = pretrain_gru(store, split, cfg.train);
    save_store_file(join(out_dir, "pretrain.ckpt"), store);
    save_config_file(cfg, join(out_dir, "pretrain_config.txt"));
    std::cout << "pretrain mean loss " << loss << "\n";
}

void cmd_train(const RunConfig& cfg, const std::string& dataset, const std::string& init_ckpt,
               const std::string& out_dir) {
    DatasetSplit split = load_dataset_file(dataset);
    ParameterStore store = init_ckpt.empty() ? make_store(split.catalog.item_count(), cfg.train)
                                             : load_store_file(init_ckpt);
    check_catalog(store, split.catalog);
    std::ofstream log(join(out_dir, "epochs.jsonl"));
    if (!log) throw IoError("cannot write " + join(out_dir, "epochs.jsonl"));
    // A supplied checkpoint replaces the internal pretraining stage.
    TrainResult result = train_model(store, split, cfg.train, &log, init_ckpt.empty());
    save_store_file(join(out_dir, "final.ckpt"), store);
    save_store_file(join(out_dir, "best.ckpt"), result.best);
    save_config_file(cfg, join(out_dir, "train_config.txt"));
    if (result.best_epoch > 0)
        std::cout << "best epoch " << result.best_epoch << " of " << result.epochs.size() << "\n";
    MetricsReport rep = evaluate(result.best, split, cfg.train);
    write_text(join(out_dir, "metrics.json"), to_json_string(rep) + "\n");
    std::cout << to_json_string(rep) << "\n";
}

void cmd_eval(const RunConfig& cfg, const std::string& dataset, const std::string& checkpoint,
              const std::string& out_dir) {
    DatasetSplit split = load_dataset_file(dataset);
    ParameterStore store = load_store_file(checkpoint);
    check_catalog(store, split.catalog);
    MetricsReport rep = evaluate(store, split, cfg.train);
    write_text(join(out_dir, "eval_metrics.json"), to_json_string(rep) + "\n");
    save_config_file(cfg, join(out_dir, "eval_config.txt"));
    std::cout << to_json_string(rep) << "\n";
}

void cmd_ablate(const RunConfig& cfg, const std::string& dataset, const std::string& variants_csv,
                const std::string& out_dir) {
    std::vector<std::string> variants = split_list(variants_csv);
    if (variants.empty()) throw ConfigError("no ablation variants given");
    for (const std::string& v : variants)
        apply_variant(cfg.train, v);  // reject unknown names before training anything
    DatasetSplit split = load_dataset_file(dataset);
    save_config_file(cfg, join(out_dir, "ablate_config.txt"));
    for (const std::string& v : variants) {
        MetricsReport rep = run_ablation(v, split, cfg.train);
        write_text(join(out_dir, "ablation_" + v + ".json"), to_json_string(rep) + "\n");
        std::cout << v << " recall@5 " << rep.recall5 << " recall@20 " << rep.recall20
                  << " mrr@5 " << rep.mrr5 << " mrr@20 " << rep.mrr20 << "\n";
    }
}

void cmd_recommend(const RunConfig& cfg, const std::string& dataset, const std::string& checkpoint,
                   const std::string& items_csv, const std::string& user_raw, size_t k) {
    DatasetSplit split = load_dataset_file(dataset);
    ParameterStore store = load_store_file(checkpoint);
    check_catalog(store, split.catalog);
    const TrainConfig& tc = cfg.train;

    std::vector<int32_t> items;
    for (const std::string& token : split_list(items_csv)) {
        auto it = split.catalog.item_index.find(token);
        if (it == split.catalog.item_index.end())
            throw DataError("unknown item id: " + token);
        items.push_back(it->second);
    }
    if (items.empty()) throw DataError("the session item list is empty");

    SessionCache cache = build_session_cache(store, split, tc);
    auto pool = train_session_pool(split);
    CandidateSet set;
    std::vector<Vec> history;
    if (!user_raw.empty()) {
        auto it = split.catalog.user_index.find(user_raw);
        if (it == split.catalog.user_index.end())
            throw DataError("unknown user id: " + user_raw);
        int32_t user = it->second;
        Session current;  // a fresh session after everything the user has done
        current.user = user;
        current.items = items;
        current.ordinal = std::numeric_limits<int32_t>::max();
        auto sims = build_similar_users(split, tc.sim_users);
        Rng rng = candidate_rng(tc.seed, user, current.ordinal);
        set = assemble_candidates(user, current, split, pool, sims.top[user], tc, rng);
        history = gather_history(split, cache, user, current.ordinal, tc);
    } else if (!tc.no_sampled_candidates) {
        // No owner: candidates are a uniform sample of the training split.
        Rng rng = make_rng(mix_seed(tc.seed, kCandidateSalt, 0x636f6c64ull));
        std::vector<size_t> order(pool.size());
        std::iota(order.begin(), order.end(), size_t{0});
        size_t want = std::min(tc.sample_n, pool.size());
        for (size_t i = 0; i < want; ++i) {
            std::swap(order[i], order[i + uniform_index(rng, order.size() - i)]);
            set.refs.push_back(CandidateRef{pool[order[i]]->id, CandidateSource::sample});
        }
    }
    auto entries = embed_candidates(set, cache);
    PredictionContext ctx = model_forward(store, items, entries, history, tc);
    for (int32_t item : recommend_items(ctx.scores, k))
        std::cout << split.catalog.items[static_cast<size_t>(item)] << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-session next-item recommender"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".";
    uint64_t seed = 0;
    app.add_option("--config", config_path, "key=value configuration file")
        ->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "override the configured RNG seed");
    app.add_option("--out", out_dir, "output directory, created if missing");

    std::string raw_path, dataset_path, ckpt_path, items_csv, user_raw;
    std::string variants_csv = "a,b1,b2,c";
    size_t top_n = 10;

    auto* prep = app.add_subcommand("prep", "sessionize a raw interaction log into a dataset");
    prep->add_option("input", raw_path, "tab-separated log of user, item, timestamp")
        ->required()
        ->check(CLI::ExistingFile);

    auto* pretrain = app.add_subcommand("pretrain", "pretrain the session encoder alone");
    pretrain->add_option("dataset", dataset_path, "dataset file from prep")
        ->required()
        ->check(CLI::ExistingFile);

    std::string init_ckpt;
    auto* train = app.add_subcommand("train", "train the model and evaluate the best checkpoint");
    train->add_option("dataset", dataset_path, "dataset file from prep")
        ->required()
        ->check(CLI::ExistingFile);
    train->add_option("--init", init_ckpt, "start from this checkpoint instead of pretraining")
        ->check(CLI::ExistingFile);

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test slice");
    eval_cmd->add_option("dataset", dataset_path, "dataset file from prep")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("checkpoint", ckpt_path, "parameter checkpoint")
        ->required()
        ->check(CLI::ExistingFile);

    auto* ablate = app.add_subcommand("ablate", "train and evaluate ablation variants");
    ablate->add_option("dataset", dataset_path, "dataset file from prep")
        ->required()
        ->check(CLI::ExistingFile);
    ablate->add_option("--variants", variants_csv, "comma-separated subset of a,b1,b2,c");

    auto* rec = app.add_subcommand("recommend", "rank items to follow an in-progress session");
    rec->add_option("dataset", dataset_path, "dataset file from prep")
        ->required()
        ->check(CLI::ExistingFile);
    rec->add_option("checkpoint", ckpt_path, "parameter checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    rec->add_option("items", items_csv, "comma-separated raw item ids, oldest first")->required();
    rec->add_option("-k,--top", top_n, "how many items to print");
    rec->add_option("--user", user_raw, "raw user id whose history seeds retrieval");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg = load_config_file(config_path);
        if (seed_opt->count() > 0) cfg.train.seed = seed;
        fs::create_directories(out_dir);

        if (prep->parsed()) cmd_prep(cfg, raw_path, out_dir);
        else if (pretrain->parsed()) cmd_pretrain(cfg, dataset_path, out_dir);
        else if (train->parsed()) cmd_train(cfg, dataset_path, init_ckpt, out_dir);
        else if (eval_cmd->parsed()) cmd_eval(cfg, dataset_path, ckpt_path, out_dir);
        else if (ablate->parsed()) cmd_ablate(cfg, dataset_path, variants_csv, out_dir);
        else if (rec->parsed()) cmd_recommend(cfg, dataset_path, ckpt_path, items_csv, user_raw, top_n);
        return 0;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
