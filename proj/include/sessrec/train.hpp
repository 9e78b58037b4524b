#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "sessrec/metrics.hpp"
#include "sessrec/model.hpp"

namespace sessrec {

inline constexpr uint64_t kEpochSalt = 0xe90cull;

struct EpochRecord {
    size_t epoch = 0;        // 1-based
    double train_loss = 0.0; // mean instance loss over the epoch
    MetricsReport val;       // meaningful only when has_val
    bool has_val = false;
};

inline std::string to_json_line(const EpochRecord& r) {
    nlohmann::json j;
    j["epoch"] = r.epoch;
    j["train_loss"] = r.train_loss;
    if (r.has_val) {
        j["val_recall@5"] = r.val.recall5;
        j["val_recall@20"] = r.val.recall20;
        j["val_mrr@5"] = r.val.mrr5;
        j["val_mrr@20"] = r.val.mrr20;
    }
    return j.dump();
}

struct TrainResult {
    std::vector<EpochRecord> epochs;
    size_t best_epoch = 0;  // 1-based; 0 when no validation instances exist
    ParameterStore best;    // best validation Recall@20 snapshot, else final
};

/// One (session, prefix) training pair; items[prefix_len] is the target.
struct TrainInstance {
    const Session* s = nullptr;
    size_t prefix_len = 0;
};

/// Runs pretraining (unless disabled) and the main loop: per epoch the
/// frozen session cache is rebuilt, every prefix of every training session
/// predicts its next item, and validation picks the best checkpoint.
inline TrainResult train_model(ParameterStore& store, const DatasetSplit& split,
                               const TrainConfig& cfg, std::ostream* log = nullptr,
                               bool with_pretrain = true) {
    validate(cfg);
    if (with_pretrain && cfg.pretrain_epochs > 0) pretrain_gru(store, split, cfg);

    auto pool = train_session_pool(split);
    auto sims = build_similar_users(split, cfg.sim_users);
    std::unordered_map<int64_t, CandidateSet> candidates;  // per session, epoch-invariant
    std::vector<TrainInstance> instances;
    for (const UserSplit& u : split.users) {
        for (size_t i = 0; i < u.ranges.train_end; ++i) {
            const Session& s = u.sessions[i];
            if (s.items.size() < 2) continue;
            Rng rng = candidate_rng(cfg.seed, s.user, s.ordinal);
            candidates.emplace(
                s.id, assemble_candidates(s.user, s, split, pool, sims.top[s.user], cfg, rng));
            for (size_t t = 1; t < s.items.size(); ++t) instances.push_back({&s, t});
        }
    }
    if (instances.empty()) throw DataError("train_model: no training instances");
    const size_t val_n = count_eval_instances(split, EvalSlice::validation);

    Adam opt(cfg.lr);
    TrainResult result;
    double best_metric = -1.0;
    for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        SessionCache cache;
        try {
            cache = build_session_cache(store, split, cfg);
        } catch (const NumericError& e) {
            throw NumericError("train_model: " + std::string(e.what()) +
                               " while refreshing the session cache for epoch " +
                               std::to_string(epoch));
        }
        auto order = instances;
        Rng rng = make_rng(mix_seed(cfg.seed, kEpochSalt, epoch));
        deterministic_shuffle(order, rng);

        double total = 0.0;
        size_t step = 0;
        for (const TrainInstance& inst : order) {
            ++step;
            const Session& s = *inst.s;
            try {
                auto entries = embed_candidates(candidates.at(s.id), cache);
                auto history = gather_history(split, cache, s.user, s.ordinal, cfg);
                std::vector<int32_t> prefix(s.items.begin(),
                                            s.items.begin() +
                                                static_cast<std::ptrdiff_t>(inst.prefix_len));
                PredictionContext ctx =
                    model_forward(store, std::move(prefix), entries, std::move(history), cfg);
                size_t target = static_cast<size_t>(s.items[inst.prefix_len]) - 1;
                double loss = instance_loss(ctx, target);
                if (!std::isfinite(loss)) throw NumericError("non-finite loss");
                total += loss;
                model_backward(store, ctx, target, cfg);
                opt.step(store);
            } catch (const NumericError& e) {
                throw NumericError("train_model: " + std::string(e.what()) + " at epoch " +
                                   std::to_string(epoch) + " step " + std::to_string(step));
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = total / static_cast<double>(order.size());
        if (val_n > 0) {
            rec.val = evaluate_slice(store, split, cfg, EvalSlice::validation);
            rec.has_val = true;
            if (rec.val.recall20 > best_metric) {
                best_metric = rec.val.recall20;
                result.best = store;
                result.best_epoch = epoch;
            }
        }
        if (log) (*log) << to_json_line(rec) << "\n" << std::flush;
        result.epochs.push_back(std::move(rec));
    }
    if (result.best_epoch == 0) result.best = store;
    return result;
}

// ---------------------------------------------------------------------------
// Ablation runner.

inline TrainConfig apply_variant(TrainConfig cfg, const std::string& variant) {
    if (variant == "a") cfg.no_long_term = true;
    else if (variant == "b1") cfg.use_all_candidates = true;
    else if (variant == "b2") cfg.no_sampled_candidates = true;
    else if (variant == "c") cfg.last_state_readout = true;
    else throw ConfigError("unknown ablation variant: " + variant);
    return cfg;
}

/// Trains from scratch with the variant's flag set and evaluates on test.
inline MetricsReport run_ablation(const std::string& variant, const DatasetSplit& split,
                                  TrainConfig cfg, std::ostream* log = nullptr) {
    cfg = apply_variant(std::move(cfg), variant);
    ParameterStore store = make_store(split.catalog.item_count(), cfg);
    TrainResult result = train_model(store, split, cfg, log);
    MetricsReport rep = evaluate(result.best, split, cfg);
    rep.label = variant;
    return rep;
}

}  // namespace sessrec
