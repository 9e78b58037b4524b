#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sessrec/model.hpp"

namespace sessrec {

// ---------------------------------------------------------------------------
// Ranking metrics over an already-ranked item list.

/// 1-based rank of target in the list, 0 if absent.
inline size_t rank_in(const std::vector<int32_t>& ranked, int32_t target) {
    for (size_t i = 0; i < ranked.size(); ++i)
        if (ranked[i] == target) return i + 1;
    return 0;
}

inline double recall_at_k(const std::vector<int32_t>& ranked, int32_t target, size_t k) {
    size_t r = rank_in(ranked, target);
    return (r >= 1 && r <= k) ? 1.0 : 0.0;
}

/// 1/rank when the target ranks within the cutoff, else 0.
inline double mrr_at_k(const std::vector<int32_t>& ranked, int32_t target, size_t k) {
    size_t r = rank_in(ranked, target);
    return (r >= 1 && r <= k) ? 1.0 / static_cast<double>(r) : 0.0;
}

// ---------------------------------------------------------------------------
// Split evaluation: every prefix of every session in the chosen slice
// predicts its next item over the full catalog.

struct MetricsReport {
    double recall5 = 0.0;
    double recall20 = 0.0;
    double mrr5 = 0.0;
    double mrr20 = 0.0;
    size_t instances = 0;
    std::string config;  // effective model configuration echo
    std::string label;   // optional run tag (ablation variant)
};

inline std::string to_json_string(const MetricsReport& r) {
    nlohmann::json j;
    j["recall@5"] = r.recall5;
    j["recall@20"] = r.recall20;
    j["mrr@5"] = r.mrr5;
    j["mrr@20"] = r.mrr20;
    j["instances"] = r.instances;
    j["config"] = r.config;
    j["label"] = r.label;
    return j.dump(2);
}

enum class EvalSlice { validation, test };

inline std::pair<size_t, size_t> slice_range(const UserSplit& u, EvalSlice s) {
    if (s == EvalSlice::validation) return {u.ranges.val_begin, u.ranges.val_end};
    return {u.ranges.test_begin, u.ranges.n};
}

inline size_t count_eval_instances(const DatasetSplit& split, EvalSlice slice) {
    size_t n = 0;
    for (const UserSplit& u : split.users) {
        auto [b, e] = slice_range(u, slice);
        for (size_t i = b; i < e; ++i)
            if (u.sessions[i].items.size() >= 2) n += u.sessions[i].items.size() - 1;
    }
    return n;
}

inline MetricsReport evaluate_slice(ParameterStore& store, const DatasetSplit& split,
                                    const TrainConfig& cfg, EvalSlice slice) {
    if (count_eval_instances(split, slice) == 0)
        throw DataError("evaluate: empty evaluation split");
    SessionCache cache = build_session_cache(store, split, cfg);
    auto pool = train_session_pool(split);
    auto sims = build_similar_users(split, cfg.sim_users);

    MetricsReport rep;
    rep.config = format_config(cfg);
    for (const UserSplit& u : split.users) {
        auto [lo, hi] = slice_range(u, slice);
        for (size_t i = lo; i < hi; ++i) {
            const Session& s = u.sessions[i];
            if (s.items.size() < 2) continue;
            Rng rng = candidate_rng(cfg.seed, s.user, s.ordinal);
            CandidateSet set = assemble_candidates(s.user, s, split, pool, sims.top[s.user],
                                                   cfg, rng);
            auto entries = embed_candidates(set, cache);
            auto history = gather_history(split, cache, s.user, s.ordinal, cfg);
            for (size_t t = 1; t < s.items.size(); ++t) {
                std::vector<int32_t> prefix(s.items.begin(),
                                            s.items.begin() + static_cast<std::ptrdiff_t>(t));
                PredictionContext ctx =
                    model_forward(store, std::move(prefix), entries, history, cfg);
                auto ranked = recommend_items(ctx.scores, 20);
                int32_t target = s.items[t];
                rep.recall5 += recall_at_k(ranked, target, 5);
                rep.recall20 += recall_at_k(ranked, target, 20);
                rep.mrr5 += mrr_at_k(ranked, target, 5);
                rep.mrr20 += mrr_at_k(ranked, target, 20);
                ++rep.instances;
            }
        }
    }
    double n = static_cast<double>(rep.instances);
    rep.recall5 /= n;
    rep.recall20 /= n;
    rep.mrr5 /= n;
    rep.mrr20 /= n;
    return rep;
}

/// Test-split evaluation; users with an empty test part contribute nothing.
inline MetricsReport evaluate(ParameterStore& store, const DatasetSplit& split,
                              const TrainConfig& cfg) {
    return evaluate_slice(store, split, cfg, EvalSlice::test);
}

// ---------------------------------------------------------------------------
// Fixed-ranking baseline: the same ranked list answers every instance.

/// Items ranked by training-split occurrence count descending, ties by item
/// index ascending, truncated to k.
inline std::vector<int32_t> popularity_ranking(const DatasetSplit& split, size_t k) {
    std::vector<int64_t> freq(static_cast<size_t>(split.catalog.item_count()) + 1, 0);
    for (const UserSplit& u : split.users)
        for (size_t i = 0; i < u.ranges.train_end; ++i)
            for (int32_t item : u.sessions[i].items) freq[static_cast<size_t>(item)]++;
    std::vector<int32_t> items(freq.size() - 1);
    std::iota(items.begin(), items.end(), 1);
    k = std::min(k, items.size());
    std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(k),
                      items.end(), [&](int32_t a, int32_t b) {
                          if (freq[a] != freq[b]) return freq[a] > freq[b];
                          return a < b;
                      });
    items.resize(k);
    return items;
}

/// Evaluates a constant ranking over the test slice (baseline scorer).
inline MetricsReport evaluate_fixed_ranking(const std::vector<int32_t>& ranked,
                                            const DatasetSplit& split) {
    MetricsReport rep;
    rep.label = "fixed-ranking";
    for (const UserSplit& u : split.users) {
        for (size_t i = u.ranges.test_begin; i < u.ranges.n; ++i) {
            const Session& s = u.sessions[i];
            for (size_t t = 1; t < s.items.size(); ++t) {
                int32_t target = s.items[t];
                rep.recall5 += recall_at_k(ranked, target, 5);
                rep.recall20 += recall_at_k(ranked, target, 20);
                rep.mrr5 += mrr_at_k(ranked, target, 5);
                rep.mrr20 += mrr_at_k(ranked, target, 20);
                ++rep.instances;
            }
        }
    }
    if (rep.instances == 0) throw DataError("evaluate_fixed_ranking: empty test split");
    double n = static_cast<double>(rep.instances);
    rep.recall5 /= n;
    rep.recall20 /= n;
    rep.mrr5 /= n;
    rep.mrr20 /= n;
    return rep;
}

}  // namespace sessrec
