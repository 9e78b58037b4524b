#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "sessrec/attention.hpp"
#include "sessrec/config.hpp"
#include "sessrec/gru.hpp"
#include "sessrec/optimizer.hpp"
#include "sessrec/params.hpp"
#include "sessrec/retrieval.hpp"
#include "sessrec/tensor.hpp"

namespace sessrec {

// ---------------------------------------------------------------------------
// Catalog scoring. Score position j corresponds to catalog item j+1 (item 0
// is the padding slot and is never scored).

inline Vec score_catalog(const ParameterStore& store, const Vec& interest) {
    const Mat& emb = store.block("item_embeddings").value;
    if (interest.size() != emb.cols)
        throw ShapeError("score_catalog: interest dimension mismatch");
    size_t items = emb.rows - 1;
    Vec scores(items);
    for (size_t j = 0; j < items; ++j) {
        const double* row = &emb.a[(j + 1) * emb.cols];
        double s = 0.0;
        for (size_t t = 0; t < emb.cols; ++t) s += row[t] * interest[t];
        scores[j] = s;
    }
    return scores;
}

/// Backward of score_catalog: accumulates item-embedding gradients and
/// returns the gradient with respect to the interest vector.
inline Vec score_catalog_backward(ParameterStore& store, const Vec& interest,
                                  const Vec& d_scores) {
    ParamBlock& blk = store.block("item_embeddings");
    if (d_scores.size() != blk.value.rows - 1)
        throw ShapeError("score_catalog_backward: score length mismatch");
    size_t d = blk.value.cols;
    Vec d_interest(d, 0.0);
    for (size_t j = 0; j < d_scores.size(); ++j) {
        const double g = d_scores[j];
        if (g == 0.0) continue;
        const double* row = &blk.value.a[(j + 1) * d];
        double* grow = &blk.grad.a[(j + 1) * d];
        for (size_t t = 0; t < d; ++t) {
            d_interest[t] += g * row[t];
            grow[t] += g * interest[t];
        }
    }
    return d_interest;
}

// ---------------------------------------------------------------------------
// Forward pass. One prediction instance carries everything the backward
// sweep needs; candidate embeddings and history interests are frozen inputs
// taken from the epoch's session cache.

struct PredictionContext {
    std::vector<int32_t> items;  // the current-session prefix
    SessionEncoding enc;         // its encoding trace
    std::vector<ScoredCandidate> selected;
    std::vector<Vec> history;    // chronological frozen per-session interests
    GruTrace long_trace;
    Vec e_current, e_sim, e_long;
    Vec e_next;
    Vec scores;  // one per catalog item, position j <-> item j+1
};

/// Frozen interests of the user's training-range sessions before `ordinal`,
/// chronological, truncated to the most recent history_max.
inline std::vector<Vec> gather_history(const DatasetSplit& split, const SessionCache& cache,
                                       int32_t user, int32_t ordinal, const TrainConfig& cfg) {
    if (cfg.no_long_term) return {};
    if (user < 0 || static_cast<size_t>(user) >= split.users.size())
        throw PreconditionError("gather_history: unknown user index");
    const UserSplit& u = split.users[static_cast<size_t>(user)];
    size_t limit = std::min(static_cast<size_t>(std::max(ordinal, 0)), u.ranges.train_end);
    size_t begin = limit > cfg.history_max ? limit - cfg.history_max : 0;
    std::vector<Vec> out;
    out.reserve(limit - begin);
    for (size_t i = begin; i < limit; ++i)
        out.push_back(cache.interest_by_sid.at(u.sessions[i].id));
    return out;
}

inline PredictionContext model_forward(ParameterStore& store, std::vector<int32_t> items,
                                       const std::vector<CandidateEntry>& entries,
                                       std::vector<Vec> history, const TrainConfig& cfg) {
    if (items.empty()) throw PreconditionError("model_forward: empty session");
    PredictionContext ctx;
    ctx.items = std::move(items);

    GruParams gpre = gru_params(store, "gru_pre");
    ctx.enc = attention_encode(gpre, ctx.items, store, !cfg.last_state_readout);
    ctx.e_current = ctx.enc.pooled;

    ctx.selected = score_and_select(entries, ctx.e_current, cfg.top_k, cfg.use_all_candidates);
    ctx.e_sim = aggregate_selected(ctx.selected, store.dim);

    ctx.history = std::move(history);
    if (cfg.no_long_term || ctx.history.empty()) {
        ctx.e_long.assign(store.dim, 0.0);
    } else {
        GruParams glong = gru_params(store, "gru_longterm");
        ctx.e_long = gru_fold(glong, ctx.history, &ctx.long_trace);
    }

    ctx.e_next = mlp_forward(mlp_params(store, "mlp_cur"), ctx.e_current);
    Vec vs = mlp_forward(mlp_params(store, "mlp_sim"), ctx.e_sim);
    axpy(ctx.e_next, 1.0, vs);
    if (!cfg.no_long_term) {
        Vec vh = mlp_forward(mlp_params(store, "mlp_his"), ctx.e_long);
        axpy(ctx.e_next, 1.0, vh);
    }

    ctx.scores = score_catalog(store, ctx.e_next);
    return ctx;
}

/// Softmax over the catalog scores.
inline Vec probability(const Vec& scores) { return softmax(scores); }

/// Cross-entropy against the target score position, in log space.
inline double instance_loss(const PredictionContext& ctx, size_t target) {
    if (target >= ctx.scores.size())
        throw PreconditionError("instance_loss: target position out of range");
    return log_sum_exp(ctx.scores) - ctx.scores[target];
}

/// Exact reverse sweep of model_forward + instance_loss. Candidate
/// embeddings, their selection, and the history interests are constants;
/// gradients accumulate into the item embeddings (current-session inputs and
/// catalog scoring), gru_pre, gru_longterm, and the three fusion MLPs.
inline void model_backward(ParameterStore& store, const PredictionContext& ctx, size_t target,
                           const TrainConfig& cfg) {
    if (target >= ctx.scores.size())
        throw PreconditionError("model_backward: target position out of range");
    Vec d_scores = softmax(ctx.scores);
    d_scores[target] -= 1.0;

    Vec d_next = score_catalog_backward(store, ctx.e_next, d_scores);

    Vec d_cur = mlp_backward(mlp_params(store, "mlp_cur"), ctx.e_current, d_next);
    Vec d_sim = mlp_backward(mlp_params(store, "mlp_sim"), ctx.e_sim, d_next);
    aggregate_backward(ctx.selected, d_sim, d_cur);

    if (!cfg.no_long_term) {
        Vec d_long = mlp_backward(mlp_params(store, "mlp_his"), ctx.e_long, d_next);
        if (!ctx.history.empty()) {
            GruParams glong = gru_params(store, "gru_longterm");
            std::vector<Vec> upstream(ctx.history.size(), Vec(store.dim, 0.0));
            upstream.back() = std::move(d_long);
            gru_backward(glong, ctx.long_trace, upstream);  // input grads discarded: frozen
        }
    }

    GruParams gpre = gru_params(store, "gru_pre");
    std::vector<Vec> dx = attention_backward(gpre, ctx.enc, d_cur);
    scatter_embedding_grads(store, ctx.items, dx);
}

// ---------------------------------------------------------------------------
// Recommendation: item indices ranked by score descending, ties by item
// index ascending; k is clamped to the catalog size.

inline std::vector<int32_t> recommend_items(const Vec& scores, size_t k) {
    k = std::min(k, scores.size());
    std::vector<int32_t> pos(scores.size());
    std::iota(pos.begin(), pos.end(), 0);
    std::partial_sort(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(k), pos.end(),
                      [&](int32_t a, int32_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return a < b;
                      });
    pos.resize(k);
    for (int32_t& p : pos) p += 1;  // score position -> item index
    return pos;
}

// ---------------------------------------------------------------------------
// Pretraining: each training session's prefix (all but the last item)
// predicts its last item with the plain recurrent final state; softmax
// cross-entropy, one optimizer step per session.

inline constexpr uint64_t kPretrainSalt = 0x9e37ull;

inline double pretrain_gru(ParameterStore& store, const DatasetSplit& split,
                           const TrainConfig& cfg, Adam& opt) {
    std::vector<const Session*> train;
    for (const UserSplit& u : split.users)
        for (size_t i = 0; i < u.ranges.train_end; ++i)
            if (u.sessions[i].items.size() >= 2) train.push_back(&u.sessions[i]);
    if (train.empty()) throw DataError("pretrain_gru: no training sessions");

    GruParams gpre = gru_params(store, "gru_pre");
    double mean_loss = 0.0;
    for (size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        auto order = train;
        Rng rng = make_rng(mix_seed(cfg.seed, kPretrainSalt, epoch));
        deterministic_shuffle(order, rng);
        double total = 0.0;
        for (const Session* s : order) {
            try {
                std::vector<int32_t> prefix(s->items.begin(), s->items.end() - 1);
                size_t target = static_cast<size_t>(s->items.back()) - 1;
                GruTrace trace;
                Vec h = gru_encode(gpre, prefix, store, &trace);
                Vec scores = score_catalog(store, h);
                double loss = log_sum_exp(scores) - scores[target];
                if (!std::isfinite(loss)) throw NumericError("non-finite loss");
                total += loss;

                Vec d_scores = softmax(scores);
                d_scores[target] -= 1.0;
                Vec dh = score_catalog_backward(store, h, d_scores);
                std::vector<Vec> upstream(prefix.size(), Vec(store.dim, 0.0));
                upstream.back() = std::move(dh);
                std::vector<Vec> dx = gru_backward(gpre, trace, upstream);
                scatter_embedding_grads(store, prefix, dx);
                opt.step(store);
            } catch (const NumericError& e) {
                throw NumericError("pretrain_gru: " + std::string(e.what()) + " at epoch " +
                                   std::to_string(epoch + 1));
            }
        }
        mean_loss = total / static_cast<double>(order.size());
    }
    return mean_loss;
}

inline double pretrain_gru(ParameterStore& store, const DatasetSplit& split,
                           const TrainConfig& cfg) {
    Adam opt(cfg.lr);
    return pretrain_gru(store, split, cfg, opt);
}

}  // namespace sessrec
