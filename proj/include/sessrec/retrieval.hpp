#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sessrec/attention.hpp"
#include "sessrec/common.hpp"
#include "sessrec/config.hpp"
#include "sessrec/params.hpp"
#include "sessrec/tensor.hpp"
#include "sessrec/types.hpp"
#include "sessrec/windows.hpp"

namespace sessrec {

// ---------------------------------------------------------------------------
// Similar users: cosine similarity between item-frequency vectors taken over
// each user's training-range interactions.

/// Sparse (item index, count) pairs sorted by item index.
using FrequencyProfile = std::vector<std::pair<int32_t, double>>;

inline FrequencyProfile train_frequency_profile(const UserSplit& u) {
    std::unordered_map<int32_t, double> freq;
    for (size_t i = 0; i < u.ranges.train_end; ++i)
        for (int32_t item : u.sessions[i].items) freq[item] += 1.0;
    FrequencyProfile p(freq.begin(), freq.end());
    std::sort(p.begin(), p.end());
    return p;
}

inline std::vector<FrequencyProfile> train_frequency_profiles(const DatasetSplit& split) {
    std::vector<FrequencyProfile> out;
    out.reserve(split.users.size());
    for (const UserSplit& u : split.users) out.push_back(train_frequency_profile(u));
    return out;
}

/// Cosine over sparse frequency vectors; either side empty-or-zero gives 0.
/// The single sqrt keeps identical profiles at exactly 1.0 for integer counts.
inline double profile_cosine(const FrequencyProfile& a, const FrequencyProfile& b) {
    double num = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [item, c] : a) na += c * c;
    for (const auto& [item, c] : b) nb += c * c;
    if (na == 0.0 || nb == 0.0) return 0.0;
    size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i].first < b[j].first) ++i;
        else if (a[i].first > b[j].first) ++j;
        else num += a[i++].second * b[j++].second;
    }
    return num / std::sqrt(na * nb);
}

/// Other users ranked by descending cosine to `user`, ties by user index
/// ascending, truncated to the best m.
inline std::vector<int32_t> rank_similar_users(size_t user,
                                               const std::vector<FrequencyProfile>& profiles,
                                               size_t m) {
    std::vector<std::pair<double, int32_t>> scored;
    scored.reserve(profiles.size());
    for (size_t v = 0; v < profiles.size(); ++v) {
        if (v == user) continue;
        scored.emplace_back(profile_cosine(profiles[user], profiles[v]),
                            static_cast<int32_t>(v));
    }
    size_t keep = std::min(m, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                      scored.end(), [](const auto& x, const auto& y) {
                          if (x.first != y.first) return x.first > y.first;
                          return x.second < y.second;
                      });
    std::vector<int32_t> out;
    out.reserve(keep);
    for (size_t i = 0; i < keep; ++i) out.push_back(scored[i].second);
    return out;
}

inline std::vector<int32_t> find_similar_users(int32_t user, const DatasetSplit& split,
                                               size_t m) {
    if (user < 0 || static_cast<size_t>(user) >= split.users.size())
        throw PreconditionError("find_similar_users: unknown user index");
    return rank_similar_users(static_cast<size_t>(user), train_frequency_profiles(split), m);
}

/// Precomputed top-M rows for every user; depends only on the split.
struct SimilarUsersTable {
    std::vector<std::vector<int32_t>> top;
};

inline SimilarUsersTable build_similar_users(const DatasetSplit& split, size_t m) {
    auto profiles = train_frequency_profiles(split);
    SimilarUsersTable t;
    t.top.resize(profiles.size());
    for (size_t u = 0; u < profiles.size(); ++u)
        t.top[u] = rank_similar_users(u, profiles, m);
    return t;
}

// ---------------------------------------------------------------------------
// Candidate assembly: a query's candidate sessions come from the user's own
// earlier training sessions, similar users' training sessions, and a uniform
// sample of the training split. Sets are fixed per (seed, user, ordinal).

enum class CandidateSource : uint8_t { history, simuser, sample };

struct CandidateRef {
    int64_t sid = -1;
    CandidateSource source = CandidateSource::history;
};

struct CandidateSet {
    std::vector<CandidateRef> refs;  // history, then simuser, then sample
};

/// Every training-range session across all users, user-major then
/// chronological; the sampling pool, built once per split.
inline std::vector<const Session*> train_session_pool(const DatasetSplit& split) {
    std::vector<const Session*> pool;
    for (const UserSplit& u : split.users)
        for (size_t i = 0; i < u.ranges.train_end; ++i) pool.push_back(&u.sessions[i]);
    return pool;
}

inline constexpr uint64_t kCandidateSalt = 0xca9dull;

/// The sampling stream for one query; independent of epoch so candidate sets
/// can be assembled once and reused.
inline Rng candidate_rng(uint64_t seed, int32_t user, int32_t ordinal) {
    return make_rng(mix_seed(seed, kCandidateSalt, static_cast<uint64_t>(user),
                             static_cast<uint64_t>(ordinal)));
}

inline CandidateSet assemble_candidates(int32_t user, const Session& current,
                                        const DatasetSplit& split,
                                        const std::vector<const Session*>& train_pool,
                                        const std::vector<int32_t>& similar_users,
                                        const TrainConfig& cfg, Rng& rng) {
    if (user < 0 || static_cast<size_t>(user) >= split.users.size())
        throw PreconditionError("assemble_candidates: unknown user index");
    CandidateSet set;
    std::unordered_set<int64_t> included;
    auto push = [&](const Session& s, CandidateSource src) {
        if (s.id == current.id) return;
        if (included.insert(s.id).second) set.refs.push_back({s.id, src});
    };

    // Own earlier training sessions.
    const UserSplit& own = split.users[static_cast<size_t>(user)];
    size_t own_limit = std::min(static_cast<size_t>(std::max(current.ordinal, 0)),
                                own.ranges.train_end);
    for (size_t i = 0; i < own_limit; ++i) push(own.sessions[i], CandidateSource::history);

    // Similar users' training sessions, same chronological cutoff.
    for (int32_t v : similar_users) {
        const UserSplit& other = split.users[static_cast<size_t>(v)];
        size_t limit = std::min(static_cast<size_t>(std::max(current.ordinal, 0)),
                                other.ranges.train_end);
        for (size_t i = 0; i < limit; ++i) push(other.sessions[i], CandidateSource::simuser);
    }

    // Uniform sample without replacement from the training split, never the
    // current session or the querying user's own later sessions.
    if (!cfg.no_sampled_candidates && cfg.sample_n > 0) {
        std::vector<const Session*> eligible;
        eligible.reserve(train_pool.size());
        for (const Session* s : train_pool) {
            if (s->id == current.id) continue;
            if (s->user == user && s->ordinal >= current.ordinal) continue;
            if (included.count(s->id)) continue;
            eligible.push_back(s);
        }
        size_t take = std::min(cfg.sample_n, eligible.size());
        for (size_t k = 0; k < take; ++k) {
            size_t j = k + static_cast<size_t>(uniform_index(rng, eligible.size() - k));
            std::swap(eligible[k], eligible[j]);
            push(*eligible[k], CandidateSource::sample);
        }
    }
    return set;
}

/// Convenience form that derives the pool and similar users from the split.
inline CandidateSet assemble_candidates(int32_t user, const Session& current,
                                        const DatasetSplit& split, const TrainConfig& cfg,
                                        Rng& rng) {
    auto pool = train_session_pool(split);
    auto sims = find_similar_users(user, split, cfg.sim_users);
    return assemble_candidates(user, current, split, pool, sims, cfg, rng);
}

// ---------------------------------------------------------------------------
// Session cache: frozen per-epoch encodings of every training-range session.
// entries_by_sid holds the retrieval-candidate interest vectors (one per
// short session, one per sliding window of a long one); interest_by_sid holds
// the plain final-state interests the long-term encoder folds. Both are
// recomputed whenever the parameters move and treated as constants during
// backpropagation.

struct SessionCache {
    std::unordered_map<int64_t, std::vector<Vec>> entries_by_sid;
    std::unordered_map<int64_t, Vec> interest_by_sid;
};

inline std::vector<Vec> embed_session_entries(const GruParams& gp, const ParameterStore& store,
                                              const Session& s, const TrainConfig& cfg) {
    const bool attn = !cfg.last_state_readout;
    std::vector<Vec> out;
    if (is_long(s)) {
        auto windows = enumerate_windows(s.items, static_cast<size_t>(cfg.window));
        out.reserve(windows.size());
        for (const auto& w : windows)
            out.push_back(attention_encode(gp, w, store, attn).pooled);
    } else {
        out.push_back(attention_encode(gp, s.items, store, attn).pooled);
    }
    return out;
}

inline SessionCache build_session_cache(ParameterStore& store, const DatasetSplit& split,
                                        const TrainConfig& cfg) {
    SessionCache cache;
    GruParams gp = gru_params(store, "gru_pre");
    for (const UserSplit& u : split.users) {
        for (size_t i = 0; i < u.ranges.train_end; ++i) {
            const Session& s = u.sessions[i];
            cache.entries_by_sid.emplace(s.id, embed_session_entries(gp, store, s, cfg));
            cache.interest_by_sid.emplace(s.id, gru_encode(gp, s.items, store));
        }
    }
    return cache;
}

// ---------------------------------------------------------------------------
// Scoring, selection, aggregation.

/// One embedded candidate entry; `e` points into the session cache (or any
/// storage outliving the query).
struct CandidateEntry {
    const Vec* e = nullptr;
    int64_t sid = -1;
    CandidateSource source = CandidateSource::history;
};

/// Expands candidate sessions into embedded entries in candidate order;
/// a long session contributes one entry per sliding window.
inline std::vector<CandidateEntry> embed_candidates(const CandidateSet& set,
                                                    const SessionCache& cache) {
    std::vector<CandidateEntry> out;
    for (const CandidateRef& r : set.refs) {
        auto it = cache.entries_by_sid.find(r.sid);
        if (it == cache.entries_by_sid.end())
            throw PreconditionError("embed_candidates: session missing from cache");
        for (const Vec& v : it->second) out.push_back({&v, r.sid, r.source});
    }
    return out;
}

struct ScoredCandidate {
    Vec e;                  // candidate interest scaled by its similarity
    double sim = 0.0;       // raw inner product with the current interest
    int64_t sid = -1;
    CandidateSource source = CandidateSource::history;
    size_t entry_index = 0;  // position in the entry list; the tie-break key
    const Vec* raw = nullptr;  // unscaled embedding, needed by the backward pass
};

/// Scores every entry against the current interest and keeps the k largest;
/// keep_all skips the truncation. Output is always ordered by similarity
/// descending, ties by entry index ascending, and each kept entry's
/// embedding is scaled by its similarity.
inline std::vector<ScoredCandidate> score_and_select(const std::vector<CandidateEntry>& entries,
                                                     const Vec& e_current, size_t k,
                                                     bool keep_all = false) {
    if (!keep_all && k == 0)
        throw PreconditionError("score_and_select: k must be positive");
    std::vector<ScoredCandidate> scored;
    scored.reserve(entries.size());
    for (size_t n = 0; n < entries.size(); ++n) {
        ScoredCandidate sc;
        sc.sim = dot(*entries[n].e, e_current);
        sc.sid = entries[n].sid;
        sc.source = entries[n].source;
        sc.entry_index = n;
        sc.raw = entries[n].e;
        scored.push_back(std::move(sc));
    }
    auto before = [](const ScoredCandidate& a, const ScoredCandidate& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        return a.entry_index < b.entry_index;
    };
    size_t keep = keep_all ? scored.size() : std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                      scored.end(), before);
    scored.resize(keep);
    for (ScoredCandidate& sc : scored) {
        sc.e = *sc.raw;
        scale(sc.e, sc.sim);
    }
    return scored;
}

/// Sum of the scaled embeddings; empty selection gives the zero vector.
inline Vec aggregate_selected(const std::vector<ScoredCandidate>& selected, size_t dim) {
    Vec out(dim, 0.0);
    for (const ScoredCandidate& sc : selected) axpy(out, 1.0, sc.e);
    return out;
}

/// Backward of aggregate∘scale with embeddings and selection held constant:
/// out = Σ ⟨ē_n, E_cur⟩ ē_n, so dE_cur += Σ ⟨ē_n, g⟩ ē_n.
inline void aggregate_backward(const std::vector<ScoredCandidate>& selected, const Vec& g,
                               Vec& d_current) {
    for (const ScoredCandidate& sc : selected) axpy(d_current, dot(*sc.raw, g), *sc.raw);
}

}  // namespace sessrec
