#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "sessrec/retrieval.hpp"

using namespace sessrec;

namespace {

// Builds a split directly from per-user session item lists; every session
// falls in the training range unless proportions say otherwise.
DatasetSplit make_split(const std::vector<std::vector<std::vector<int32_t>>>& per_user,
                        int32_t item_count,
                        Proportions props = Proportions{1.0, 0.9, 1.0, 1.0}) {
    DatasetSplit split;
    split.proportions = props;
    for (int32_t i = 0; i < item_count; ++i)
        split.catalog.add_item("item" + std::to_string(i));
    int64_t next_id = 0;
    for (size_t u = 0; u < per_user.size(); ++u) {
        split.catalog.add_user("user" + std::to_string(u));
        UserSplit us;
        for (size_t i = 0; i < per_user[u].size(); ++i) {
            Session s;
            s.user = static_cast<int32_t>(u);
            s.items = per_user[u][i];
            s.start_ts = static_cast<int64_t>(i) * 10000;
            s.ordinal = static_cast<int32_t>(i);
            s.id = next_id++;
            us.sessions.push_back(std::move(s));
        }
        us.ranges = split_indices(us.sessions.size(), props);
        split.users.push_back(std::move(us));
    }
    split.session_count = next_id;
    return split;
}

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.dim = 4;
    cfg.seed = 7;
    return cfg;
}

}  // namespace

TEST(SimilarUsers, IdenticalMultisetsScoreExactlyOne) {
    auto split = make_split({{{4, 5}}, {{5, 4}}, {{1, 2, 3}}}, 6);
    auto profiles = train_frequency_profiles(split);
    EXPECT_EQ(profile_cosine(profiles[0], profiles[1]), 1.0);
    auto top = find_similar_users(0, split, 2);
    ASSERT_EQ(top.size(), 2u);
    EXPECT_EQ(top[0], 1);  // the identical user ranks first
}

TEST(SimilarUsers, DisjointItemSetsScoreZero) {
    auto split = make_split({{{1, 2}}, {{3, 4}}}, 5);
    auto profiles = train_frequency_profiles(split);
    EXPECT_EQ(profile_cosine(profiles[0], profiles[1]), 0.0);
}

TEST(SimilarUsers, ThreeUserCorpusMatchesHandComputedTable) {
    // Training item counts: u0 {1:2, 2:1}, u1 {1:1, 2:1}, u2 {2:2, 3:1}.
    auto split = make_split({{{1, 1, 2}}, {{1, 2}}, {{2, 2, 3}}}, 4);
    auto profiles = train_frequency_profiles(split);
    EXPECT_NEAR(profile_cosine(profiles[0], profiles[1]), 3.0 / std::sqrt(10.0), 1e-15);
    EXPECT_NEAR(profile_cosine(profiles[0], profiles[2]), 0.4, 1e-15);
    EXPECT_NEAR(profile_cosine(profiles[1], profiles[2]), 2.0 / std::sqrt(10.0), 1e-15);
    EXPECT_EQ(find_similar_users(0, split, 2), (std::vector<int32_t>{1, 2}));
    EXPECT_EQ(find_similar_users(1, split, 2), (std::vector<int32_t>{0, 2}));
    EXPECT_EQ(find_similar_users(2, split, 2), (std::vector<int32_t>{1, 0}));
}

TEST(SimilarUsers, TiesBreakByUserIndexAndShortListsReturnEveryoneElse) {
    // u1..u3 all disjoint from u0: every similarity is 0, a three-way tie.
    auto split = make_split({{{1}}, {{2}}, {{3}}, {{4}}}, 5);
    EXPECT_EQ(find_similar_users(0, split, 10), (std::vector<int32_t>{1, 2, 3}));
    EXPECT_EQ(find_similar_users(2, split, 2), (std::vector<int32_t>{0, 1}));
}

TEST(SimilarUsers, EmptyTrainingProfileIsZeroEverywhere) {
    // u1 has one session but a test-only split range keeps it out of training.
    auto split = make_split({{{1, 2}}, {{1, 2}}}, 3, Proportions{0.0, 0.0, 0.0, 0.0});
    auto profiles = train_frequency_profiles(split);
    EXPECT_TRUE(profiles[1].empty());
    EXPECT_EQ(profile_cosine(profiles[0], profiles[1]), 0.0);
}

TEST(Candidates, BrandNewUserWithNoSamplingGetsEmptySet) {
    auto split = make_split({{{1, 2}}, {{2, 3}}}, 4);
    // A user with no sessions at all: index 1 queried at ordinal 0.
    TrainConfig cfg = small_config();
    cfg.sample_n = 0;
    Session current;
    current.user = 1;
    current.ordinal = 0;
    current.id = -1;
    current.items = {2};
    Rng rng = candidate_rng(cfg.seed, current.user, current.ordinal);
    auto set = assemble_candidates(1, current, split, cfg, rng);
    EXPECT_TRUE(set.refs.empty());
}

TEST(Candidates, ExhaustiveSamplingTakesWholeTrainSplitMinusExclusions) {
    // u0 and u1 share items (similar); u2 disjoint. 5 sessions each.
    std::vector<std::vector<std::vector<int32_t>>> corpus(3);
    for (int i = 0; i < 5; ++i) {
        corpus[0].push_back({1, 2});
        corpus[1].push_back({1, 2});
        corpus[2].push_back({3, 4});
    }
    auto split = make_split(corpus, 5);
    TrainConfig cfg = small_config();
    cfg.sample_n = 1000;
    cfg.sim_users = 1;
    const Session& current = split.users[0].sessions[2];
    Rng rng = candidate_rng(cfg.seed, current.user, current.ordinal);
    auto set = assemble_candidates(0, current, split, cfg, rng);

    size_t history = 0, simuser = 0, sample = 0;
    std::set<int64_t> seen;
    for (const auto& r : set.refs) {
        EXPECT_TRUE(seen.insert(r.sid).second) << "duplicate sid " << r.sid;
        if (r.source == CandidateSource::history) ++history;
        if (r.source == CandidateSource::simuser) ++simuser;
        if (r.source == CandidateSource::sample) ++sample;
    }
    EXPECT_EQ(history, 2u);  // own ordinals 0,1
    EXPECT_EQ(simuser, 2u);  // top similar user's ordinals 0,1
    EXPECT_EQ(sample, 8u);   // the 15 train sessions minus current, own future, included
    EXPECT_EQ(set.refs.size(), 12u);
    // Own ordinals >= 2 must be absent entirely.
    for (int32_t ord = 2; ord < 5; ++ord)
        EXPECT_FALSE(seen.count(split.users[0].sessions[ord].id));
}

TEST(Candidates, FixedSeedReproducesTheExactSet) {
    std::vector<std::vector<std::vector<int32_t>>> corpus(4);
    for (int u = 0; u < 4; ++u)
        for (int i = 0; i < 6; ++i) corpus[u].push_back({1 + (u + i) % 4, 1 + (u * i) % 4});
    auto split = make_split(corpus, 5);
    TrainConfig cfg = small_config();
    cfg.sample_n = 5;
    const Session& current = split.users[1].sessions[4];

    Rng r1 = candidate_rng(cfg.seed, current.user, current.ordinal);
    Rng r2 = candidate_rng(cfg.seed, current.user, current.ordinal);
    auto a = assemble_candidates(1, current, split, cfg, r1);
    auto b = assemble_candidates(1, current, split, cfg, r2);
    ASSERT_EQ(a.refs.size(), b.refs.size());
    for (size_t i = 0; i < a.refs.size(); ++i) {
        EXPECT_EQ(a.refs[i].sid, b.refs[i].sid);
        EXPECT_EQ(a.refs[i].source, b.refs[i].source);
    }

    // A different seed must be allowed to sample differently (pinned seeds,
    // deterministic outcome).
    TrainConfig other = cfg;
    other.seed = 99;
    Rng r3 = candidate_rng(other.seed, current.user, current.ordinal);
    auto c = assemble_candidates(1, current, split, other, r3);
    std::vector<int64_t> sa, sc;
    for (const auto& r : a.refs)
        if (r.source == CandidateSource::sample) sa.push_back(r.sid);
    for (const auto& r : c.refs)
        if (r.source == CandidateSource::sample) sc.push_back(r.sid);
    EXPECT_NE(sa, sc);
}

TEST(Candidates, NoLeakageOfCurrentOrFutureSessionsEver) {
    Rng gen = make_rng(424242);
    std::vector<std::vector<std::vector<int32_t>>> corpus(6);
    for (auto& user : corpus) {
        size_t n = 4 + uniform_index(gen, 8);
        for (size_t i = 0; i < n; ++i) {
            std::vector<int32_t> items;
            size_t len = 2 + uniform_index(gen, 4);
            for (size_t j = 0; j < len; ++j)
                items.push_back(1 + static_cast<int32_t>(uniform_index(gen, 9)));
            user.push_back(items);
        }
    }
    auto split = make_split(corpus, 10, Proportions{0.8, 0.7, 0.8, 0.8});
    auto pool = train_session_pool(split);
    auto sims = build_similar_users(split, 3);
    TrainConfig cfg = small_config();
    cfg.sample_n = 7;
    cfg.sim_users = 3;

    // sid -> (user, ordinal, in-train) lookup used as the leakage oracle.
    struct Meta { int32_t user; int32_t ordinal; bool train; };
    std::unordered_map<int64_t, Meta> meta;
    for (const auto& us : split.users)
        for (const auto& s : us.sessions)
            meta[s.id] = {s.user, s.ordinal,
                          static_cast<size_t>(s.ordinal) < us.ranges.train_end};

    for (const auto& us : split.users) {
        for (const Session& current : us.sessions) {
            Rng rng = candidate_rng(cfg.seed, current.user, current.ordinal);
            auto set = assemble_candidates(current.user, current, split, pool,
                                           sims.top[current.user], cfg, rng);
            for (const auto& r : set.refs) {
                const Meta& m = meta.at(r.sid);
                EXPECT_NE(r.sid, current.id);
                EXPECT_TRUE(m.train) << "non-training session selected";
                if (m.user == current.user)
                    EXPECT_LT(m.ordinal, current.ordinal) << "own future session leaked";
                if (r.source != CandidateSource::sample)
                    EXPECT_LT(m.ordinal, current.ordinal);
            }
        }
    }
}

TEST(Candidates, DropSampledSourceFlag) {
    std::vector<std::vector<std::vector<int32_t>>> corpus(3);
    for (int u = 0; u < 3; ++u)
        for (int i = 0; i < 5; ++i) corpus[u].push_back({1, 2});
    auto split = make_split(corpus, 3);
    TrainConfig cfg = small_config();
    cfg.no_sampled_candidates = true;
    cfg.sample_n = 100;
    const Session& current = split.users[0].sessions[3];
    Rng rng = candidate_rng(cfg.seed, current.user, current.ordinal);
    auto set = assemble_candidates(0, current, split, cfg, rng);
    for (const auto& r : set.refs)
        EXPECT_NE(r.source, CandidateSource::sample);
    EXPECT_FALSE(set.refs.empty());
}

TEST(SessionCacheBuild, CoversExactlyTheTrainingRange) {
    std::vector<std::vector<std::vector<int32_t>>> corpus{
        {{1, 2}, {2, 3}, {1, 3}, {2, 1}, {3, 1}}};  // n=5, train_end=4
    auto split = make_split(corpus, 4, Proportions{0.8, 0.7, 0.8, 0.8});
    TrainConfig cfg = small_config();
    auto store = make_store(split.catalog.item_count(), cfg);
    auto cache = build_session_cache(store, split, cfg);
    EXPECT_EQ(cache.entries_by_sid.size(), 4u);
    EXPECT_EQ(cache.interest_by_sid.size(), 4u);
    EXPECT_TRUE(cache.entries_by_sid.count(split.users[0].sessions[3].id));
    EXPECT_FALSE(cache.entries_by_sid.count(split.users[0].sessions[4].id));
}

TEST(SessionCacheBuild, EntryCountsFollowWindowArithmetic) {
    std::vector<std::vector<std::vector<int32_t>>> corpus{
        {{1, 2}, {1, 2, 3, 4, 5, 1}, {2, 3, 4, 1, 5}}};
    auto split = make_split(corpus, 6);
    TrainConfig cfg = small_config();
    auto store = make_store(split.catalog.item_count(), cfg);
    auto cache = build_session_cache(store, split, cfg);
    EXPECT_EQ(cache.entries_by_sid.at(split.users[0].sessions[0].id).size(), 1u);  // short
    EXPECT_EQ(cache.entries_by_sid.at(split.users[0].sessions[1].id).size(), 4u);  // len 6
    EXPECT_EQ(cache.entries_by_sid.at(split.users[0].sessions[2].id).size(), 3u);  // len 5
}

TEST(SessionCacheBuild, InterestVectorsMatchPlainEncoderAndFlagSwitchesEntries) {
    std::vector<std::vector<std::vector<int32_t>>> corpus{{{1, 2, 3}, {2, 1}}};
    auto split = make_split(corpus, 4);
    TrainConfig cfg = small_config();
    auto store = make_store(split.catalog.item_count(), cfg);
    GruParams gp = gru_params(store, "gru_pre");
    auto cache = build_session_cache(store, split, cfg);
    Vec expect = gru_encode(gp, {1, 2, 3}, store);
    EXPECT_EQ(cache.interest_by_sid.at(split.users[0].sessions[0].id), expect);
    // Attention pooling differs from the final state for a generic store.
    EXPECT_NE(cache.entries_by_sid.at(split.users[0].sessions[0].id)[0], expect);

    TrainConfig last = cfg;
    last.last_state_readout = true;
    auto cache2 = build_session_cache(store, split, last);
    EXPECT_EQ(cache2.entries_by_sid.at(split.users[0].sessions[0].id)[0], expect);
}

TEST(EmbedCandidates, MixedSetExpandsInCandidateOrder) {
    std::vector<std::vector<std::vector<int32_t>>> corpus{{{1, 2}, {1, 2, 3, 4, 5}}};
    auto split = make_split(corpus, 6);
    TrainConfig cfg = small_config();
    auto store = make_store(split.catalog.item_count(), cfg);
    auto cache = build_session_cache(store, split, cfg);
    CandidateSet set;
    set.refs.push_back({split.users[0].sessions[0].id, CandidateSource::history});
    set.refs.push_back({split.users[0].sessions[1].id, CandidateSource::sample});
    auto entries = embed_candidates(set, cache);
    ASSERT_EQ(entries.size(), 4u);  // 1 + (5-2)
    EXPECT_EQ(entries[0].sid, set.refs[0].sid);
    EXPECT_EQ(entries[0].source, CandidateSource::history);
    for (size_t i = 1; i < 4; ++i) {
        EXPECT_EQ(entries[i].sid, set.refs[1].sid);
        EXPECT_EQ(entries[i].source, CandidateSource::sample);
    }
    CandidateSet missing;
    missing.refs.push_back({9999, CandidateSource::history});
    EXPECT_THROW(embed_candidates(missing, cache), PreconditionError);
}

namespace {

// Independent full-sort oracle: indices of the k largest sims, ties kept in
// entry order via stable_sort.
std::vector<size_t> topk_oracle(const std::vector<double>& sims, size_t k) {
    std::vector<size_t> idx(sims.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](size_t a, size_t b) { return sims[a] > sims[b]; });
    idx.resize(std::min(k, idx.size()));
    return idx;
}

std::vector<CandidateEntry> entries_over(const std::vector<Vec>& storage) {
    std::vector<CandidateEntry> entries;
    for (size_t i = 0; i < storage.size(); ++i)
        entries.push_back({&storage[i], static_cast<int64_t>(i), CandidateSource::sample});
    return entries;
}

}  // namespace

TEST(ScoreSelect, KnownSimsPickTopTwo) {
    // d=1 vectors with E_cur = [1] give sims equal to the stored scalars.
    std::vector<Vec> storage{{3.0}, {1.0}, {2.0}};
    Vec e_cur{1.0};
    auto sel = score_and_select(entries_over(storage), e_cur, 2);
    ASSERT_EQ(sel.size(), 2u);
    EXPECT_DOUBLE_EQ(sel[0].sim, 3.0);
    EXPECT_DOUBLE_EQ(sel[1].sim, 2.0);
    EXPECT_EQ(sel[0].entry_index, 0u);
    EXPECT_EQ(sel[1].entry_index, 2u);
    // Scaled embeddings: e <- sim * e.
    EXPECT_DOUBLE_EQ(sel[0].e[0], 9.0);
    EXPECT_DOUBLE_EQ(sel[1].e[0], 4.0);
}

TEST(ScoreSelect, ExactTiesKeepEarliestEntries) {
    std::vector<Vec> storage(5, Vec{2.0, -1.0});
    Vec e_cur{0.5, 1.0};
    auto sel = score_and_select(entries_over(storage), e_cur, 3);
    ASSERT_EQ(sel.size(), 3u);
    EXPECT_EQ(sel[0].entry_index, 0u);
    EXPECT_EQ(sel[1].entry_index, 1u);
    EXPECT_EQ(sel[2].entry_index, 2u);
}

TEST(ScoreSelect, MatchesFullSortOracleAcrossSizesAndK) {
    Rng gen = make_rng(777);
    const size_t d = 3;
    for (size_t size = 0; size <= 200; size += (size < 24 ? 1 : 7)) {
        std::vector<Vec> storage;
        for (size_t i = 0; i < size; ++i) {
            Vec v(d);
            for (double& x : v) x = uniform_range(gen, -1.0, 1.0);
            // Duplicate some vectors to force exact similarity ties.
            if (i >= 3 && uniform_index(gen, 4) == 0) v = storage[i - 3];
            storage.push_back(std::move(v));
        }
        Vec e_cur(d);
        for (double& x : e_cur) x = uniform_range(gen, -1.0, 1.0);
        auto entries = entries_over(storage);
        std::vector<double> sims;
        for (const auto& en : entries) sims.push_back(dot(*en.e, e_cur));
        for (size_t k = 1; k <= 20; ++k) {
            auto sel = score_and_select(entries, e_cur, k);
            auto expect = topk_oracle(sims, k);
            ASSERT_EQ(sel.size(), expect.size()) << "size=" << size << " k=" << k;
            for (size_t i = 0; i < sel.size(); ++i)
                EXPECT_EQ(sel[i].entry_index, expect[i]) << "size=" << size << " k=" << k;
        }
    }
}

TEST(ScoreSelect, KeepAllBypassesTruncationButStaysSorted) {
    std::vector<Vec> storage{{1.0}, {5.0}, {-2.0}, {3.0}};
    Vec e_cur{1.0};
    auto sel = score_and_select(entries_over(storage), e_cur, 2, /*keep_all=*/true);
    ASSERT_EQ(sel.size(), 4u);
    std::vector<size_t> order;
    for (const auto& sc : sel) order.push_back(sc.entry_index);
    EXPECT_EQ(order, (std::vector<size_t>{1, 3, 0, 2}));
}

TEST(ScoreSelect, PositiveRescalingIsConsistentWithTheOracle) {
    Rng gen = make_rng(31);
    std::vector<Vec> storage;
    for (size_t i = 0; i < 12; ++i) {
        Vec v(4);
        for (double& x : v) x = uniform_range(gen, -1.0, 1.0);
        storage.push_back(std::move(v));
    }
    Vec e_cur(4);
    for (double& x : e_cur) x = uniform_range(gen, -1.0, 1.0);
    auto base = score_and_select(entries_over(storage), e_cur, 4);
    const double c = 2.5;
    size_t bumped = base[1].entry_index;  // a selected entry, scaled up
    double orig = base[1].sim;
    scale(storage[bumped], c);
    auto entries = entries_over(storage);
    std::vector<double> sims;
    for (const auto& en : entries) sims.push_back(dot(*en.e, e_cur));
    // The bumped entry's similarity scaled exactly by c...
    EXPECT_NEAR(sims[bumped], c * orig, 1e-12);
    // ...and the new selection still equals the full-sort oracle.
    auto sel = score_and_select(entries, e_cur, 4);
    auto expect = topk_oracle(sims, 4);
    for (size_t i = 0; i < sel.size(); ++i) EXPECT_EQ(sel[i].entry_index, expect[i]);
}

TEST(ScoreSelect, ZeroKThrows) {
    std::vector<Vec> storage{{1.0}};
    Vec e_cur{1.0};
    EXPECT_THROW(score_and_select(entries_over(storage), e_cur, 0), PreconditionError);
}

TEST(Aggregate, EmptySelectionIsZero) {
    Vec out = aggregate_selected({}, 3);
    EXPECT_EQ(out, (Vec{0.0, 0.0, 0.0}));
}

TEST(Aggregate, SingleEntryIsItsScaledEmbedding) {
    std::vector<Vec> storage{{1.0, -2.0}};
    Vec e_cur{2.0, 0.0};  // sim = 2
    auto sel = score_and_select(entries_over(storage), e_cur, 1);
    Vec out = aggregate_selected(sel, 2);
    EXPECT_DOUBLE_EQ(out[0], 2.0);
    EXPECT_DOUBLE_EQ(out[1], -4.0);
}

TEST(Aggregate, MatchesElementwiseSumOracleAndPermutationInvariance) {
    Rng gen = make_rng(99);
    std::vector<Vec> storage;
    for (size_t i = 0; i < 9; ++i) {
        Vec v(5);
        for (double& x : v) x = uniform_range(gen, -1.0, 1.0);
        storage.push_back(std::move(v));
    }
    Vec e_cur(5);
    for (double& x : e_cur) x = uniform_range(gen, -1.0, 1.0);
    auto sel = score_and_select(entries_over(storage), e_cur, 6);
    Vec out = aggregate_selected(sel, 5);
    for (size_t j = 0; j < 5; ++j) {
        double expect = 0.0;
        for (const auto& sc : sel) expect += sc.sim * (*sc.raw)[j];
        EXPECT_NEAR(out[j], expect, 1e-12);
    }
    auto shuffled = sel;
    std::reverse(shuffled.begin(), shuffled.end());
    Vec out2 = aggregate_selected(shuffled, 5);
    for (size_t j = 0; j < 5; ++j) EXPECT_NEAR(out[j], out2[j], 1e-12);
}

TEST(Aggregate, BackwardMatchesClosedForm) {
    // out(E_cur) = sum_n <e_n, E_cur> e_n over the selected, frozen entries;
    // for upstream g the gradient is sum_n <e_n, g> e_n.
    Rng gen = make_rng(512);
    std::vector<Vec> storage;
    for (size_t i = 0; i < 5; ++i) {
        Vec v(4);
        for (double& x : v) x = uniform_range(gen, -1.0, 1.0);
        storage.push_back(std::move(v));
    }
    Vec e_cur(4), g(4);
    for (double& x : e_cur) x = uniform_range(gen, -1.0, 1.0);
    for (double& x : g) x = uniform_range(gen, -1.0, 1.0);
    auto sel = score_and_select(entries_over(storage), e_cur, 3);
    Vec grad(4, 0.0);
    aggregate_backward(sel, g, grad);
    for (size_t j = 0; j < 4; ++j) {
        double expect = 0.0;
        for (const auto& sc : sel) {
            double coeff = 0.0;
            for (size_t t = 0; t < 4; ++t) coeff += (*sc.raw)[t] * g[t];
            expect += coeff * (*sc.raw)[j];
        }
        EXPECT_NEAR(grad[j], expect, 1e-12);
    }
}
