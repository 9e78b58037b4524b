#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "sessrec/common.hpp"
#include "sessrec/config.hpp"
#include "sessrec/types.hpp"

namespace sessrec {

struct ParseResult {
    std::vector<Interaction> interactions;  // file order
    size_t malformed = 0;
    size_t line_count = 0;  // non-empty lines seen
};

/// Parse delimiter-separated interaction lines: user, item, timestamp.
/// Extra fields are ignored. Malformed lines are skipped and counted; more
/// than max_malformed_frac of them is a fatal format error.
inline ParseResult parse_interactions(std::istream& in, const IngestConfig& cfg = {}) {
    if (in.bad()) throw IoError("unreadable interaction stream");
    ParseResult res;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        ++res.line_count;
        size_t d1 = line.find(cfg.delimiter);
        size_t d2 = d1 == std::string::npos ? std::string::npos : line.find(cfg.delimiter, d1 + 1);
        if (d2 == std::string::npos) {
            ++res.malformed;
            continue;
        }
        size_t d3 = line.find(cfg.delimiter, d2 + 1);
        std::string user = line.substr(0, d1);
        std::string item = line.substr(d1 + 1, d2 - d1 - 1);
        std::string ts_str = d3 == std::string::npos ? line.substr(d2 + 1)
                                                     : line.substr(d2 + 1, d3 - d2 - 1);
        int64_t ts = 0;
        bool ok = !user.empty() && !item.empty() && !ts_str.empty();
        if (ok) {
            std::istringstream ts_in(ts_str);
            ts_in >> ts;
            ok = !ts_in.fail() && ts_in.eof() && ts >= 0;
        }
        if (!ok) {
            ++res.malformed;
            continue;
        }
        res.interactions.push_back({std::move(user), std::move(item), ts});
    }
    if (in.bad()) throw IoError("I/O failure while reading interactions");
    if (res.line_count > 0 &&
        static_cast<double>(res.malformed) > cfg.max_malformed_frac * static_cast<double>(res.line_count))
        throw FormatError(std::to_string(res.malformed) + " of " + std::to_string(res.line_count) +
                          " lines malformed, above the allowed fraction");
    return res;
}

/// One interaction of a single user, already mapped to a provisional item index.
struct Event {
    int32_t item = 0;
    int64_t ts = 0;
};

/// Fixed-window sessionization of one user's time-sorted interactions:
/// a session opens at an anchor interaction and absorbs everything with
/// timestamp <= anchor + threshold (inclusive); the first interaction past
/// the bound anchors the next session.
inline std::vector<Session> sessionize(const std::vector<Event>& events, int64_t threshold_secs = 3600) {
    std::vector<Session> out;
    for (size_t i = 1; i < events.size(); ++i)
        if (events[i].ts < events[i - 1].ts)
            throw PreconditionError("sessionize: interactions not sorted by timestamp");
    size_t i = 0;
    while (i < events.size()) {
        Session s;
        s.start_ts = events[i].ts;
        s.ordinal = static_cast<int32_t>(out.size());
        const int64_t bound = events[i].ts + threshold_secs;
        while (i < events.size() && events[i].ts <= bound) {
            s.items.push_back(events[i].item);
            ++i;
        }
        out.push_back(std::move(s));
    }
    return out;
}

/// All users' sessions over a provisional (unfiltered) id space.
struct SessionizedCorpus {
    std::vector<std::string> users;      // by first appearance
    std::vector<std::string> items{""}; // provisional indices; slot 0 reserved
    std::vector<std::vector<Session>> per_user;
};

/// Index ids, group by user, stable-sort each user's interactions by
/// timestamp (file order preserved on ties), and sessionize.
inline SessionizedCorpus sessionize_all(const std::vector<Interaction>& interactions,
                                        int64_t threshold_secs = 3600) {
    SessionizedCorpus corpus;
    std::unordered_map<std::string, int32_t> user_idx;
    std::unordered_map<std::string, int32_t> item_idx;
    std::vector<std::vector<Event>> events;
    for (const auto& x : interactions) {
        auto [uit, unew] = user_idx.try_emplace(x.user, static_cast<int32_t>(corpus.users.size()));
        if (unew) {
            corpus.users.push_back(x.user);
            events.emplace_back();
        }
        auto [iit, inew] = item_idx.try_emplace(x.item, static_cast<int32_t>(corpus.items.size()));
        if (inew) corpus.items.push_back(x.item);
        events[uit->second].push_back({iit->second, x.timestamp});
    }
    corpus.per_user.resize(corpus.users.size());
    for (size_t u = 0; u < events.size(); ++u) {
        std::stable_sort(events[u].begin(), events[u].end(),
                         [](const Event& a, const Event& b) { return a.ts < b.ts; });
        corpus.per_user[u] = sessionize(events[u], threshold_secs);
        for (auto& s : corpus.per_user[u]) s.user = static_cast<int32_t>(u);
    }
    return corpus;
}

struct FilteredCorpus {
    Catalog catalog;
    std::vector<std::vector<Session>> per_user;  // parallel to catalog.users
};

/// Three passes: drop sessions outside [min_len, max_len]; one pass of
/// item-frequency filtering over the survivors; re-apply the length filter
/// once. The final catalog is rebuilt from what remains.
inline FilteredCorpus filter_sessions(const SessionizedCorpus& corpus, const IngestConfig& cfg = {}) {
    // pass 1: length
    std::vector<std::vector<Session>> kept(corpus.per_user.size());
    for (size_t u = 0; u < corpus.per_user.size(); ++u)
        for (const auto& s : corpus.per_user[u])
            if (s.items.size() >= cfg.min_len && s.items.size() <= cfg.max_len)
                kept[u].push_back(s);

    // pass 2: item frequency over pass-1 survivors, single pass (no fixpoint)
    std::vector<int64_t> freq(corpus.items.size(), 0);
    for (const auto& sessions : kept)
        for (const auto& s : sessions)
            for (int32_t it : s.items) ++freq[static_cast<size_t>(it)];
    for (auto& sessions : kept)
        for (auto& s : sessions)
            std::erase_if(s.items, [&](int32_t it) { return freq[static_cast<size_t>(it)] < cfg.min_item_freq; });

    // pass 3: length again, then rebuild users/items densely
    FilteredCorpus out;
    for (size_t u = 0; u < kept.size(); ++u) {
        std::vector<Session> survivors;
        for (auto& s : kept[u])
            if (s.items.size() >= cfg.min_len && s.items.size() <= cfg.max_len)
                survivors.push_back(std::move(s));
        if (survivors.empty()) continue;
        int32_t new_user = out.catalog.add_user(corpus.users[u]);
        out.per_user.emplace_back();
        auto& slot = out.per_user[static_cast<size_t>(new_user)];
        for (auto& s : survivors) {
            s.user = new_user;
            s.ordinal = static_cast<int32_t>(slot.size());
            for (auto& it : s.items) {
                int32_t idx = out.catalog.add_item(corpus.items[static_cast<size_t>(it)]);
                out.catalog.item_freq[static_cast<size_t>(idx)] += 1;
                it = idx;
            }
            slot.push_back(std::move(s));
        }
    }
    if (out.per_user.empty()) throw DataError("no sessions survive filtering");
    return out;
}

/// Partition one user's chronological session list by the proportions.
inline UserSplit split_per_user(std::vector<Session> sessions, const Proportions& p) {
    if (sessions.empty()) throw PreconditionError("split_per_user: user has no sessions");
    UserSplit us;
    us.ranges = split_indices(sessions.size(), p);
    us.sessions = std::move(sessions);
    return us;
}

/// Assemble the full dataset split and assign global session ids.
inline DatasetSplit build_split(FilteredCorpus corpus, const Proportions& p) {
    validate(p);
    DatasetSplit split;
    split.catalog = std::move(corpus.catalog);
    split.proportions = p;
    int64_t next_id = 0;
    for (auto& sessions : corpus.per_user) {
        UserSplit us = split_per_user(std::move(sessions), p);
        for (auto& s : us.sessions) s.id = next_id++;
        split.users.push_back(std::move(us));
    }
    split.session_count = next_id;
    return split;
}

/// Full preprocessing pipeline: parse -> sessionize -> filter -> split.
inline DatasetSplit ingest(std::istream& raw, const IngestConfig& cfg = {}) {
    validate(cfg);
    ParseResult parsed = parse_interactions(raw, cfg);
    SessionizedCorpus corpus = sessionize_all(parsed.interactions, cfg.threshold_secs);
    FilteredCorpus filtered = filter_sessions(corpus, cfg);
    return build_split(std::move(filtered), cfg.proportions);
}

inline DatasetStats compute_stats(const DatasetSplit& split) {
    DatasetStats st;
    st.user_num = split.users.size();
    st.item_num = static_cast<size_t>(split.catalog.item_count());
    size_t total_items = 0;
    for (const auto& us : split.users) {
        st.session_num += static_cast<int64_t>(us.sessions.size());
        for (const auto& s : us.sessions) total_items += s.items.size();
    }
    if (st.session_num > 0)
        st.avg_session_len = static_cast<double>(total_items) / static_cast<double>(st.session_num);
    if (st.user_num > 0)
        st.sessions_per_user = static_cast<double>(st.session_num) / static_cast<double>(st.user_num);
    return st;
}

inline std::string format_stats(const DatasetStats& st) {
    std::ostringstream out;
    out.precision(6);
    out << "user_num " << st.user_num << "\n"
        << "item_num " << st.item_num << "\n"
        << "session_num " << st.session_num << "\n"
        << "session_average_length " << st.avg_session_len << "\n"
        << "session_num_per_user " << st.sessions_per_user << "\n";
    return out.str();
}

}  // namespace sessrec
