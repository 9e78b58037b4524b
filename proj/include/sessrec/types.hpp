#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "sessrec/common.hpp"

namespace sessrec {

/// One (user, item, timestamp) event, the raw input atom.
struct Interaction {
    std::string user;
    std::string item;
    int64_t timestamp = 0;  // seconds since epoch, >= 0
};

/// An ordered run of one user's item interactions, bounded in time.
/// Items are dense catalog indices (index 0 is reserved as padding/none).
struct Session {
    int32_t user = 0;            // user index
    std::vector<int32_t> items;  // catalog item indices, timestamp order
    int64_t start_ts = 0;        // timestamp of the first interaction
    int32_t ordinal = 0;         // position in the owning user's chronological list
    int64_t id = -1;             // global session id, assigned when the split is built
};

/// Dense index <-> raw id bijections plus per-item frequency.
/// Item index 0 is reserved; real items occupy 1..item_count().
struct Catalog {
    std::vector<std::string> items{""};  // items[0] is the padding slot
    std::unordered_map<std::string, int32_t> item_index;
    std::vector<int64_t> item_freq{0};  // occurrences over retained sessions
    std::vector<std::string> users;
    std::unordered_map<std::string, int32_t> user_index;

    int32_t item_count() const { return static_cast<int32_t>(items.size()) - 1; }
    int32_t user_count() const { return static_cast<int32_t>(users.size()); }

    int32_t add_item(const std::string& raw) {
        auto it = item_index.find(raw);
        if (it != item_index.end()) return it->second;
        int32_t idx = static_cast<int32_t>(items.size());
        items.push_back(raw);
        item_freq.push_back(0);
        item_index.emplace(raw, idx);
        return idx;
    }
    int32_t add_user(const std::string& raw) {
        auto it = user_index.find(raw);
        if (it != user_index.end()) return it->second;
        int32_t idx = static_cast<int32_t>(users.size());
        users.push_back(raw);
        user_index.emplace(raw, idx);
        return idx;
    }
};

struct Proportions {
    double train_hi = 0.8;
    double val_lo = 0.7;
    double val_hi = 0.8;
    double test_lo = 0.8;
};

/// Half-open index ranges over one user's chronological session list.
/// The validation range may overlap the training range; with the default
/// proportions it is the 70-80% slice inside the 0-80% training slice.
struct SplitRanges {
    size_t n = 0;
    size_t train_end = 0;   // train = [0, train_end)
    size_t val_begin = 0;   // validation = [val_begin, val_end)
    size_t val_end = 0;
    size_t test_begin = 0;  // test = [test_begin, n)
};

/// Floor of proportion * n, reading the proportion as the decimal the user
/// wrote rather than its binary approximation: products within rounding
/// error of an integer snap to it (0.7 * 90 must give 63, not 62).
inline size_t floor_share(double f, size_t n) {
    double x = f * static_cast<double>(n);
    double nearest = std::nearbyint(x);
    if (std::fabs(x - nearest) <= 1e-9 + std::fabs(x) * 1e-12) x = nearest;
    x = std::floor(x);
    return x <= 0.0 ? size_t{0} : static_cast<size_t>(x);
}

/// Floor-arithmetic split ranges over n chronological sessions.
inline SplitRanges split_indices(size_t n, const Proportions& p) {
    SplitRanges r;
    r.n = n;
    r.train_end = floor_share(p.train_hi, n);
    r.val_begin = floor_share(p.val_lo, n);
    r.val_end = floor_share(p.val_hi, n);
    r.test_begin = floor_share(p.test_lo, n);
    return r;
}

struct UserSplit {
    std::vector<Session> sessions;  // chronological; ordinal == position
    SplitRanges ranges;
};

struct DatasetSplit {
    Catalog catalog;
    Proportions proportions;
    std::vector<UserSplit> users;  // indexed by Session::user
    int64_t session_count = 0;     // total retained sessions == number of global ids
};

struct DatasetStats {
    size_t user_num = 0;
    size_t item_num = 0;
    int64_t session_num = 0;
    double avg_session_len = 0.0;
    double sessions_per_user = 0.0;
};

}  // namespace sessrec
