#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "sessrec/common.hpp"
#include "sessrec/types.hpp"

namespace sessrec {

// Little-endian binary dataset container.
inline constexpr char kDatasetMagic[] = "SESSREC.DS";
inline constexpr uint32_t kDatasetVersion = 1;

namespace detail {

inline void put_bytes(std::ostream& out, const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out) throw IoError("write failure");
}

inline void get_bytes(std::istream& in, void* p, size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in.gcount() != static_cast<std::streamsize>(n)) throw FormatError("truncated input");
}

inline void put_u32(std::ostream& out, uint32_t v) { put_bytes(out, &v, 4); }
inline void put_u64(std::ostream& out, uint64_t v) { put_bytes(out, &v, 8); }
inline void put_i64(std::ostream& out, int64_t v) { put_bytes(out, &v, 8); }
inline void put_i32(std::ostream& out, int32_t v) { put_bytes(out, &v, 4); }
inline void put_f64(std::ostream& out, double v) { put_bytes(out, &v, 8); }

inline uint32_t get_u32(std::istream& in) { uint32_t v; get_bytes(in, &v, 4); return v; }
inline uint64_t get_u64(std::istream& in) { uint64_t v; get_bytes(in, &v, 8); return v; }
inline int64_t get_i64(std::istream& in) { int64_t v; get_bytes(in, &v, 8); return v; }
inline int32_t get_i32(std::istream& in) { int32_t v; get_bytes(in, &v, 4); return v; }
inline double get_f64(std::istream& in) { double v; get_bytes(in, &v, 8); return v; }

inline void put_str(std::ostream& out, const std::string& s) {
    put_u64(out, s.size());
    put_bytes(out, s.data(), s.size());
}

inline std::string get_str(std::istream& in, uint64_t cap = (1u << 20)) {
    uint64_t n = get_u64(in);
    if (n > cap) throw FormatError("string length out of range");
    std::string s(static_cast<size_t>(n), '\0');
    if (n) get_bytes(in, s.data(), static_cast<size_t>(n));
    return s;
}

}  // namespace detail

inline void save_dataset(std::ostream& out, const DatasetSplit& split) {
    using namespace detail;
    put_bytes(out, kDatasetMagic, sizeof(kDatasetMagic) - 1);
    put_u32(out, kDatasetVersion);

    put_f64(out, split.proportions.train_hi);
    put_f64(out, split.proportions.val_lo);
    put_f64(out, split.proportions.val_hi);
    put_f64(out, split.proportions.test_lo);

    const Catalog& cat = split.catalog;
    put_u64(out, cat.items.size());
    for (size_t i = 1; i < cat.items.size(); ++i) put_str(out, cat.items[i]);
    for (size_t i = 0; i < cat.items.size(); ++i) put_i64(out, cat.item_freq[i]);
    put_u64(out, cat.users.size());
    for (const auto& u : cat.users) put_str(out, u);

    put_u64(out, split.users.size());
    put_i64(out, split.session_count);
    for (const auto& us : split.users) {
        put_u64(out, us.sessions.size());
        for (const auto& s : us.sessions) {
            put_i32(out, s.user);
            put_i32(out, s.ordinal);
            put_i64(out, s.start_ts);
            put_i64(out, s.id);
            put_u64(out, s.items.size());
            for (int32_t it : s.items) put_i32(out, it);
        }
    }
    out.flush();
    if (!out) throw IoError("write failure");
}

inline DatasetSplit load_dataset(std::istream& in) {
    using namespace detail;
    char magic[sizeof(kDatasetMagic) - 1];
    get_bytes(in, magic, sizeof(magic));
    if (std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0)
        throw FormatError("not a dataset file");
    uint32_t version = get_u32(in);
    if (version != kDatasetVersion)
        throw FormatError("unsupported dataset version " + std::to_string(version));

    DatasetSplit split;
    split.proportions.train_hi = get_f64(in);
    split.proportions.val_lo = get_f64(in);
    split.proportions.val_hi = get_f64(in);
    split.proportions.test_lo = get_f64(in);

    Catalog& cat = split.catalog;
    uint64_t item_slots = get_u64(in);
    if (item_slots == 0) throw FormatError("catalog missing padding slot");
    for (uint64_t i = 1; i < item_slots; ++i) {
        std::string name = get_str(in);
        int32_t idx = cat.add_item(name);
        if (static_cast<uint64_t>(idx) != i) throw FormatError("duplicate item id: " + name);
    }
    cat.item_freq.assign(static_cast<size_t>(item_slots), 0);
    for (uint64_t i = 0; i < item_slots; ++i) cat.item_freq[static_cast<size_t>(i)] = get_i64(in);
    uint64_t user_slots = get_u64(in);
    for (uint64_t u = 0; u < user_slots; ++u) {
        std::string name = get_str(in);
        if (static_cast<uint64_t>(cat.add_user(name)) != u)
            throw FormatError("duplicate user id: " + name);
    }

    uint64_t user_num = get_u64(in);
    if (user_num != user_slots) throw FormatError("user table does not match session table");
    split.session_count = get_i64(in);
    for (uint64_t u = 0; u < user_num; ++u) {
        UserSplit us;
        uint64_t n = get_u64(in);
        if (n == 0) throw FormatError("user with no sessions");
        for (uint64_t k = 0; k < n; ++k) {
            Session s;
            s.user = get_i32(in);
            s.ordinal = get_i32(in);
            s.start_ts = get_i64(in);
            s.id = get_i64(in);
            uint64_t len = get_u64(in);
            if (len > (1u << 24)) throw FormatError("session length out of range");
            s.items.resize(static_cast<size_t>(len));
            for (auto& it : s.items) {
                it = get_i32(in);
                if (it < 1 || it > cat.item_count()) throw FormatError("item index out of range");
            }
            if (s.user != static_cast<int32_t>(u) || s.ordinal != static_cast<int32_t>(k))
                throw FormatError("session table out of order");
            us.sessions.push_back(std::move(s));
        }
        us.ranges = split_indices(n, split.proportions);
        split.users.push_back(std::move(us));
    }
    return split;
}

inline void save_dataset_file(const std::string& path, const DatasetSplit& split) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    save_dataset(out, split);
}

inline DatasetSplit load_dataset_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    return load_dataset(in);
}

}  // namespace sessrec
