#pragma once

#include <cstdint>
#include <vector>

#include "sessrec/common.hpp"
#include "sessrec/types.hpp"

namespace sessrec {

/// Sessions of length <= 4 count as short; length >= 5 triggers splitting.
inline constexpr size_t kShortMaxLen = 4;

inline bool is_long(const Session& s) { return s.items.size() > kShortMaxLen; }
inline bool is_long(size_t len) { return len > kShortMaxLen; }

/// Stride-1 windows of the given width over an item sequence. Raw layer:
/// only requires width in [1, len]; callers wanting the long-session policy
/// go through split_windows.
inline std::vector<std::vector<int32_t>> enumerate_windows(const std::vector<int32_t>& items,
                                                           size_t width) {
    if (width < 1) throw PreconditionError("enumerate_windows: width must be positive");
    if (width > items.size())
        throw PreconditionError("enumerate_windows: width exceeds sequence length");
    std::vector<std::vector<int32_t>> out;
    out.reserve(items.size() - width + 1);
    for (size_t k = 0; k + width <= items.size(); ++k)
        out.emplace_back(items.begin() + static_cast<std::ptrdiff_t>(k),
                         items.begin() + static_cast<std::ptrdiff_t>(k + width));
    return out;
}

/// Windows of one long session; user/ordinal inherited from the source.
struct WindowSet {
    int32_t user = 0;
    int32_t ordinal = 0;
    int64_t source_id = -1;
    std::vector<std::vector<int32_t>> windows;
};

/// Split a long session into its |s| − width + 1 overlapping windows
/// (|s| − 2 at the default width 3). Callers must branch on is_long;
/// handing a short session here is a contract violation.
inline WindowSet split_windows(const Session& s, size_t width = 3) {
    if (!is_long(s))
        throw PreconditionError("split_windows: session of length " +
                                std::to_string(s.items.size()) + " is not long");
    WindowSet ws;
    ws.user = s.user;
    ws.ordinal = s.ordinal;
    ws.source_id = s.id;
    ws.windows = enumerate_windows(s.items, width);
    return ws;
}

}  // namespace sessrec
