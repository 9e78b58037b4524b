#pragma once

#include <cstdint>
#include <vector>

#include "sessrec/common.hpp"
#include "sessrec/gru.hpp"
#include "sessrec/params.hpp"
#include "sessrec/tensor.hpp"

namespace sessrec {

/// A session encoded for pooling: the recurrent trace plus the attention
/// weights and pooled interest vector. When pooled_by_attention is false
/// (last-state readout ablation) weights are unused and pooled == final
/// hidden state.
struct SessionEncoding {
    GruTrace trace;
    Vec weights;  // post-softmax, one per step
    Vec pooled;   // the session's interest vector
    bool pooled_by_attention = true;
};

/// Attention-pool a recurrent trace: raw weight per step is the inner
/// product with the final state, softmax-normalized; the pooled vector is
/// the weighted sum of states.
inline void attention_pool(SessionEncoding& enc) {
    const size_t L = enc.trace.length();
    if (L == 0) throw PreconditionError("attention_pool: empty trace");
    const Vec& last = enc.trace.final_state();
    Vec raw(L);
    for (size_t n = 0; n < L; ++n) raw[n] = dot(enc.trace.state(n), last);
    enc.weights = softmax(raw);
    enc.pooled.assign(last.size(), 0.0);
    for (size_t n = 0; n < L; ++n) axpy(enc.pooled, enc.weights[n], enc.trace.state(n));
    enc.pooled_by_attention = true;
}

/// Encode one item sequence: GRU fold, then attention pooling (or the raw
/// final state when use_attention is false).
inline SessionEncoding attention_encode(const GruParams& p, const std::vector<int32_t>& items,
                                        const ParameterStore& store, bool use_attention = true) {
    if (items.empty()) throw PreconditionError("attention_encode: empty session");
    SessionEncoding enc;
    Vec final_state = gru_encode(p, items, store, &enc.trace);
    if (use_attention) {
        attention_pool(enc);
    } else {
        enc.pooled = std::move(final_state);
        enc.pooled_by_attention = false;
    }
    return enc;
}

/// Backward through the pooling (or last-state readout) into per-step state
/// gradients, then through the recurrence. Returns per-step input gradients.
inline std::vector<Vec> attention_backward(const GruParams& p, const SessionEncoding& enc,
                                           const Vec& g_pooled) {
    const size_t L = enc.trace.length();
    if (L == 0) throw PreconditionError("attention_backward: empty trace");
    std::vector<Vec> dh(L, Vec(p.d, 0.0));
    if (!enc.pooled_by_attention) {
        dh[L - 1] = g_pooled;
        return gru_backward(p, enc.trace, dh);
    }
    const Vec& w = enc.weights;
    const Vec& last = enc.trace.final_state();
    // pooled = Σ w_n h_n
    Vec dw(L);
    for (size_t n = 0; n < L; ++n) {
        dw[n] = dot(enc.trace.state(n), g_pooled);
        axpy(dh[n], w[n], g_pooled);
    }
    // softmax: draw = w ⊙ (dw − <w, dw>)
    const double mix = dot(w, dw);
    Vec draw(L);
    for (size_t n = 0; n < L; ++n) draw[n] = w[n] * (dw[n] - mix);
    // raw_n = <h_n, h_L>; the n = L−1 term contributes twice through both factors
    for (size_t n = 0; n < L; ++n) {
        axpy(dh[n], draw[n], last);
        axpy(dh[L - 1], draw[n], enc.trace.state(n));
    }
    return gru_backward(p, enc.trace, dh);
}

}  // namespace sessrec
