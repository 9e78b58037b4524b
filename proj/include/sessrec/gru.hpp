#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sessrec/common.hpp"
#include "sessrec/params.hpp"
#include "sessrec/tensor.hpp"

namespace sessrec {

// Gate rows are stacked z, r, candidate: wx/wh rows [0,d) drive z,
// [d,2d) drive r, [2d,3d) drive the candidate state.

/// One step's cached activations, enough to run the step backwards.
struct GruStep {
    Vec x;       // input
    Vec h_prev;  // state the step started from
    Vec z, r, c; // gate activations
    Vec h;       // output state
};

struct GruTrace {
    std::vector<GruStep> steps;

    size_t length() const { return steps.size(); }
    const Vec& state(size_t n) const { return steps[n].h; }  // h_{n+1}
    const Vec& final_state() const {
        if (steps.empty()) throw PreconditionError("empty trace has no final state");
        return steps.back().h;
    }
};

namespace detail {

/// out = rows [r0, r0+len) of M applied to x
inline void matvec_rows(const Mat& m, size_t r0, size_t len, const Vec& x, Vec& out) {
    for (size_t i = 0; i < len; ++i) {
        const double* row = m.row(r0 + i);
        double s = 0.0;
        for (size_t c = 0; c < m.cols; ++c) s += row[c] * x[c];
        out[i] += s;
    }
}

/// out += (rows [r0, r0+len) of M)^T u
inline void matvec_rows_t(const Mat& m, size_t r0, size_t len, const Vec& u, Vec& out) {
    for (size_t i = 0; i < len; ++i) {
        const double* row = m.row(r0 + i);
        const double ui = u[i];
        for (size_t c = 0; c < m.cols; ++c) out[c] += row[c] * ui;
    }
}

/// rows [r0, r0+len) of M += u v^T
inline void add_outer_rows(Mat& m, size_t r0, size_t len, const Vec& u, const Vec& v) {
    for (size_t i = 0; i < len; ++i) {
        double* row = m.row(r0 + i);
        const double ui = u[i];
        for (size_t c = 0; c < m.cols; ++c) row[c] += ui * v[c];
    }
}

}  // namespace detail

/// h = (1-z) ⊙ h_prev + z ⊙ tanh(W_c x + U_c(r ⊙ h_prev) + b_c),
/// z and r sigmoid gates over W x + U h_prev + b rows.
/// When step is non-null the activations are cached for the backward pass.
inline Vec gru_cell(const GruParams& p, const Vec& x, const Vec& h_prev, GruStep* step = nullptr) {
    const size_t d = p.d;
    if (x.size() != d || h_prev.size() != d)
        throw ShapeError("gru_cell: input dimension mismatch");
    Vec z(d), r(d), c(d);
    for (size_t i = 0; i < d; ++i) {
        z[i] = (*p.b)[i];
        r[i] = (*p.b)[d + i];
        c[i] = (*p.b)[2 * d + i];
    }
    detail::matvec_rows(*p.wx, 0, d, x, z);
    detail::matvec_rows(*p.wh, 0, d, h_prev, z);
    detail::matvec_rows(*p.wx, d, d, x, r);
    detail::matvec_rows(*p.wh, d, d, h_prev, r);
    for (size_t i = 0; i < d; ++i) {
        z[i] = sigmoid(z[i]);
        r[i] = sigmoid(r[i]);
    }
    Vec rh(d);
    for (size_t i = 0; i < d; ++i) rh[i] = r[i] * h_prev[i];
    detail::matvec_rows(*p.wx, 2 * d, d, x, c);
    detail::matvec_rows(*p.wh, 2 * d, d, rh, c);
    for (size_t i = 0; i < d; ++i) c[i] = std::tanh(c[i]);
    Vec h(d);
    for (size_t i = 0; i < d; ++i) h[i] = (1.0 - z[i]) * h_prev[i] + z[i] * c[i];
    if (step) {
        step->x = x;
        step->h_prev = h_prev;
        step->z = std::move(z);
        step->r = std::move(r);
        step->c = std::move(c);
        step->h = h;
    }
    return h;
}

/// Fold the cell over a vector sequence from h_0 = 0; the trace keeps every
/// step. Returns the final state (zero vector for an empty sequence).
inline Vec gru_fold(const GruParams& p, const std::vector<Vec>& inputs, GruTrace* trace = nullptr) {
    Vec h(p.d, 0.0);
    if (trace) trace->steps.clear();
    for (const Vec& x : inputs) {
        if (trace) {
            trace->steps.emplace_back();
            h = gru_cell(p, x, h, &trace->steps.back());
        } else {
            h = gru_cell(p, x, h);
        }
    }
    return h;
}

/// Encode a session's items through their embeddings. Session must be
/// non-empty and every index a real catalog item.
inline Vec gru_encode(const GruParams& p, const std::vector<int32_t>& items,
                      const ParameterStore& store, GruTrace* trace = nullptr) {
    if (items.empty()) throw PreconditionError("gru_encode: empty session");
    std::vector<Vec> inputs;
    inputs.reserve(items.size());
    for (int32_t it : items) inputs.push_back(embedding_of(store, it));
    return gru_fold(p, inputs, trace);
}

/// Exact reverse-mode sweep over a recorded trace. upstream[n] is the loss
/// gradient arriving directly at state h_{n+1} (beyond the recurrence);
/// parameter gradients accumulate into the store slots and the per-step
/// input gradients are returned (same length/order as the inputs).
inline std::vector<Vec> gru_backward(const GruParams& p, const GruTrace& trace,
                                     const std::vector<Vec>& upstream) {
    const size_t L = trace.length();
    if (upstream.size() != L)
        throw PreconditionError("gru_backward: upstream/trace length mismatch");
    const size_t d = p.d;
    std::vector<Vec> dx(L, Vec(d, 0.0));
    Vec dh(d, 0.0);
    for (size_t n = L; n-- > 0;) {
        const GruStep& st = trace.steps[n];
        axpy(dh, 1.0, upstream[n]);

        Vec dz(d), dc(d), dh_prev(d);
        for (size_t i = 0; i < d; ++i) {
            dz[i] = dh[i] * (st.c[i] - st.h_prev[i]);
            dc[i] = dh[i] * st.z[i];
            dh_prev[i] = dh[i] * (1.0 - st.z[i]);
        }
        // candidate: c = tanh(cpre), cpre = Wx_c x + Wh_c (r ⊙ h_prev) + b_c
        Vec dcpre(d);
        for (size_t i = 0; i < d; ++i) dcpre[i] = dc[i] * (1.0 - st.c[i] * st.c[i]);
        Vec rh(d);
        for (size_t i = 0; i < d; ++i) rh[i] = st.r[i] * st.h_prev[i];
        detail::add_outer_rows(*p.gwx, 2 * d, d, dcpre, st.x);
        detail::add_outer_rows(*p.gwh, 2 * d, d, dcpre, rh);
        for (size_t i = 0; i < d; ++i) (*p.gb)[2 * d + i] += dcpre[i];
        Vec drh(d, 0.0);
        detail::matvec_rows_t(*p.wh, 2 * d, d, dcpre, drh);
        detail::matvec_rows_t(*p.wx, 2 * d, d, dcpre, dx[n]);
        Vec dr(d);
        for (size_t i = 0; i < d; ++i) {
            dr[i] = drh[i] * st.h_prev[i];
            dh_prev[i] += drh[i] * st.r[i];
        }
        // gates: z = σ(zpre), r = σ(rpre), both over Wx x + Wh h_prev + b
        Vec dzpre(d), drpre(d);
        for (size_t i = 0; i < d; ++i) {
            dzpre[i] = dz[i] * st.z[i] * (1.0 - st.z[i]);
            drpre[i] = dr[i] * st.r[i] * (1.0 - st.r[i]);
        }
        detail::add_outer_rows(*p.gwx, 0, d, dzpre, st.x);
        detail::add_outer_rows(*p.gwh, 0, d, dzpre, st.h_prev);
        detail::add_outer_rows(*p.gwx, d, d, drpre, st.x);
        detail::add_outer_rows(*p.gwh, d, d, drpre, st.h_prev);
        for (size_t i = 0; i < d; ++i) {
            (*p.gb)[i] += dzpre[i];
            (*p.gb)[d + i] += drpre[i];
        }
        detail::matvec_rows_t(*p.wx, 0, d, dzpre, dx[n]);
        detail::matvec_rows_t(*p.wh, 0, d, dzpre, dh_prev);
        detail::matvec_rows_t(*p.wx, d, d, drpre, dx[n]);
        detail::matvec_rows_t(*p.wh, d, d, drpre, dh_prev);

        dh = std::move(dh_prev);
    }
    return dx;
}

/// Accumulate per-item input gradients into the embedding gradient rows.
inline void scatter_embedding_grads(ParameterStore& store, const std::vector<int32_t>& items,
                                    const std::vector<Vec>& dx) {
    if (items.size() != dx.size())
        throw PreconditionError("scatter_embedding_grads: length mismatch");
    Mat& gemb = store.block("item_embeddings").grad;
    for (size_t n = 0; n < items.size(); ++n) {
        if (items[n] < 1 || static_cast<size_t>(items[n]) >= gemb.rows)
            throw PreconditionError("item index out of range");
        double* row = gemb.row(static_cast<size_t>(items[n]));
        for (size_t i = 0; i < dx[n].size(); ++i) row[i] += dx[n][i];
    }
}

}  // namespace sessrec
