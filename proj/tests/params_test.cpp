#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "sessrec/gradcheck.hpp"
#include "sessrec/optimizer.hpp"
#include "sessrec/params.hpp"

namespace sessrec {
namespace {

TrainConfig tiny_cfg(size_t dim = 4, uint64_t seed = 42) {
    TrainConfig cfg;
    cfg.dim = dim;
    cfg.seed = seed;
    return cfg;
}

TEST(Store, BlockInventoryAndShapes) {
    ParameterStore store = make_store(5, tiny_cfg(4));
    const size_t d = 4;
    EXPECT_EQ(store.block("item_embeddings").value.rows, 6u);
    EXPECT_EQ(store.block("item_embeddings").value.cols, d);
    for (const char* g : {"gru_pre", "gru_longterm"}) {
        GruParams p = gru_params(store, g);
        EXPECT_EQ(p.wx->rows, 3 * d);
        EXPECT_EQ(p.wx->cols, d);
        EXPECT_EQ(p.wh->rows, 3 * d);
        EXPECT_EQ(p.b->size(), 3 * d);
        EXPECT_EQ(p.d, d);
    }
    for (const char* m : {"mlp_cur", "mlp_sim", "mlp_his"}) {
        MlpParams p = mlp_params(store, m);
        EXPECT_EQ(p.w1->rows, d);  // hidden width defaults to d
        EXPECT_EQ(p.w1->cols, d);
        EXPECT_EQ(p.w2->rows, d);
        EXPECT_EQ(p.w2->cols, d);
    }
    // every block has a same-shape gradient slot
    for (const auto& blk : store.blocks()) {
        EXPECT_EQ(blk.grad.rows, blk.value.rows);
        EXPECT_EQ(blk.grad.cols, blk.value.cols);
    }
    EXPECT_THROW(store.block("nonexistent"), PreconditionError);
    EXPECT_THROW(make_store(0, tiny_cfg()), PreconditionError);
}

TEST(Store, InitBitReproducibleAndBounded) {
    ParameterStore a = make_store(7, tiny_cfg(4, 99));
    ParameterStore b = make_store(7, tiny_cfg(4, 99));
    ParameterStore c = make_store(7, tiny_cfg(4, 100));
    const double bound = 1.0 / std::sqrt(4.0);
    bool any_diff = false;
    for (size_t i = 0; i < a.blocks().size(); ++i) {
        EXPECT_EQ(a.blocks()[i].value.a, b.blocks()[i].value.a);
        if (a.blocks()[i].value.a != c.blocks()[i].value.a) any_diff = true;
        for (double v : a.blocks()[i].value.a) EXPECT_LE(std::fabs(v), bound);
    }
    EXPECT_TRUE(any_diff);
    // biases start at zero
    for (const char* name : {"gru_pre.b", "gru_longterm.b", "mlp_cur.b1", "mlp_cur.b2",
                             "mlp_sim.b1", "mlp_sim.b2", "mlp_his.b1", "mlp_his.b2"})
        for (double v : a.block(name).value.a) EXPECT_EQ(v, 0.0);
    // padding embedding row is zero
    const Mat& emb = a.block("item_embeddings").value;
    for (size_t col = 0; col < emb.cols; ++col) EXPECT_EQ(emb.at(0, col), 0.0);
}

TEST(Store, FlatIndexingEnumeratesEveryScalarOnce) {
    ParameterStore store = make_store(3, tiny_cfg(2));
    size_t total = store.scalar_count();
    size_t by_blocks = 0;
    for (const auto& blk : store.blocks()) by_blocks += blk.value.size();
    EXPECT_EQ(total, by_blocks);
    for (size_t i = 0; i < total; ++i) store.param_at(i) = static_cast<double>(i);
    size_t flat = 0;
    for (const auto& blk : store.blocks())
        for (double v : blk.value.a) EXPECT_EQ(v, static_cast<double>(flat++));
    EXPECT_THROW(store.param_at(total), PreconditionError);
    EXPECT_EQ(store.block_of(0), "item_embeddings");
}

TEST(Store, EmbeddingLookup) {
    ParameterStore store = make_store(3, tiny_cfg(2));
    Vec e2 = embedding_of(store, 2);
    const Mat& emb = store.block("item_embeddings").value;
    EXPECT_EQ(e2[0], emb.at(2, 0));
    EXPECT_EQ(e2[1], emb.at(2, 1));
    EXPECT_THROW(embedding_of(store, 0), PreconditionError);  // padding slot
    EXPECT_THROW(embedding_of(store, 4), PreconditionError);
}

// independent scalar-by-scalar evaluation of one tanh hidden layer
Vec mlp_oracle(const Mat& w1, const Vec& b1, const Mat& w2, const Vec& b2, const Vec& x) {
    Vec h(w1.rows, 0.0);
    for (size_t r = 0; r < w1.rows; ++r) {
        double s = b1[r];
        for (size_t c = 0; c < w1.cols; ++c) s += w1.at(r, c) * x[c];
        h[r] = std::tanh(s);
    }
    Vec out(w2.rows, 0.0);
    for (size_t r = 0; r < w2.rows; ++r) {
        double s = b2[r];
        for (size_t c = 0; c < w2.cols; ++c) s += w2.at(r, c) * h[c];
        out[r] = s;
    }
    return out;
}

TEST(Mlp, MatchesIndependentOracle) {
    ParameterStore store = make_store(3, tiny_cfg(5, 7));
    MlpParams p = mlp_params(store, "mlp_cur");
    // give biases nonzero values so they participate
    Rng rng = make_rng(31);
    for (double& v : store.block("mlp_cur.b1").value.a) v = uniform_range(rng, -1, 1);
    for (double& v : store.block("mlp_cur.b2").value.a) v = uniform_range(rng, -1, 1);
    for (int trial = 0; trial < 10; ++trial) {
        Vec x(5);
        for (double& v : x) v = uniform_range(rng, -2, 2);
        Vec got = mlp_forward(p, x);
        Vec want = mlp_oracle(*p.w1, *p.b1, *p.w2, *p.b2, x);
        ASSERT_EQ(got.size(), want.size());
        // summation order differs between the two evaluations
        for (size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
        // determinism: bitwise-equal on repeat
        EXPECT_EQ(mlp_forward(p, x), got);
    }
}

TEST(Mlp, ZeroParamsZeroOutput) {
    ParameterStore store = make_store(3, tiny_cfg(4));
    for (const char* n : {"mlp_cur.w1", "mlp_cur.w2"}) store.block(n).value.fill(0.0);
    MlpParams p = mlp_params(store, "mlp_cur");
    Vec out = mlp_forward(p, {1, 2, 3, 4});
    EXPECT_EQ(out, Vec(4, 0.0));
}

TEST(Mlp, IdentityWeightsGiveTanh) {
    ParameterStore store = make_store(3, tiny_cfg(3));
    for (const char* n : {"mlp_cur.w1", "mlp_cur.w2"}) {
        Mat& w = store.block(n).value;
        w.fill(0.0);
        for (size_t i = 0; i < w.rows; ++i) w.at(i, i) = 1.0;
    }
    MlpParams p = mlp_params(store, "mlp_cur");
    Vec out = mlp_forward(p, {0.5, -1.0, 2.0});
    EXPECT_DOUBLE_EQ(out[0], std::tanh(0.5));
    EXPECT_DOUBLE_EQ(out[1], std::tanh(-1.0));
    EXPECT_DOUBLE_EQ(out[2], std::tanh(2.0));
}

TEST(Mlp, BackwardPassesGradCheck) {
    ParameterStore store = make_store(2, tiny_cfg(3, 13));
    Rng rng = make_rng(17);
    for (double& v : store.block("mlp_sim.b1").value.a) v = uniform_range(rng, -0.5, 0.5);
    Vec x = {0.3, -1.1, 0.7};
    auto loss_fn = [&]() {
        MlpParams p = mlp_params(store, "mlp_sim");
        Vec out = mlp_forward(p, x);
        return 0.5 * dot(out, out);
    };
    store.zero_grads();
    MlpParams p = mlp_params(store, "mlp_sim");
    Vec out = mlp_forward(p, x);
    mlp_backward(p, x, out);  // d(0.5||out||^2)/dout = out
    GradCheckReport rep = grad_check(loss_fn, store, 0, 1e-5);
    EXPECT_LT(rep.by_group.at("mlp_sim"), 1e-8) << rep.worst_param;
    // blocks the loss never touches: analytic and numeric both zero
    EXPECT_LT(rep.by_group.at("mlp_cur"), 1e-12);
    EXPECT_LT(rep.by_group.at("gru_pre"), 1e-12);
}

TEST(Mlp, BackwardInputGradient) {
    ParameterStore store = make_store(2, tiny_cfg(3, 19));
    MlpParams p = mlp_params(store, "mlp_his");
    Vec x = {0.2, 0.4, -0.6};
    store.zero_grads();
    Vec out = mlp_forward(p, x);
    Vec gx = mlp_backward(p, x, out);
    // finite-difference on x itself
    for (size_t i = 0; i < x.size(); ++i) {
        const double eps = 1e-6;
        Vec xp = x, xm = x;
        xp[i] += eps;
        xm[i] -= eps;
        Vec op = mlp_forward(p, xp), om = mlp_forward(p, xm);
        double numeric = (0.5 * dot(op, op) - 0.5 * dot(om, om)) / (2 * eps);
        EXPECT_NEAR(gx[i], numeric, 1e-7);
    }
}

TEST(Checkpoint, RoundTripBitwise) {
    ParameterStore store = make_store(6, tiny_cfg(3, 555));
    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    save_store(buf, store);
    ParameterStore back = load_store(buf);
    EXPECT_EQ(back.dim, store.dim);
    EXPECT_EQ(back.hidden, store.hidden);
    EXPECT_EQ(back.seed, store.seed);
    ASSERT_EQ(back.blocks().size(), store.blocks().size());
    for (size_t i = 0; i < back.blocks().size(); ++i) {
        EXPECT_EQ(back.blocks()[i].name, store.blocks()[i].name);
        EXPECT_EQ(back.blocks()[i].value.rows, store.blocks()[i].value.rows);
        EXPECT_EQ(back.blocks()[i].value.cols, store.blocks()[i].value.cols);
        EXPECT_EQ(back.blocks()[i].value.a, store.blocks()[i].value.a);
    }
}

TEST(Checkpoint, RejectsGarbageAndTruncation) {
    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    buf << "garbage bytes here";
    EXPECT_THROW(load_store(buf), FormatError);

    ParameterStore store = make_store(2, tiny_cfg(2));
    std::stringstream full(std::ios::in | std::ios::out | std::ios::binary);
    save_store(full, store);
    std::string bytes = full.str();
    std::stringstream cut(std::ios::in | std::ios::out | std::ios::binary);
    cut << bytes.substr(0, bytes.size() / 2);
    EXPECT_THROW(load_store(cut), FormatError);
}

ParameterStore scalar_store(double v0) {
    ParameterStore store;
    store.dim = 1;
    auto& blk = store.add_block("theta", 1, 1);
    blk.value.a[0] = v0;
    return store;
}

TEST(Adam, ZeroGradientNoChange) {
    ParameterStore store = make_store(3, tiny_cfg(4, 3));
    auto before = store.block("gru_pre.wx").value.a;
    Adam opt(1e-3);
    store.zero_grads();
    opt.step(store);
    EXPECT_EQ(store.block("gru_pre.wx").value.a, before);
}

TEST(Adam, FirstStepMovesByLr) {
    ParameterStore store = scalar_store(2.0);
    store.block("theta").grad.a[0] = 1.0;
    Adam opt(0.01);
    opt.step(store);
    // bias-corrected first step: lr * 1 / (1 + eps)
    EXPECT_NEAR(store.block("theta").value.a[0], 2.0 - 0.01, 1e-9);
    EXPECT_EQ(store.block("theta").grad.a[0], 0.0);  // gradients consumed
    EXPECT_EQ(opt.step_count(), 1);
}

TEST(Adam, GlobalClipScalesGradient) {
    // norm 10 with clip 5 halves the gradient: same update as pre-halved grads
    ParameterStore a = scalar_store(0.0);
    a.add_block("phi", 1, 1);
    ParameterStore b = scalar_store(0.0);
    b.add_block("phi", 1, 1);
    a.block("theta").grad.a[0] = 6.0;
    a.block("phi").grad.a[0] = 8.0;
    b.block("theta").grad.a[0] = 3.0;
    b.block("phi").grad.a[0] = 4.0;  // norm 5, not above clip
    Adam oa(0.5), ob(0.5);
    oa.step(a);
    ob.step(b);
    EXPECT_DOUBLE_EQ(a.block("theta").value.a[0], b.block("theta").value.a[0]);
    EXPECT_DOUBLE_EQ(a.block("phi").value.a[0], b.block("phi").value.a[0]);
}

TEST(Adam, MatchesReferenceImplementation) {
    ParameterStore store = scalar_store(1.5);
    Adam opt(0.1);
    // independent reference state
    double theta = 1.5, m = 0.0, v = 0.0;
    Rng rng = make_rng(8);
    for (int t = 1; t <= 5; ++t) {
        double g = uniform_range(rng, -2, 2);
        store.block("theta").grad.a[0] = g;
        opt.step(store);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        double mhat = m / (1 - std::pow(0.9, t));
        double vhat = v / (1 - std::pow(0.999, t));
        theta -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
        EXPECT_NEAR(store.block("theta").value.a[0], theta, 1e-14) << "step " << t;
    }
}

TEST(Adam, NaNGradientNamesBlock) {
    ParameterStore store = make_store(3, tiny_cfg(2));
    store.block("mlp_his.w2").grad.a[1] = std::nan("");
    Adam opt;
    try {
        opt.step(store);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("mlp_his.w2"), std::string::npos);
    }
}

TEST(GradCheck, QuadraticClosedForm) {
    ParameterStore store = scalar_store(3.0);
    store.block("theta").grad.a[0] = 3.0;  // d(theta^2/2) = theta
    auto loss = [&]() {
        double t = store.block("theta").value.a[0];
        return 0.5 * t * t;
    };
    GradCheckReport rep = grad_check(loss, store, 0);
    EXPECT_LT(rep.max_rel_err, 1e-9);
    EXPECT_EQ(rep.probes, 1u);
}

TEST(GradCheck, ProbeSubsetDeterministic) {
    ParameterStore store = make_store(4, tiny_cfg(3, 21));
    auto loss = [&]() {
        double s = 0.0;
        for (const auto& blk : store.blocks())
            for (double v : blk.value.a) s += 0.5 * v * v;
        return s;
    };
    // analytic gradient of the sum-of-squares: the values themselves
    for (auto& blk : store.blocks()) blk.grad.a = blk.value.a;
    GradCheckReport a = grad_check(loss, store, 17, 1e-5, 77);
    GradCheckReport b = grad_check(loss, store, 17, 1e-5, 77);
    EXPECT_EQ(a.probes, 17u);
    EXPECT_LT(a.max_rel_err, 1e-8);
    EXPECT_EQ(a.max_rel_err, b.max_rel_err);
    EXPECT_EQ(a.worst_param, b.worst_param);
    // grad slots were restored untouched
    for (auto& blk : store.blocks()) EXPECT_EQ(blk.grad.a, blk.value.a);
}

}  // namespace
}  // namespace sessrec
