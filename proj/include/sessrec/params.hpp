#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "sessrec/common.hpp"
#include "sessrec/config.hpp"
#include "sessrec/tensor.hpp"

namespace sessrec {

/// One learnable array plus its same-shape gradient slot.
/// Vectors are stored as single-column matrices; .value.a doubles as a Vec.
struct ParamBlock {
    std::string name;
    Mat value;
    Mat grad;

    ParamBlock(std::string n, size_t rows, size_t cols)
        : name(std::move(n)), value(rows, cols), grad(rows, cols) {}
};

class ParameterStore {
public:
    size_t dim = 0;      // embedding / hidden dimension
    size_t hidden = 0;   // MLP hidden width
    uint64_t seed = 0;   // seed the values were initialized from

    ParamBlock& add_block(const std::string& name, size_t rows, size_t cols) {
        if (by_name_.count(name)) throw PreconditionError("duplicate parameter block: " + name);
        if (rows == 0 || cols == 0) throw ShapeError("empty parameter block: " + name);
        by_name_.emplace(name, blocks_.size());
        blocks_.emplace_back(name, rows, cols);
        offsets_.push_back(offsets_.back() + rows * cols);
        return blocks_.back();
    }

    bool has_block(const std::string& name) const { return by_name_.count(name) > 0; }

    ParamBlock& block(const std::string& name) {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw PreconditionError("unknown parameter block: " + name);
        return blocks_[it->second];
    }
    const ParamBlock& block(const std::string& name) const {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw PreconditionError("unknown parameter block: " + name);
        return blocks_[it->second];
    }

    std::vector<ParamBlock>& blocks() { return blocks_; }
    const std::vector<ParamBlock>& blocks() const { return blocks_; }

    /// Total scalar parameter count across all blocks.
    size_t scalar_count() const { return offsets_.back(); }

    /// Flat scalar addressing (block declaration order), for probing.
    double& param_at(size_t flat) { return locate(flat, /*grad=*/false); }
    double& grad_at(size_t flat) { return locate(flat, /*grad=*/true); }
    const std::string& block_of(size_t flat) const {
        return blocks_[block_index(flat)].name;
    }

    void zero_grads() {
        for (auto& b : blocks_) b.grad.fill(0.0);
    }

    double grad_sq_norm() const {
        double s = 0.0;
        for (const auto& b : blocks_)
            for (double g : b.grad.a) s += g * g;
        return s;
    }

    void scale_grads(double s) {
        for (auto& b : blocks_)
            for (double& g : b.grad.a) g *= s;
    }

private:
    size_t block_index(size_t flat) const {
        if (flat >= offsets_.back()) throw PreconditionError("parameter index out of range");
        size_t lo = 0, hi = blocks_.size();
        while (hi - lo > 1) {
            size_t mid = (lo + hi) / 2;
            if (offsets_[mid] <= flat) lo = mid;
            else hi = mid;
        }
        return lo;
    }
    double& locate(size_t flat, bool grad) {
        size_t b = block_index(flat);
        size_t off = flat - offsets_[b];
        return grad ? blocks_[b].grad.a[off] : blocks_[b].value.a[off];
    }

    std::vector<ParamBlock> blocks_;
    std::unordered_map<std::string, size_t> by_name_;
    std::vector<size_t> offsets_{0};  // prefix sums of block sizes
};

/// Borrowed view of one GRU block (z, r, candidate gates stacked row-wise).
struct GruParams {
    const Mat* wx;  // 3d x d
    const Mat* wh;  // 3d x d
    const Vec* b;   // 3d
    Mat* gwx;
    Mat* gwh;
    Vec* gb;
    size_t d;
};

inline GruParams gru_params(ParameterStore& store, const std::string& prefix) {
    auto& wx = store.block(prefix + ".wx");
    auto& wh = store.block(prefix + ".wh");
    auto& b = store.block(prefix + ".b");
    size_t d = wx.value.cols;
    if (wx.value.rows != 3 * d || wh.value.rows != 3 * d || wh.value.cols != d ||
        b.value.rows != 3 * d || b.value.cols != 1)
        throw ShapeError("malformed GRU block: " + prefix);
    return {&wx.value, &wh.value, &b.value.a, &wx.grad, &wh.grad, &b.grad.a, d};
}

/// Borrowed view of one fusion MLP block (one tanh hidden layer).
struct MlpParams {
    const Mat* w1;  // h x d
    const Vec* b1;  // h
    const Mat* w2;  // d x h
    const Vec* b2;  // d
    Mat* gw1;
    Vec* gb1;
    Mat* gw2;
    Vec* gb2;
};

inline MlpParams mlp_params(ParameterStore& store, const std::string& prefix) {
    auto& w1 = store.block(prefix + ".w1");
    auto& b1 = store.block(prefix + ".b1");
    auto& w2 = store.block(prefix + ".w2");
    auto& b2 = store.block(prefix + ".b2");
    if (w1.value.rows != b1.value.rows || b1.value.cols != 1 ||
        w2.value.cols != w1.value.rows || w2.value.rows != b2.value.rows || b2.value.cols != 1 ||
        w1.value.cols != w2.value.rows)
        throw ShapeError("malformed MLP block: " + prefix);
    return {&w1.value, &b1.value.a, &w2.value, &b2.value.a,
            &w1.grad, &b1.grad.a, &w2.grad, &b2.grad.a};
}

/// out = W2 tanh(W1 x + b1) + b2
inline Vec mlp_forward(const MlpParams& p, const Vec& x) {
    Vec h = matvec(*p.w1, x);
    axpy(h, 1.0, *p.b1);
    for (double& v : h) v = std::tanh(v);
    Vec out = matvec(*p.w2, h);
    axpy(out, 1.0, *p.b2);
    return out;
}

/// Backward pass of mlp_forward; accumulates into the grad slots and
/// returns d loss / d x. Recomputes the hidden activations from x.
inline Vec mlp_backward(const MlpParams& p, const Vec& x, const Vec& gout) {
    Vec h = matvec(*p.w1, x);
    axpy(h, 1.0, *p.b1);
    for (double& v : h) v = std::tanh(v);
    add_outer(*p.gw2, gout, h);
    axpy(*p.gb2, 1.0, gout);
    Vec gh = matvec_t(*p.w2, gout);
    for (size_t i = 0; i < gh.size(); ++i) gh[i] *= 1.0 - h[i] * h[i];
    add_outer(*p.gw1, gh, x);
    axpy(*p.gb1, 1.0, gh);
    return matvec_t(*p.w1, gh);
}

namespace detail {

inline void add_gru_blocks(ParameterStore& store, const std::string& prefix, size_t d) {
    store.add_block(prefix + ".wx", 3 * d, d);
    store.add_block(prefix + ".wh", 3 * d, d);
    store.add_block(prefix + ".b", 3 * d, 1);
}

inline void add_mlp_blocks(ParameterStore& store, const std::string& prefix, size_t d, size_t h) {
    store.add_block(prefix + ".w1", h, d);
    store.add_block(prefix + ".b1", h, 1);
    store.add_block(prefix + ".w2", d, h);
    store.add_block(prefix + ".b2", d, 1);
}

}  // namespace detail

/// All learnable state of the model for a catalog of item_count real items.
/// Embedding row 0 is the padding slot: never looked up, never scored,
/// kept at zero. Weight matrices and embeddings start uniform(-1/sqrt(d),
/// 1/sqrt(d)); biases start at zero. Same seed, same bits.
inline ParameterStore make_store(int32_t item_count, const TrainConfig& cfg) {
    if (item_count < 1) throw PreconditionError("make_store: need at least one item");
    validate(cfg);
    ParameterStore store;
    store.dim = cfg.dim;
    store.hidden = cfg.hidden_width();
    store.seed = cfg.seed;
    const size_t d = cfg.dim;
    store.add_block("item_embeddings", static_cast<size_t>(item_count) + 1, d);
    detail::add_gru_blocks(store, "gru_pre", d);
    detail::add_gru_blocks(store, "gru_longterm", d);
    detail::add_mlp_blocks(store, "mlp_cur", d, store.hidden);
    detail::add_mlp_blocks(store, "mlp_sim", d, store.hidden);
    detail::add_mlp_blocks(store, "mlp_his", d, store.hidden);

    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    Rng rng = make_rng(mix_seed(cfg.seed, 0x1417u));
    auto is_bias = [](const std::string& name) {
        auto pos = name.rfind('.');
        return pos != std::string::npos && name[pos + 1] == 'b';
    };
    for (auto& blk : store.blocks()) {
        if (is_bias(blk.name)) continue;  // biases zero
        for (double& v : blk.value.a) v = uniform_range(rng, -bound, bound);
    }
    // padding embedding stays zero
    auto& emb = store.block("item_embeddings").value;
    for (size_t c = 0; c < emb.cols; ++c) emb.at(0, c) = 0.0;
    return store;
}

/// Copy of one item's embedding row.
inline Vec embedding_of(const ParameterStore& store, int32_t item) {
    const Mat& emb = store.block("item_embeddings").value;
    if (item < 1 || static_cast<size_t>(item) >= emb.rows)
        throw PreconditionError("item index out of range: " + std::to_string(item));
    const double* r = emb.row(static_cast<size_t>(item));
    return Vec(r, r + emb.cols);
}

// ---- checkpoint serialization ----

inline constexpr char kCheckpointMagic[] = "SESSREC.CP";
inline constexpr uint32_t kCheckpointVersion = 1;

inline void save_store(std::ostream& out, const ParameterStore& store) {
    auto put = [&](const void* p, size_t n) {
        out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        if (!out) throw IoError("write failure");
    };
    put(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
    uint32_t version = kCheckpointVersion;
    put(&version, 4);
    uint64_t meta[3] = {store.dim, store.hidden, store.seed};
    put(meta, sizeof(meta));
    uint64_t count = store.blocks().size();
    put(&count, 8);
    for (const auto& blk : store.blocks()) {
        uint64_t name_len = blk.name.size();
        put(&name_len, 8);
        put(blk.name.data(), blk.name.size());
        uint64_t shape[2] = {blk.value.rows, blk.value.cols};
        put(shape, sizeof(shape));
        put(blk.value.a.data(), blk.value.a.size() * sizeof(double));
    }
    out.flush();
    if (!out) throw IoError("write failure");
}

inline ParameterStore load_store(std::istream& in) {
    auto get = [&](void* p, size_t n) {
        in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (in.gcount() != static_cast<std::streamsize>(n))
            throw FormatError("truncated checkpoint");
    };
    char magic[sizeof(kCheckpointMagic) - 1];
    get(magic, sizeof(magic));
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw FormatError("not a checkpoint file");
    uint32_t version = 0;
    get(&version, 4);
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    uint64_t meta[3];
    get(meta, sizeof(meta));
    ParameterStore store;
    store.dim = static_cast<size_t>(meta[0]);
    store.hidden = static_cast<size_t>(meta[1]);
    store.seed = meta[2];
    uint64_t count = 0;
    get(&count, 8);
    if (count == 0 || count > 4096) throw FormatError("block count out of range");
    for (uint64_t i = 0; i < count; ++i) {
        uint64_t name_len = 0;
        get(&name_len, 8);
        if (name_len == 0 || name_len > 256) throw FormatError("block name length out of range");
        std::string name(static_cast<size_t>(name_len), '\0');
        get(name.data(), name.size());
        uint64_t shape[2];
        get(shape, sizeof(shape));
        if (shape[0] == 0 || shape[1] == 0 || shape[0] * shape[1] > (1ull << 32))
            throw FormatError("block shape out of range: " + name);
        auto& blk = store.add_block(name, static_cast<size_t>(shape[0]), static_cast<size_t>(shape[1]));
        get(blk.value.a.data(), blk.value.a.size() * sizeof(double));
        if (!all_finite(blk.value.a)) throw NumericError("non-finite parameters in block " + name);
    }
    return store;
}

inline void save_store_file(const std::string& path, const ParameterStore& store) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    save_store(out, store);
}

inline ParameterStore load_store_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    return load_store(in);
}

}  // namespace sessrec
