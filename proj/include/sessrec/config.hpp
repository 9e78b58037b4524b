#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "sessrec/common.hpp"
#include "sessrec/types.hpp"

namespace sessrec {

/// Hyperparameters of the model and training loop, plus the ablation switches.
struct TrainConfig {
    size_t dim = 64;          // embedding / hidden dimension
    size_t mlp_hidden = 0;    // hidden width of the fusion MLPs; 0 means dim
    size_t epochs = 30;
    size_t pretrain_epochs = 5;
    double lr = 1e-3;
    size_t top_k = 10;        // candidate sessions kept after similarity ranking
    size_t sample_n = 500;    // uniformly sampled candidate sessions per query
    size_t sim_users = 10;    // similar users contributing history candidates
    int32_t window = 3;       // sliding-window width for long candidate sessions
    size_t history_max = 50;  // most recent past sessions fed to the long-term encoder
    uint64_t seed = 1;

    // ablation switches
    bool no_long_term = false;          // drop the long-term interest branch
    bool use_all_candidates = false;    // skip top-k selection, keep every candidate
    bool no_sampled_candidates = false; // drop the uniformly sampled candidate pool
    bool last_state_readout = false;    // replace attention pooling with the final GRU state

    size_t hidden_width() const { return mlp_hidden == 0 ? dim : mlp_hidden; }
};

/// Preprocessing knobs.
struct IngestConfig {
    char delimiter = '\t';
    double max_malformed_frac = 0.01;
    int64_t threshold_secs = 3600;
    size_t min_len = 2;
    size_t max_len = 20;
    int64_t min_item_freq = 10;
    Proportions proportions;
};

struct RunConfig {
    TrainConfig train;
    IngestConfig ingest;
};

inline void validate(const TrainConfig& c) {
    if (c.dim == 0) throw ConfigError("dim must be positive");
    if (!(c.lr > 0.0)) throw ConfigError("lr must be positive");
    if (c.top_k == 0) throw ConfigError("top_k must be positive");
    if (c.window < 1 || c.window > 5)
        throw ConfigError("window must be in [1,5] (long sessions start at length 5)");
    if (c.history_max == 0) throw ConfigError("history_max must be positive");
}

inline void validate(const Proportions& p) {
    auto in01 = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!in01(p.train_hi) || !in01(p.val_lo) || !in01(p.val_hi) || !in01(p.test_lo))
        throw ConfigError("split proportions must lie in [0,1]");
    if (p.val_lo > p.val_hi) throw ConfigError("val_lo must not exceed val_hi");
    if (p.val_hi > p.train_hi)
        throw ConfigError("validation slice must end inside the training slice");
    if (p.test_lo < p.train_hi)
        throw ConfigError("test slice must start at or after the training slice end");
}

inline void validate(const IngestConfig& c) {
    if (c.min_len < 1) throw ConfigError("min_len must be at least 1");
    if (c.max_len < c.min_len) throw ConfigError("max_len must be >= min_len");
    if (c.threshold_secs < 0) throw ConfigError("threshold_secs must be non-negative");
    if (c.max_malformed_frac < 0.0 || c.max_malformed_frac > 1.0)
        throw ConfigError("max_malformed_frac must lie in [0,1]");
    validate(c.proportions);
}

inline void validate(const RunConfig& c) {
    validate(c.train);
    validate(c.ingest);
}

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

template <typename T>
T parse_num(const std::string& v, const std::string& key) {
    std::istringstream in(v);
    T out{};
    in >> out;
    if (in.fail() || !in.eof())
        throw ConfigError("key '" + key + "': cannot parse '" + v + "'");
    return out;
}

}  // namespace detail

/// Apply one key=value pair. Unknown keys are rejected.
inline void apply_config_entry(RunConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_num;
    auto& t = c.train;
    auto& g = c.ingest;
    if (key == "dim") t.dim = parse_num<size_t>(value, key);
    else if (key == "mlp_hidden") t.mlp_hidden = parse_num<size_t>(value, key);
    else if (key == "epochs") t.epochs = parse_num<size_t>(value, key);
    else if (key == "pretrain_epochs") t.pretrain_epochs = parse_num<size_t>(value, key);
    else if (key == "lr") t.lr = parse_num<double>(value, key);
    else if (key == "top_k") t.top_k = parse_num<size_t>(value, key);
    else if (key == "sample_n") t.sample_n = parse_num<size_t>(value, key);
    else if (key == "sim_users") t.sim_users = parse_num<size_t>(value, key);
    else if (key == "window") t.window = parse_num<int32_t>(value, key);
    else if (key == "history_max") t.history_max = parse_num<size_t>(value, key);
    else if (key == "seed") t.seed = parse_num<uint64_t>(value, key);
    else if (key == "no_long_term") t.no_long_term = parse_bool(value, key);
    else if (key == "use_all_candidates") t.use_all_candidates = parse_bool(value, key);
    else if (key == "no_sampled_candidates") t.no_sampled_candidates = parse_bool(value, key);
    else if (key == "last_state_readout") t.last_state_readout = parse_bool(value, key);
    else if (key == "delimiter") {
        if (value == "tab" || value == "\\t") g.delimiter = '\t';
        else if (value.size() == 1) g.delimiter = value[0];
        else throw ConfigError("key 'delimiter': expected one character or 'tab'");
    }
    else if (key == "max_malformed_frac") g.max_malformed_frac = parse_num<double>(value, key);
    else if (key == "threshold_secs") g.threshold_secs = parse_num<int64_t>(value, key);
    else if (key == "min_len") g.min_len = parse_num<size_t>(value, key);
    else if (key == "max_len") g.max_len = parse_num<size_t>(value, key);
    else if (key == "min_item_freq") g.min_item_freq = parse_num<int64_t>(value, key);
    else if (key == "train_hi") g.proportions.train_hi = parse_num<double>(value, key);
    else if (key == "val_lo") g.proportions.val_lo = parse_num<double>(value, key);
    else if (key == "val_hi") g.proportions.val_hi = parse_num<double>(value, key);
    else if (key == "test_lo") g.proportions.test_lo = parse_num<double>(value, key);
    else throw ConfigError("unknown config key '" + key + "'");
}

/// Flat key=value config file. '#' starts a comment; blank lines are ignored.
inline RunConfig load_config(std::istream& in, RunConfig base = {}) {
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        auto trim = [](std::string s) {
            auto a = s.find_first_not_of(" \t");
            auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        apply_config_entry(base, key, value);
    }
    validate(base);
    return base;
}

inline RunConfig load_config_file(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    return load_config(in, std::move(base));
}

/// Serialize the model/training half of the configuration.
inline std::string format_config(const TrainConfig& t) {
    std::ostringstream out;
    out.precision(17);
    auto b = [](bool v) { return v ? "true" : "false"; };
    out << "dim = " << t.dim << "\n"
        << "mlp_hidden = " << t.mlp_hidden << "\n"
        << "epochs = " << t.epochs << "\n"
        << "pretrain_epochs = " << t.pretrain_epochs << "\n"
        << "lr = " << t.lr << "\n"
        << "top_k = " << t.top_k << "\n"
        << "sample_n = " << t.sample_n << "\n"
        << "sim_users = " << t.sim_users << "\n"
        << "window = " << t.window << "\n"
        << "history_max = " << t.history_max << "\n"
        << "seed = " << t.seed << "\n"
        << "no_long_term = " << b(t.no_long_term) << "\n"
        << "use_all_candidates = " << b(t.use_all_candidates) << "\n"
        << "no_sampled_candidates = " << b(t.no_sampled_candidates) << "\n"
        << "last_state_readout = " << b(t.last_state_readout) << "\n";
    return out.str();
}

/// Serialize the full effective configuration; load_config on the result reproduces it.
inline std::string format_config(const RunConfig& c) {
    std::ostringstream out;
    out.precision(17);
    const auto& g = c.ingest;
    out << format_config(c.train)
        << "delimiter = " << (g.delimiter == '\t' ? std::string("tab") : std::string(1, g.delimiter)) << "\n"
        << "max_malformed_frac = " << g.max_malformed_frac << "\n"
        << "threshold_secs = " << g.threshold_secs << "\n"
        << "min_len = " << g.min_len << "\n"
        << "max_len = " << g.max_len << "\n"
        << "min_item_freq = " << g.min_item_freq << "\n"
        << "train_hi = " << g.proportions.train_hi << "\n"
        << "val_lo = " << g.proportions.val_lo << "\n"
        << "val_hi = " << g.proportions.val_hi << "\n"
        << "test_lo = " << g.proportions.test_lo << "\n";
    return out.str();
}

inline void save_config_file(const RunConfig& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config file: " + path);
    out << format_config(c);
}

}  // namespace sessrec
