#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "sessrec/common.hpp"
#include "sessrec/params.hpp"

namespace sessrec {

struct GradCheckReport {
    double max_rel_err = 0.0;
    size_t probes = 0;
    std::map<std::string, double> by_group;  // block-name prefix -> max rel err
    std::string worst_param;                 // block of the worst probe
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

inline std::string block_group(const std::string& block_name) {
    auto dot = block_name.find('.');
    return dot == std::string::npos ? block_name : block_name.substr(0, dot);
}

/// Central finite-difference check of analytic gradients.
///
/// The caller runs its backward pass first so the store's gradient slots
/// hold the analytic gradient of loss_fn at the current parameters; those
/// slots are snapshotted here and left untouched. loss_fn is re-evaluated
/// with single scalars displaced by +/- eps; it must be deterministic in
/// the parameters. probe_count == 0 probes every scalar.
template <typename LossFn>
GradCheckReport grad_check(LossFn&& loss_fn, ParameterStore& store, size_t probe_count = 0,
                           double eps = 1e-5, uint64_t seed = 0x9c0ffee) {
    const size_t total = store.scalar_count();
    std::vector<size_t> probes;
    if (probe_count == 0 || probe_count >= total) {
        probes.resize(total);
        for (size_t i = 0; i < total; ++i) probes[i] = i;
    } else {
        std::unordered_set<size_t> chosen;
        Rng rng = make_rng(mix_seed(seed, total, probe_count));
        while (chosen.size() < probe_count)
            chosen.insert(static_cast<size_t>(uniform_index(rng, total)));
        probes.assign(chosen.begin(), chosen.end());
        std::sort(probes.begin(), probes.end());
    }

    std::vector<double> analytic(probes.size());
    for (size_t k = 0; k < probes.size(); ++k) analytic[k] = store.grad_at(probes[k]);

    GradCheckReport report;
    report.probes = probes.size();
    for (size_t k = 0; k < probes.size(); ++k) {
        double& theta = store.param_at(probes[k]);
        const double saved = theta;
        theta = saved + eps;
        const double f_plus = loss_fn();
        theta = saved - eps;
        const double f_minus = loss_fn();
        theta = saved;
        const double numeric = (f_plus - f_minus) / (2.0 * eps);
        const double a = analytic[k];
        const double rel = std::fabs(a - numeric) / std::max(1e-8, std::fabs(a) + std::fabs(numeric));
        const std::string group = block_group(store.block_of(probes[k]));
        auto [it, inserted] = report.by_group.emplace(group, rel);
        if (!inserted) it->second = std::max(it->second, rel);
        if (rel >= report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst_param = store.block_of(probes[k]);
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    return report;
}

}  // namespace sessrec
