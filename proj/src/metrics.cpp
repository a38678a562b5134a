#include "ctsat/metrics.hpp"

#include <cmath>

#include "ctsat/error.hpp"

namespace ctsat {

IndexReport performance_indexes(const std::vector<WaveformPair>& pairs, bool post_fault_only) {
    if (pairs.empty()) throw InputError("no waveform pairs to evaluate");
    IndexReport r;
    r.n_samples = pairs.size();
    r.pairs.resize(pairs.size());
    std::vector<std::string> errors(pairs.size());
    const long long n = static_cast<long long>(pairs.size());

#pragma omp parallel for schedule(static)
    for (long long i = 0; i < n; ++i) {
        const auto& p = pairs[static_cast<std::size_t>(i)];
        auto& out = r.pairs[static_cast<std::size_t>(i)];
        out.id = p.id;
        if (p.primary.size() != p.secondary.size()) {
            errors[static_cast<std::size_t>(i)] = "pair '" + p.id + "': primary and secondary lengths differ";
            continue;
        }
        const std::size_t start = post_fault_only ? p.onset_index : 0;
        double ninf = 0.0, n2 = 0.0, dinf = 0.0, d2 = 0.0;
        for (std::size_t k = start; k < p.primary.size(); ++k) {
            const double a = p.primary[k];
            const double e = a - p.secondary[k];
            ninf = std::max(ninf, std::abs(a));
            dinf = std::max(dinf, std::abs(e));
            n2 += a * a;
            d2 += e * e;
        }
        if (!(ninf > 0.0)) {
            errors[static_cast<std::size_t>(i)] = "pair '" + p.id + "': primary has zero norm";
            continue;
        }
        out.inf_ratio = dinf / ninf;
        out.l2_ratio = std::sqrt(d2 / n2);
    }
    for (const auto& e : errors)
        if (!e.empty()) throw InputError(e);

    double best_inf = -1.0, best_l2 = -1.0;
    for (const auto& p : r.pairs) {
        r.e2 += p.inf_ratio;
        r.e4 += p.l2_ratio;
        if (p.inf_ratio > best_inf) {
            best_inf = p.inf_ratio;
            r.worst_case_id = p.id;
        }
        if (p.l2_ratio > best_l2) {
            best_l2 = p.l2_ratio;
            r.worst_case_l2_id = p.id;
        }
    }
    r.e1 = best_inf;
    r.e3 = best_l2;
    r.e2 /= static_cast<double>(r.n_samples);
    r.e4 /= static_cast<double>(r.n_samples);
    // the mean can round a hair above the max when every ratio is equal
    r.e2 = std::min(r.e2, r.e1);
    r.e4 = std::min(r.e4, r.e3);
    return r;
}

nlohmann::json to_json(const IndexReport& r) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : r.pairs) pairs.push_back({{"id", p.id}, {"inf_ratio", p.inf_ratio}, {"l2_ratio", p.l2_ratio}});
    return {{"e1", r.e1},
            {"e2", r.e2},
            {"e3", r.e3},
            {"e4", r.e4},
            {"n_samples", r.n_samples},
            {"worst_case_id", r.worst_case_id},
            {"worst_case_l2_id", r.worst_case_l2_id},
            {"pairs", pairs}};
}

}  // namespace ctsat
