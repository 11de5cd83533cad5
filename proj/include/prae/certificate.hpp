#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include <json.hpp>

#include "prae/core.hpp"
#include "prae/estimate.hpp"

namespace prae {

struct CertificateRow {
    double gamma;
    double mean_estimate;
    double mean_empirical_re;
    long n;
};

struct CertificateTable {
    std::vector<CertificateRow> rows;
    double log_re_slope = 0.0;  // regression slope of log RE on gamma

    nlohmann::json to_json() const {
        nlohmann::json j;
        for (const auto& r : rows)
            j["rows"].push_back({{"gamma", r.gamma},
                                 {"mean_estimate", r.mean_estimate},
                                 {"mean_re", r.mean_empirical_re},
                                 {"n", r.n}});
        j["log_re_slope"] = log_re_slope;
        return j;
    }
};

// Sweeps rarity and reports how the empirical relative error grows; the
// log-RE slope separates polynomial growth (certified estimators) from
// exponential growth (the Theorem-2 trap, where even this probe can be
// fooled unless compared against an analytic oracle).
inline CertificateTable certificate_probe(
    const std::function<Estimate(double, std::uint64_t)>& run,
    const std::vector<double>& gammas, int replications, std::uint64_t seed0) {
    for (std::size_t i = 1; i < gammas.size(); ++i)
        if (gammas[i] <= gammas[i - 1])
            throw PraeError("certificate_probe: gamma grid must increase");
    CertificateTable table;
    for (double gamma : gammas) {
        double est_sum = 0.0, re_sum = 0.0;
        long n = 0;
        for (int r = 0; r < replications; ++r) {
            Estimate e = run(gamma, seed0 + static_cast<std::uint64_t>(r));
            est_sum += e.value;
            re_sum += std::isfinite(e.empirical_re) ? e.empirical_re : 0.0;
            n = e.n_used;
        }
        table.rows.push_back({gamma, est_sum / replications,
                              re_sum / replications, n});
    }
    // Least squares of log RE against gamma.
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    long m = 0;
    for (const auto& r : table.rows) {
        if (r.mean_empirical_re <= 0.0) continue;
        const double y = std::log(r.mean_empirical_re);
        sx += r.gamma;
        sy += y;
        sxx += r.gamma * r.gamma;
        sxy += r.gamma * y;
        ++m;
    }
    if (m >= 2) {
        const double denom = m * sxx - sx * sx;
        if (std::abs(denom) > 1e-12)
            table.log_re_slope = (m * sxy - sx * sy) / denom;
    }
    return table;
}

}  // namespace prae
