// Test-side oracles, independent of the library implementations they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace oracles {

// Exhaustive k-partition search: minimal within-cluster SSE over every
// assignment of n points (row-major, dims wide) to exactly j non-empty
// clusters. Feasible for n <= 8, j <= 3.
inline double brute_force_min_sse(const std::vector<double>& points, std::size_t dims,
                                  int j) {
    const std::size_t n = points.size() / dims;
    std::vector<int> assign(n, 0);
    double best = std::numeric_limits<double>::infinity();
    const auto evaluate = [&]() {
        std::vector<double> centroid(static_cast<std::size_t>(j) * dims, 0.0);
        std::vector<int> count(j, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++count[assign[i]];
            for (std::size_t d = 0; d < dims; ++d) {
                centroid[assign[i] * dims + d] += points[i * dims + d];
            }
        }
        for (int c = 0; c < j; ++c) {
            if (count[c] == 0) return; // require all clusters used
        }
        for (int c = 0; c < j; ++c) {
            for (std::size_t d = 0; d < dims; ++d) {
                centroid[c * dims + d] /= count[c];
            }
        }
        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t d = 0; d < dims; ++d) {
                const double diff = points[i * dims + d] - centroid[assign[i] * dims + d];
                sse += diff * diff;
            }
        }
        best = std::min(best, sse);
    };
    // odometer over j^n assignments
    for (;;) {
        evaluate();
        std::size_t pos = 0;
        while (pos < n && ++assign[pos] == j) {
            assign[pos] = 0;
            ++pos;
        }
        if (pos == n) break;
    }
    return best;
}

// Central finite differences of f at x, one coordinate at a time.
template <class F>
std::vector<double> finite_difference_grad(F&& f, std::vector<double> x, double h = 1e-6) {
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

// Spearman rank correlation with average ranks for ties.
inline std::vector<double> ranks_of(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t p = i; p <= j; ++p) ranks[order[p]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double spearman_rho(std::span<const double> xs, std::span<const double> ys) {
    const std::vector<double> rx = ranks_of(xs);
    const std::vector<double> ry = ranks_of(ys);
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        cov += (rx[i] - mx) * (ry[i] - my);
        vx += (rx[i] - mx) * (rx[i] - mx);
        vy += (ry[i] - my) * (ry[i] - my);
    }
    return cov / std::sqrt(vx * vy);
}

// Pearson chi-square statistic of observed counts against expected
// proportions.
inline double chi2_statistic(std::span<const std::int64_t> observed,
                             std::span<const double> expected_probs) {
    std::int64_t total = 0;
    for (const std::int64_t o : observed) total += o;
    double stat = 0.0;
    for (std::size_t c = 0; c < observed.size(); ++c) {
        const double expected = expected_probs[c] * static_cast<double>(total);
        if (expected <= 0.0) continue;
        const double diff = static_cast<double>(observed[c]) - expected;
        stat += diff * diff / expected;
    }
    return stat;
}

// 0.99 quantiles of the chi-square distribution for the dofs used in tests.
inline double chi2_q99(int dof) {
    switch (dof) {
    case 1: return 6.6348966010212145;
    case 2: return 9.21034037197618;
    case 3: return 11.344866730144373;
    case 9: return 21.665994333461924;
    default: return -1.0;
    }
}

} // namespace oracles
