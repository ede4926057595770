#pragma once

#include "fairalloc/fairalloc.hpp"

#include <cstdint>
#include <vector>

namespace fairalloc::testing {

inline RelevanceMatrix matrix_of(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return RelevanceMatrix(std::move(m));
}

inline Allocation allocation_of(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return Allocation(std::move(m));
}

/// Uniform relevance in [0,1), groups assigned round robin over `groups` labels.
inline Instance random_instance(std::uint64_t seed, std::size_t m, std::size_t n, std::size_t groups = 1,
                                bool with_values = false) {
    rng::Stream s(rng::substream(seed, std::uint64_t{0x7465737473}));
    Matrix rho(m, n);
    for (double& v : rho.flat()) v = s.uniform();
    Instance inst;
    inst.rho = RelevanceMatrix(std::move(rho));
    std::vector<int> labels(m);
    for (std::size_t i = 0; i < m; ++i) labels[i] = static_cast<int>(i % groups);
    inst.groups = GroupPartition(labels);
    if (with_values) {
        std::vector<double> v(n);
        for (double& x : v) x = 0.5 + s.uniform();
        inst.values = ProducerValues(std::move(v));
    }
    return inst;
}

/// Random binary allocation with row sums exactly k.
inline Allocation random_k_allocation(std::uint64_t seed, std::size_t m, std::size_t n, int k) {
    Allocation a(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        const auto p = rng::permutation(n, rng::substream(seed, i));
        for (int t = 0; t < k; ++t) a.set(i, p[static_cast<std::size_t>(t)], 1.0);
    }
    return a;
}

inline double max_fractionality(const Matrix& w) {
    double worst = 0.0;
    for (double v : w.flat()) worst = std::max(worst, std::abs(v - std::round(v)));
    return worst;
}

} // namespace fairalloc::testing
