#pragma once

#include "finepseudo/seqcore.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace fp::oracle {

// Sum of costs of every monotone path from (0, 0) to (T_u - 1, T_v - 1)
// using down, right and diagonal moves.
inline std::vector<double> all_path_costs(const CostMatrix& c) {
    std::vector<double> out;
    const Index tu = c.rows(), tv = c.cols();
    std::function<void(Index, Index, double)> walk = [&](Index i, Index j, double acc) {
        acc += c(i, j);
        if (i == tu - 1 && j == tv - 1) {
            out.push_back(acc);
            return;
        }
        if (i + 1 < tu) walk(i + 1, j, acc);
        if (j + 1 < tv) walk(i, j + 1, acc);
        if (i + 1 < tu && j + 1 < tv) walk(i + 1, j + 1, acc);
    };
    walk(0, 0, 0.0);
    return out;
}

// -gamma * log(sum over paths of exp(-cost / gamma)).
inline double softdtw_by_enumeration(const CostMatrix& c, double gamma) {
    const auto costs = all_path_costs(c);
    const double lo = *std::min_element(costs.begin(), costs.end());
    long double s = 0.0L;
    for (double v : costs) s += std::exp(-static_cast<long double>(v - lo) / gamma);
    return lo - gamma * static_cast<double>(std::log(s));
}

inline double hard_dtw_by_enumeration(const CostMatrix& c) {
    const auto costs = all_path_costs(c);
    return *std::min_element(costs.begin(), costs.end());
}

inline std::size_t path_count(Index tu, Index tv) {
    return all_path_costs(CostMatrix::Zero(tu, tv)).size();
}

// Five-point central difference of a scalar function of one variable.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
    return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h);
}

}  // namespace fp::oracle
