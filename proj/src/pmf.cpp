#include "rcspa/pmf.hpp"

#include "rcspa/error.hpp"

#include <numeric>

namespace rcspa {

double PmfTable::at(std::int64_t k) const noexcept {
    if (k < offset || k > max_support()) return 0.0;
    return probs[static_cast<std::size_t>(k - offset)];
}

double PmfTable::total() const noexcept {
    return std::accumulate(probs.begin(), probs.end(), 0.0);
}

double PmfTable::mean() const noexcept {
    double m = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i)
        m += probs[i] * static_cast<double>(offset + static_cast<std::int64_t>(i));
    return m;
}

double PmfTable::variance() const noexcept {
    const double m = mean();
    double v = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double d = static_cast<double>(offset + static_cast<std::int64_t>(i)) - m;
        v += probs[i] * d * d;
    }
    return v;
}

PmfTable convolve(const PmfTable& a, const PmfTable& b) {
    if (a.probs.empty() || b.probs.empty()) throw InvalidPmf("convolve: empty table");
    PmfTable r;
    r.offset = a.offset + b.offset;
    r.probs.assign(a.probs.size() + b.probs.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.probs.size(); ++i) {
        const double pa = a.probs[i];
        if (pa == 0.0) continue;
        for (std::size_t j = 0; j < b.probs.size(); ++j) r.probs[i + j] += pa * b.probs[j];
    }
    r.leftover = a.leftover + b.leftover;
    return r;
}

PmfTable convolve_power(const PmfTable& base, std::int64_t count) {
    if (count < 0) throw InvalidParameter("convolve_power: negative count");
    PmfTable result = PmfTable::point_mass(0);
    PmfTable square = base;
    while (count > 0) {
        if (count & 1) result = convolve(result, square);
        count >>= 1;
        if (count > 0) square = convolve(square, square);
    }
    return result;
}

void trim_tails(PmfTable& table, double budget) {
    double dropped = 0.0;
    std::size_t lo = 0, hi = table.probs.size();
    while (hi - lo > 1) {
        const double left = table.probs[lo], right = table.probs[hi - 1];
        if (left <= right && dropped + left <= budget) {
            dropped += left;
            ++lo;
        } else if (dropped + right <= budget) {
            dropped += right;
            --hi;
        } else if (dropped + left <= budget) {
            dropped += left;
            ++lo;
        } else {
            break;
        }
    }
    table.probs = std::vector<double>(table.probs.begin() + static_cast<std::ptrdiff_t>(lo),
                                      table.probs.begin() + static_cast<std::ptrdiff_t>(hi));
    table.offset += static_cast<std::int64_t>(lo);
    table.leftover += dropped;
}

}  // namespace rcspa
