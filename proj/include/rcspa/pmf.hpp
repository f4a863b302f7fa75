#pragma once

#include <cstdint>
#include <vector>

namespace rcspa {

/// Probability mass function on a contiguous block of integers
/// {offset, offset+1, ..., offset+size-1}. `leftover` bounds the mass that was
/// discarded by truncation (zero for an exact table).
struct PmfTable {
    std::int64_t offset = 0;
    std::vector<double> probs;
    double leftover = 0.0;

    std::int64_t min_support() const noexcept { return offset; }
    std::int64_t max_support() const noexcept {
        return offset + static_cast<std::int64_t>(probs.size()) - 1;
    }
    /// P(X = k); zero outside the stored range.
    double at(std::int64_t k) const noexcept;
    double total() const noexcept;
    double mean() const noexcept;
    double variance() const noexcept;

    static PmfTable point_mass(std::int64_t k) { return {k, {1.0}, 0.0}; }
};

/// Distribution of the sum of two independent lattice variables.
PmfTable convolve(const PmfTable& a, const PmfTable& b);

/// Distribution of the sum of `count` iid copies, by binary powering.
PmfTable convolve_power(const PmfTable& base, std::int64_t count);

/// Drop negligible tail entries, moving their mass into `leftover`,
/// as long as the total dropped stays below `budget`.
void trim_tails(PmfTable& table, double budget);

}  // namespace rcspa
