#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace qag {

// Seeded permutation of [0, n). Built only on std::mt19937_64 (whose output
// sequence is fixed by the standard) so results are identical across
// standard libraries.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

// k distinct indices drawn uniformly without replacement from [0, n), in
// ascending order. k >= n returns every index.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                    std::uint64_t seed);

}  // namespace qag
