#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "attnalign/matrix.hpp"

namespace attnalign {

inline constexpr int kNumBuckets = 32;

// One head's 32 relative-position bias parameters.
struct BucketTable {
    std::array<double, kNumBuckets> values{};
    int head_id = 0;

    // Throws ConfigError if any entry is not finite.
    void validate() const;
};

// Bucket index for query position m and key position n, piecewise over the
// offset m-n: near offsets (|m-n| < 8) map one-to-one, far offsets map
// logarithmically and clamp at the end of their half of the table.
//
//   0 <= m-n < 8   ->  m-n                                      (0..7)
//   -8 < m-n < 0   ->  n-m+16                                   (17..23)
//   m-n >= 8       ->  min(15, 8 + floor(log((m-n)/8)/log(16)*8))
//   m-n <= -8      ->  min(31, 24 + floor(log((n-m)/8)/log(16)*8))
//
// Positive offsets land in 0..15 and negative ones in 17..31, so index 16 is
// never produced; the table's slot 16 is dead weight under this bucketing.
int bucket_index(std::int64_t m, std::int64_t n);

// length x length matrix with entries[m][n] = table.values[bucket_index(m,n)].
// Throws ShapeError for length == 0.
Matrix build_bias_matrix(const BucketTable& table, std::size_t length);

// Row query_pos of the bias matrix, without materializing it.
// Throws DomainError if query_pos >= length.
std::vector<double> bias_profile(const BucketTable& table, std::size_t query_pos,
                                 std::size_t length);

// Bias value per offset m-n in [-(length-1), length-1], indexed by
// offset + length - 1. bucket_index depends only on m-n, so this vector
// carries the full bias matrix in O(length) memory; the encoder reads it
// instead of the dense form.
std::vector<double> bias_by_offset(const BucketTable& table, std::size_t length);

} // namespace attnalign
