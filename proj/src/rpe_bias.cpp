#include "attnalign/rpe_bias.hpp"

#include <cmath>
#include <cstdint>

#include "attnalign/errors.hpp"

namespace attnalign {

void BucketTable::validate() const {
    for (double v : values)
        if (!std::isfinite(v))
            throw ConfigError("bucket table entry is not finite");
}

int bucket_index(std::int64_t m, std::int64_t n) {
    const std::int64_t d = m - n;
    if (d >= 0 && d < 8)
        return static_cast<int>(d);
    if (d > -8 && d < 0)
        return static_cast<int>(n - m + 16);

    // log-spaced tail; base cancels in the ratio, natural log used.
    static const double kLogRatio = std::log(128.0 / 8.0);
    const double dist = static_cast<double>(d >= 8 ? d : -d);
    const int step = static_cast<int>(std::floor(std::log(dist / 8.0) / kLogRatio * 8.0));
    if (d >= 8)
        return std::min(15, 8 + step);
    return std::min(31, 24 + step);
}

Matrix build_bias_matrix(const BucketTable& table, std::size_t length) {
    if (length == 0)
        throw ShapeError("bias matrix length must be >= 1");

    const std::vector<double> by_offset = bias_by_offset(table, length);
    Matrix bias(length, length);

    const std::int64_t rows = static_cast<std::int64_t>(length);
#pragma omp parallel for schedule(static)
    for (std::int64_t m = 0; m < rows; ++m) {
        double* row = bias.row(static_cast<std::size_t>(m));
        // entry (m,n) sits at offset m-n, i.e. by_offset[m-n+length-1]
        const double* base = by_offset.data() + (m + static_cast<std::int64_t>(length) - 1);
        for (std::size_t n = 0; n < length; ++n)
            row[n] = base[-static_cast<std::int64_t>(n)];
    }
    return bias;
}

std::vector<double> bias_profile(const BucketTable& table, std::size_t query_pos,
                                 std::size_t length) {
    if (query_pos >= length)
        throw DomainError("bias_profile: query position out of range");

    std::vector<double> profile(length);
    const std::int64_t m = static_cast<std::int64_t>(query_pos);
    for (std::size_t n = 0; n < length; ++n)
        profile[n] = table.values[static_cast<std::size_t>(
            bucket_index(m, static_cast<std::int64_t>(n)))];
    return profile;
}

std::vector<double> bias_by_offset(const BucketTable& table, std::size_t length) {
    if (length == 0)
        throw ShapeError("bias length must be >= 1");

    std::vector<double> by_offset(2 * length - 1);
    const std::int64_t lim = static_cast<std::int64_t>(length);
    for (std::int64_t d = -(lim - 1); d <= lim - 1; ++d) {
        const std::int64_t m = d >= 0 ? d : 0;
        const std::int64_t n = m - d;
        by_offset[static_cast<std::size_t>(d + lim - 1)] =
            table.values[static_cast<std::size_t>(bucket_index(m, n))];
    }
    return by_offset;
}

} // namespace attnalign
