#include "panotok/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "panotok/errors.hpp"

namespace panotok {

int mask_count(double r, int n) {
    if (n < 1) throw ConfigError("schedule: N must be >= 1");
    if (r < 0.0 || r >= 1.0) throw ConfigError("schedule: r must lie in [0,1)");
    const int raw = int(std::ceil(std::cos(r * M_PI / 2.0) * double(n)));
    return std::clamp(raw, 1, n);
}

int keep_count(int t, int total_steps, int n) {
    if (total_steps < 1) throw ConfigError("schedule: T must be >= 1");
    if (t < 0 || t > total_steps) throw ConfigError("schedule: t must lie in [0,T]");
    // pi*t/(2T) can land a hair past pi/2 in floating point, pushing cos
    // negative and the ceiling to n+1; the result is clamped to [0, n].
    const double frac = 1.0 - std::cos(M_PI * double(t) / (2.0 * double(total_steps)));
    return std::clamp(int(std::ceil(frac * double(n))), 0, n);
}

std::vector<bool> sample_mask(Rng& rng, int n, int count) {
    if (count < 1 || count > n) {
        throw ConfigError("schedule: mask count " + std::to_string(count) +
                          " out of range for N=" + std::to_string(n));
    }
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first `count` slots end up a uniform sample.
    for (int k = 0; k < count; ++k) {
        const int pick = k + int(rng.uniform_u64(std::uint64_t(n - k)));
        std::swap(idx[k], idx[pick]);
    }
    std::vector<bool> mask(n, false);
    for (int k = 0; k < count; ++k) mask[idx[k]] = true;
    return mask;
}

std::vector<bool> select_keeps(const std::vector<double>& confidence,
                               const std::vector<bool>& currently_kept, int target) {
    const int n = int(confidence.size());
    if (int(currently_kept.size()) != n) throw ConfigError("schedule: bitmap size mismatch");
    if (target > n) throw ConfigError("schedule: keep target exceeds N");
    int kept = int(std::count(currently_kept.begin(), currently_kept.end(), true));
    if (target < kept) throw ConfigError("schedule: keep target below current kept count");

    std::vector<int> masked;
    masked.reserve(n - kept);
    for (int i = 0; i < n; ++i) {
        if (!currently_kept[i]) masked.push_back(i);
    }
    std::sort(masked.begin(), masked.end(), [&](int a, int b) {
        if (confidence[a] != confidence[b]) return confidence[a] > confidence[b];
        return a < b;
    });

    std::vector<bool> out = currently_kept;
    for (int k = 0; k < target - kept; ++k) out[masked[k]] = true;
    return out;
}

}  // namespace panotok
