#pragma once

#include <cstdint>
#include <vector>

#include "panotok/rng.hpp"

namespace panotok {

// Masked visual token modeling schedules. `N` is the token count of one view
// patch, `r` the training mask ratio draw, `t`/`T` the decode step index and
// step budget.

// Training mask count: ceil(cos(r*pi/2) * N), clamped to [1, N] so every
// training pass supervises at least one position.
int mask_count(double r, int n);

// Decode keep count: ceil((1 - cos(pi*t / (2T))) * N). Nondecreasing in t,
// 0 at t=0 and N at t=T.
int keep_count(int t, int total_steps, int n);

// Exactly `count` of `n` positions set, uniform without replacement.
std::vector<bool> sample_mask(Rng& rng, int n, int count);

// Grows `currently_kept` to popcount == target by adding the highest
// confidence still-masked positions; ties break toward the lowest index.
std::vector<bool> select_keeps(const std::vector<double>& confidence,
                               const std::vector<bool>& currently_kept, int target);

}  // namespace panotok
