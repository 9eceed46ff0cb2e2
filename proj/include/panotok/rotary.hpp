#pragma once

#include <span>
#include <vector>

#include "panotok/grid.hpp"

namespace panotok {

enum class RotaryVariant { vanilla2d, sphere };

// Frequency table for one axis: theta_i = 10000^(-2(i-1)/d), i in [1, d_half],
// with d = 2*d_half (the dimension of the subspace the table rotates).
std::vector<double> theta_vanilla(int d_half);

enum class Axis { x, y };

// Sphere frequencies: x-axis theta_i = -2(i-1)*2pi / (d*extent),
// y-axis theta_i = -2(i-1)*pi / (d*extent); d = 2*d_half. The x numerator's
// extra factor of two bounds every full-width rotation below one turn, so the
// ring's head and tail land close; the y half-turn bound keeps poles apart.
std::vector<double> theta_sphere(Axis axis, int d_half, int extent);

// Per-axis rotation frequencies for a head of dimension `head_dim`
// (divisible by 4: an x-half and a y-half of 2 pairs minimum each).
struct RotaryParams {
    int head_dim = 0;
    RotaryVariant variant = RotaryVariant::sphere;
    int width = 0;   // token count along x (sphere variant)
    int height = 0;  // token count along y (sphere variant)
    std::vector<double> theta_x;  // head_dim/4 entries
    std::vector<double> theta_y;  // head_dim/4 entries

    static RotaryParams make(int head_dim, RotaryVariant variant, int width, int height);
};

// Rotates consecutive pairs (v[2i], v[2i+1]) by angles[i] * position, in place.
void rotate_pairs(std::span<double> vec, std::span<const double> angles, double position);

// 2D rotary transform: first half of `vec` rotated pairwise by x*theta_x,
// second half by y*theta_y. Norm preserving.
std::vector<double> rotate_2d(std::span<const double> vec, TokenCoord coord,
                              const RotaryParams& params);

// Attention logit with rotary applied to both sides:
// <rotate_2d(q, cq), rotate_2d(k, ck)>. Depends only on the coordinate deltas.
double sre_logit(std::span<const double> q, std::span<const double> k, TokenCoord cq,
                 TokenCoord ck, const RotaryParams& params);

}  // namespace panotok
