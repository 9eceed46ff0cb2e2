#include "panotok/rotary.hpp"

#include <cmath>
#include <string>

#include "panotok/errors.hpp"

namespace panotok {

std::vector<double> theta_vanilla(int d_half) {
    if (d_half < 1) throw ConfigError("rotary: d_half must be >= 1");
    const double d = 2.0 * d_half;
    std::vector<double> out(std::size_t(d_half), 0.0);
    for (int i = 1; i <= d_half; ++i) {
        out[std::size_t(i - 1)] = std::pow(10000.0, -2.0 * double(i - 1) / d);
    }
    return out;
}

std::vector<double> theta_sphere(Axis axis, int d_half, int extent) {
    if (d_half < 1) throw ConfigError("rotary: d_half must be >= 1");
    if (extent < 1) throw ConfigError("rotary: axis extent must be >= 1");
    const double d = 2.0 * d_half;
    const double turn = (axis == Axis::x) ? 2.0 * M_PI : M_PI;
    std::vector<double> out(std::size_t(d_half), 0.0);
    for (int i = 1; i <= d_half; ++i) {
        out[std::size_t(i - 1)] = -2.0 * double(i - 1) * turn / (d * double(extent));
    }
    return out;
}

RotaryParams RotaryParams::make(int head_dim, RotaryVariant variant, int width, int height) {
    if (head_dim < 4 || head_dim % 4 != 0) {
        throw ConfigError("rotary: head_dim must be a positive multiple of 4, got " +
                          std::to_string(head_dim));
    }
    RotaryParams p;
    p.head_dim = head_dim;
    p.variant = variant;
    p.width = width;
    p.height = height;
    const int d_half = head_dim / 4;
    if (variant == RotaryVariant::vanilla2d) {
        p.theta_x = theta_vanilla(d_half);
        p.theta_y = theta_vanilla(d_half);
    } else {
        p.theta_x = theta_sphere(Axis::x, d_half, width);
        p.theta_y = theta_sphere(Axis::y, d_half, height);
        // Sub-full-turn bounds hold by construction; assert them anyway since
        // they are the property the sphere tables exist for.
        for (int i = 0; i < d_half; ++i) {
            if (!(std::abs(double(width) * p.theta_x[std::size_t(i)]) < 2.0 * M_PI) ||
                !(std::abs(double(height) * p.theta_y[std::size_t(i)]) < M_PI)) {
                throw NumericError("rotary: sphere frequency bound violated");
            }
        }
    }
    return p;
}

void rotate_pairs(std::span<double> vec, std::span<const double> angles, double position) {
    if (vec.size() != angles.size() * 2) throw ConfigError("rotary: pair/angle size mismatch");
    for (std::size_t i = 0; i < angles.size(); ++i) {
        const double a = position * angles[i];
        const double c = std::cos(a), s = std::sin(a);
        const double v0 = vec[2 * i], v1 = vec[2 * i + 1];
        vec[2 * i] = c * v0 - s * v1;
        vec[2 * i + 1] = s * v0 + c * v1;
    }
}

std::vector<double> rotate_2d(std::span<const double> vec, TokenCoord coord,
                              const RotaryParams& params) {
    if (int(vec.size()) != params.head_dim) throw ConfigError("rotary: vector dimension mismatch");
    std::vector<double> out(vec.begin(), vec.end());
    const std::size_t half = std::size_t(params.head_dim) / 2;
    rotate_pairs(std::span<double>(out.data(), half), params.theta_x, double(coord.x));
    rotate_pairs(std::span<double>(out.data() + half, half), params.theta_y, double(coord.y));
    return out;
}

double sre_logit(std::span<const double> q, std::span<const double> k, TokenCoord cq,
                 TokenCoord ck, const RotaryParams& params) {
    const std::vector<double> rq = rotate_2d(q, cq, params);
    const std::vector<double> rk = rotate_2d(k, ck, params);
    double dot = 0.0;
    for (std::size_t i = 0; i < rq.size(); ++i) dot += rq[i] * rk[i];
    return dot;
}

}  // namespace panotok
