#include "panotok/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>

#include <json.hpp>

#include "panotok/errors.hpp"

namespace panotok {

namespace {

Eigen::MatrixXd to_eigen(const std::vector<std::vector<double>>& m) {
    Eigen::MatrixXd out(m.size(), m.empty() ? 0 : m[0].size());
    for (std::size_t r = 0; r < m.size(); ++r) {
        for (std::size_t c = 0; c < m[r].size(); ++c) out(Eigen::Index(r), Eigen::Index(c)) = m[r][c];
    }
    return out;
}

void check_finite(const GaussianStats& s, const char* which) {
    for (double v : s.mean) {
        if (!std::isfinite(v)) throw NumericError(std::string("metrics: non-finite mean in ") + which);
    }
    for (const auto& row : s.cov) {
        for (double v : row) {
            if (!std::isfinite(v)) throw NumericError(std::string("metrics: non-finite covariance in ") + which);
        }
    }
}

}  // namespace

GaussianStats GaussianStats::from_samples(const std::vector<std::vector<double>>& samples) {
    if (samples.empty()) throw DataError("metrics: empty sample set");
    const std::size_t k = samples[0].size();
    GaussianStats s;
    s.count = int(samples.size());
    s.mean.assign(k, 0.0);
    for (const auto& x : samples) {
        if (x.size() != k) throw DataError("metrics: inconsistent feature dimensions");
        for (std::size_t i = 0; i < k; ++i) s.mean[i] += x[i];
    }
    for (auto& m : s.mean) m /= double(samples.size());

    s.cov.assign(k, std::vector<double>(k, 0.0));
    const double denom = samples.size() > 1 ? double(samples.size() - 1) : 1.0;
    for (const auto& x : samples) {
        for (std::size_t i = 0; i < k; ++i) {
            const double di = x[i] - s.mean[i];
            for (std::size_t j = i; j < k; ++j) s.cov[i][j] += di * (x[j] - s.mean[j]);
        }
    }
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i; j < k; ++j) {
            const double v = s.cov[i][j] / denom + (i == j ? 1e-6 : 0.0);
            s.cov[i][j] = v;
            s.cov[j][i] = v;
        }
    }
    return s;
}

double frechet(const GaussianStats& a, const GaussianStats& b) {
    if (a.mean.size() != b.mean.size()) throw DataError("metrics: feature dimension mismatch");
    check_finite(a, "first argument");
    check_finite(b, "second argument");

    double mean_term = 0.0;
    for (std::size_t i = 0; i < a.mean.size(); ++i) {
        const double d = a.mean[i] - b.mean[i];
        mean_term += d * d;
    }

    const Eigen::MatrixXd sa = to_eigen(a.cov);
    const Eigen::MatrixXd sb = to_eigen(b.cov);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esa(sa);
    if (esa.info() != Eigen::Success) throw NumericError("metrics: eigendecomposition failed");
    const Eigen::VectorXd clamped_a = esa.eigenvalues().cwiseMax(0.0);
    const Eigen::MatrixXd sqrt_a = esa.eigenvectors() * clamped_a.cwiseSqrt().asDiagonal() *
                                   esa.eigenvectors().transpose();

    // Tr((Sa Sb)^(1/2)) = sum of sqrt eigenvalues of Sa^(1/2) Sb Sa^(1/2).
    Eigen::MatrixXd inner = sqrt_a * sb * sqrt_a;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esi(inner);
    if (esi.info() != Eigen::Success) throw NumericError("metrics: eigendecomposition failed");
    const double cross = esi.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double value = mean_term + sa.trace() + sb.trace() - 2.0 * cross;
    if (!std::isfinite(value)) throw NumericError("metrics: non-finite Frechet distance");
    return value;
}

namespace {

double strip_fid(const std::vector<PanoImage>& real, const std::vector<PanoImage>& fake,
                 const FeatureExtractor& feats, int y0, int y1) {
    std::vector<std::vector<double>> fr, ff;
    fr.reserve(real.size());
    ff.reserve(fake.size());
    for (const auto& img : real) fr.push_back(feats.extract(crop(img, y0, y1, 0, img.width)));
    for (const auto& img : fake) ff.push_back(feats.extract(crop(img, y0, y1, 0, img.width)));
    return frechet(GaussianStats::from_samples(fr), GaussianStats::from_samples(ff));
}

void check_fid_counts(std::size_t real, std::size_t fake, int k) {
    if (int(real) <= k || int(fake) <= k) {
        throw DataError("metrics: FID needs more than " + std::to_string(k) +
                        " samples per set, got " + std::to_string(real) + " real / " +
                        std::to_string(fake) + " fake");
    }
}

}  // namespace

SphericalFid spherical_fid_images(const std::vector<PanoImage>& real,
                                  const std::vector<PanoImage>& fake,
                                  const FeatureExtractor& feats) {
    check_fid_counts(real.size(), fake.size(), feats.dim());
    if (real[0].height % 3 != 0) throw DataError("metrics: spherical FID expects 3 patch rows");
    const int strip = real[0].height / 3;
    SphericalFid out;
    out.top = strip_fid(real, fake, feats, 0, strip);
    out.middle = strip_fid(real, fake, feats, strip, 2 * strip);
    out.bottom = strip_fid(real, fake, feats, 2 * strip, 3 * strip);
    out.mean = (out.top + out.middle + out.bottom) / 3.0;
    return out;
}

SphericalFid spherical_fid(const std::vector<TokenGrid>& real, const std::vector<TokenGrid>& fake,
                           const GridSpec& spec, const Codebook& cb,
                           const FeatureExtractor& feats) {
    if (spec.rows != 3) throw DataError("metrics: spherical FID partition requires rows == 3");
    check_fid_counts(real.size(), fake.size(), feats.dim());
    std::vector<PanoImage> ri, fi;
    ri.reserve(real.size());
    fi.reserve(fake.size());
    for (const auto& g : real) ri.push_back(cb.decode(g));
    for (const auto& g : fake) fi.push_back(cb.decode(g));
    return spherical_fid_images(ri, fi, feats);
}

double image_fid(const std::vector<PanoImage>& real, const std::vector<PanoImage>& fake,
                 const FeatureExtractor& feats) {
    check_fid_counts(real.size(), fake.size(), feats.dim());
    std::vector<std::vector<double>> fr, ff;
    for (const auto& img : real) fr.push_back(feats.extract(img));
    for (const auto& img : fake) ff.push_back(feats.extract(img));
    return frechet(GaussianStats::from_samples(fr), GaussianStats::from_samples(ff));
}

std::vector<double> horizontal_gradient(const PanoImage& img) {
    if (img.width < 2) throw DataError("metrics: image too narrow for a seam gradient");
    std::vector<double> out(std::size_t(img.height));
    for (int y = 0; y < img.height; ++y) {
        double best = 0.0;
        for (int c = 0; c < img.channels; ++c) {
            best = std::max(best, std::abs(double(img.at(y, 0, c)) - double(img.at(y, img.width - 1, c))));
        }
        out[std::size_t(y)] = best;
    }
    return out;
}

double normal_kl(double mu_p, double sigma_p, double mu_g, double sigma_g) {
    const double dm = mu_p - mu_g;
    return std::log(sigma_g / sigma_p) +
           (sigma_p * sigma_p + dm * dm) / (2.0 * sigma_g * sigma_g) - 0.5;
}

namespace {

std::pair<double, double> fit_normal(const std::vector<double>& values) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= double(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= double(values.size());  // population variance
    return {mean, std::max(std::sqrt(var), 1e-6)};
}

}  // namespace

double lrcs(const std::vector<PanoImage>& pred, const std::vector<PanoImage>& gt) {
    if (pred.empty() || gt.empty()) throw DataError("metrics: LRCS needs nonempty sets");
    std::vector<double> gp, gg;
    for (const auto& img : pred) {
        const auto g = horizontal_gradient(img);
        gp.insert(gp.end(), g.begin(), g.end());
    }
    for (const auto& img : gt) {
        const auto g = horizontal_gradient(img);
        gg.insert(gg.end(), g.begin(), g.end());
    }
    const auto [mp, sp] = fit_normal(gp);
    const auto [mg, sg] = fit_normal(gg);
    return normal_kl(mp, sp, mg, sg);
}

double ssim(const PanoImage& a, const PanoImage& b) {
    if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
        throw DataError("metrics: SSIM dimension mismatch");
    }
    constexpr int kWin = 8;
    constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
    constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);
    const int wy = a.height / kWin, wx = a.width / kWin;
    if (wy == 0 || wx == 0) throw DataError("metrics: image smaller than the SSIM window");

    double total = 0.0;
    int windows = 0;
    for (int c = 0; c < a.channels; ++c) {
        for (int by = 0; by < wy; ++by) {
            for (int bx = 0; bx < wx; ++bx) {
                double ma = 0.0, mb = 0.0;
                for (int y = 0; y < kWin; ++y) {
                    for (int x = 0; x < kWin; ++x) {
                        ma += a.at(by * kWin + y, bx * kWin + x, c);
                        mb += b.at(by * kWin + y, bx * kWin + x, c);
                    }
                }
                const double n = double(kWin) * kWin;
                ma /= n;
                mb /= n;
                double va = 0.0, vb = 0.0, cov = 0.0;
                for (int y = 0; y < kWin; ++y) {
                    for (int x = 0; x < kWin; ++x) {
                        const double da = a.at(by * kWin + y, bx * kWin + x, c) - ma;
                        const double db = b.at(by * kWin + y, bx * kWin + x, c) - mb;
                        va += da * da;
                        vb += db * db;
                        cov += da * db;
                    }
                }
                va /= n;
                vb /= n;
                cov /= n;
                total += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
                         ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
                ++windows;
            }
        }
    }
    return total / double(windows);
}

std::optional<double> psnr(const PanoImage& a, const PanoImage& b) {
    if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
        throw DataError("metrics: PSNR dimension mismatch");
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = double(a.pixels[i]) - double(b.pixels[i]);
        mse += d * d;
    }
    mse /= double(a.pixels.size());
    if (mse == 0.0) return std::nullopt;  // identical
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    auto put = [&j](const char* key, const std::optional<double>& v) {
        if (v.has_value()) {
            j[key] = *v;
        } else {
            j[key] = nullptr;
        }
    };
    put("fid", fid);
    put("sfid_top", sfid_top);
    put("sfid_middle", sfid_middle);
    put("sfid_bottom", sfid_bottom);
    put("sfid_mean", sfid_mean);
    put("lrcs", lrcs);
    put("ssim", ssim);
    if (psnr_identical) {
        j["psnr"] = "identical";
    } else {
        put("psnr", psnr);
    }
    return j.dump(2);
}

}  // namespace panotok
