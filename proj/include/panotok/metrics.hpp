#pragma once

#include <optional>
#include <string>
#include <vector>

#include "panotok/codec.hpp"
#include "panotok/image.hpp"

namespace panotok {

// Gaussian fit of a feature cloud. Covariance is the unbiased sample
// covariance regularized with +1e-6*I so downstream square roots are
// well conditioned.
struct GaussianStats {
    std::vector<double> mean;                 // k
    std::vector<std::vector<double>> cov;     // k x k, symmetric
    int count = 0;

    static GaussianStats from_samples(const std::vector<std::vector<double>>& samples);
};

// Frechet distance ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2(Sa Sb)^(1/2)); the
// cross term is evaluated through the symmetric product Sa^(1/2) Sb Sa^(1/2)
// with eigenvalues clamped at zero.
double frechet(const GaussianStats& a, const GaussianStats& b);

struct SphericalFid {
    double top = 0.0;
    double middle = 0.0;
    double bottom = 0.0;
    double mean = 0.0;
};

// FID per latitude strip (the three patch rows: top, middle, bottom) plus
// their arithmetic mean. Requires rows == 3 and more samples than feature
// dimensions on each side.
SphericalFid spherical_fid(const std::vector<TokenGrid>& real, const std::vector<TokenGrid>& fake,
                           const GridSpec& spec, const Codebook& cb, const FeatureExtractor& feats);

// Same partition, computed directly from decoded images.
SphericalFid spherical_fid_images(const std::vector<PanoImage>& real,
                                  const std::vector<PanoImage>& fake,
                                  const FeatureExtractor& feats);

// Whole-image FID between two image sets.
double image_fid(const std::vector<PanoImage>& real, const std::vector<PanoImage>& fake,
                 const FeatureExtractor& feats);

// Per pixel-row seam gradient: max over channels of |first column - last column|.
std::vector<double> horizontal_gradient(const PanoImage& img);

// Left-right continuity score: KL(N_pred || N_gt) between 1D normal fits
// (sample mean, population standard deviation floored at 1e-6) of the pooled
// seam gradients of each set.
double lrcs(const std::vector<PanoImage>& pred, const std::vector<PanoImage>& gt);

// Closed-form KL between two 1D normals, KL(N(mu_p, sigma_p) || N(mu_g, sigma_g)).
double normal_kl(double mu_p, double sigma_p, double mu_g, double sigma_g);

// Mean SSIM over non-overlapping 8x8 windows (K1=0.01, K2=0.03, L=255).
double ssim(const PanoImage& a, const PanoImage& b);

// 10*log10(255^2 / MSE); nullopt marks identical images (infinite PSNR).
std::optional<double> psnr(const PanoImage& a, const PanoImage& b);

struct MetricsReport {
    std::optional<double> fid;
    std::optional<double> sfid_top, sfid_middle, sfid_bottom, sfid_mean;
    std::optional<double> lrcs;
    std::optional<double> ssim;          // unset when sets are unpaired
    std::optional<double> psnr;          // unset when unpaired
    bool psnr_identical = false;         // distinguished "identical" PSNR

    // Fixed-schema JSON: keys fid, sfid_top, sfid_middle, sfid_bottom,
    // sfid_mean, lrcs, ssim, psnr are always present.
    std::string to_json() const;
};

}  // namespace panotok
