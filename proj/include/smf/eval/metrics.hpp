#pragma once

#include <array>
#include <vector>

#include "smf/data/types.hpp"
#include "smf/model/dit.hpp"

namespace smf::eval {

inline constexpr int kSsimWindow = 7;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

// Mean SSIM over all fully-inside 7x7 uniform windows, per channel, then
// averaged over channels. Dynamic range 1.
double ssim(const data::Image& a, const data::Image& b);

inline constexpr int kFeaturePool = 4;  // 4 x 4 x 3 = 48 features
inline constexpr int kFeatureDim = kFeaturePool * kFeaturePool * 3;
using Feature = std::array<double, kFeatureDim>;

// Average pool to 4x4 per channel, flattened (cell row, cell col, channel).
Feature feature_extract(const data::Image& img);

inline constexpr double kCovarianceEpsilon = 1e-6;

struct Moments {
  std::vector<double> mean;
  std::vector<double> cov;  // dim x dim, row-major
  std::size_t dim() const { return mean.size(); }
};

// Sample mean and unbiased covariance; adds kCovarianceEpsilon * I when the
// set has no more samples than dimensions.
Moments moments(const std::vector<Feature>& feats);
double frechet_distance(const Moments& a, const Moments& b);
double frechet_distance(const std::vector<Feature>& a, const std::vector<Feature>& b);

// sum_l sum_p A_l[p] M[p] / sum_l sum_p A_l[p]; 0 when there is no attention.
double attention_mass_ratio(const model::AttentionRecord& rec, const data::Mask& mask);

}  // namespace smf::eval
