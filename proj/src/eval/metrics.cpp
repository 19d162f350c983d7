#include "smf/eval/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "smf/data/constants.hpp"

namespace smf::eval {

double ssim(const data::Image& a, const data::Image& b) {
  if (a.pixels.size() != b.pixels.size() || a.pixels.size() != data::Image{}.pixels.size()) {
    throw std::invalid_argument("ssim: image sizes differ (" + std::to_string(a.pixels.size()) + " vs " +
                                std::to_string(b.pixels.size()) + ")");
  }
  constexpr int n = data::kImageSize, w = kSsimWindow;
  constexpr double count = w * w;
  double total = 0.0;
  int windows = 0;
  for (int c = 0; c < data::kChannels; ++c) {
    for (int y0 = 0; y0 + w <= n; ++y0) {
      for (int x0 = 0; x0 + w <= n; ++x0) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int y = y0; y < y0 + w; ++y) {
          for (int x = x0; x < x0 + w; ++x) {
            const double va = a.at(x, y, c), vb = b.at(x, y, c);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        }
        const double ma = sa / count, mb = sb / count;
        const double va = saa / count - ma * ma, vb = sbb / count - mb * mb, cov = sab / count - ma * mb;
        total += ((2 * ma * mb + kSsimC1) * (2 * cov + kSsimC2)) /
                 ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
        ++windows;
      }
    }
  }
  return total / windows;
}

Feature feature_extract(const data::Image& img) {
  constexpr int cell = data::kImageSize / kFeaturePool;
  Feature f{};
  for (int cy = 0; cy < kFeaturePool; ++cy) {
    for (int cx = 0; cx < kFeaturePool; ++cx) {
      for (int c = 0; c < 3; ++c) {
        double s = 0;
        for (int y = cy * cell; y < (cy + 1) * cell; ++y)
          for (int x = cx * cell; x < (cx + 1) * cell; ++x) s += img.at(x, y, c);
        f[static_cast<std::size_t>((cy * kFeaturePool + cx) * 3 + c)] = s / (cell * cell);
      }
    }
  }
  return f;
}

Moments moments(const std::vector<Feature>& feats) {
  if (feats.size() < 2) throw std::invalid_argument("moments: need at least 2 feature vectors");
  // Sorted copy: the statistics do not depend on set order, down to rounding.
  auto sorted = feats;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t d = kFeatureDim, n = sorted.size();
  Moments m;
  m.mean.assign(d, 0.0);
  for (const auto& f : sorted)
    for (std::size_t i = 0; i < d; ++i) m.mean[i] += f[i];
  for (auto& v : m.mean) v /= static_cast<double>(n);
  m.cov.assign(d * d, 0.0);
  for (const auto& f : sorted)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) m.cov[i * d + j] += (f[i] - m.mean[i]) * (f[j] - m.mean[j]);
  for (auto& v : m.cov) v /= static_cast<double>(n - 1);
  if (n <= d) {
    for (std::size_t i = 0; i < d; ++i) m.cov[i * d + i] += kCovarianceEpsilon;
  }
  return m;
}

double frechet_distance(const Moments& a, const Moments& b) {
  const auto d = a.dim();
  if (d == 0 || b.dim() != d || a.cov.size() != d * d || b.cov.size() != d * d) {
    throw std::invalid_argument("frechet_distance: moment dimensions disagree");
  }
  using Mat = Eigen::MatrixXd;
  const Mat sa = Eigen::Map<const Mat>(a.cov.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  const Mat sb = Eigen::Map<const Mat>(b.cov.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));

  const auto sqrt_psd = [](const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
    if (es.info() != Eigen::Success) throw std::runtime_error("frechet_distance: eigendecomposition failed");
    const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return Mat(es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose());
  };
  const Mat ra = sqrt_psd(sa);
  Eigen::SelfAdjointEigenSolver<Mat> es(ra * sb * ra, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("frechet_distance: eigendecomposition failed");
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  double mean_term = 0;
  for (std::size_t i = 0; i < d; ++i) mean_term += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);
  const double fd = mean_term + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
  if (!std::isfinite(fd)) throw std::runtime_error("frechet_distance: non-finite result");
  return std::max(fd, 0.0);
}

double frechet_distance(const std::vector<Feature>& a, const std::vector<Feature>& b) {
  return frechet_distance(moments(a), moments(b));
}

double attention_mass_ratio(const model::AttentionRecord& rec, const data::Mask& mask) {
  double inside = 0, total = 0;
  for (const auto& a : rec.maps) {
    if (a.size() != mask.size()) {
      throw std::invalid_argument("attention_mass_ratio: map has " + std::to_string(a.size()) + " cells, mask has " +
                                  std::to_string(mask.size()));
    }
    for (std::size_t p = 0; p < a.size(); ++p) {
      inside += static_cast<double>(a[p]) * mask[p];
      total += a[p];
    }
  }
  return total > 0.0 ? inside / total : 0.0;
}

}  // namespace smf::eval
