/// @file stats.h
/// @brief Gaussian fits, non-whitened PCA, Frechet distance, the APA score and CLES.

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "apa/audio_io.h"
#include "apa/embed.h"

namespace apa {

/// @brief Mean and unbiased covariance of an embedding set.
struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t n = 0;

  Eigen::Index dim() const { return mean.size(); }
};

enum class ProjectionMode { NP, PCA100, PCA10 };

ProjectionMode projection_mode(std::string_view label);
std::string_view to_string(ProjectionMode mode);

/// @brief rows = components * (x - center). Never rescales component variances.
struct PcaProjection {
  Eigen::MatrixXd components;          ///< k x D, orthonormal rows
  Eigen::VectorXd center;              ///< D
  Eigen::VectorXd explained_variance;  ///< k, non-increasing
  ProjectionMode mode = ProjectionMode::NP;
  std::vector<std::string> warnings;

  Eigen::Index input_dim() const { return components.cols(); }
  Eigen::Index output_dim() const { return components.rows(); }
};

struct ApaResult {
  double fad_cr = 0.0;   ///< candidate vs matched reference
  double fad_crp = 0.0;  ///< candidate vs mismatched reference
  double fad_rrp = 0.0;  ///< matched vs mismatched reference
  double apa_raw = 0.0;
  double apa = 0.0;  ///< apa_raw clipped to [0, 1]
  bool clipped = false;
};

/// @throws Error(TooFewSamples) for fewer than two rows.
GaussianStats fit_gaussian(const EmbeddingMatrix& rows);
GaussianStats fit_gaussian(const EmbeddingSet& set);

/// @brief Principal axes of the reference covariance. NP yields the identity.
/// A component count above the numerical rank is allowed and noted in `warnings`.
/// @throws Error(TooFewSamples) when N <= k, Error(DimensionMismatch) when k > D.
PcaProjection fit_pca(const EmbeddingSet& reference, ProjectionMode mode);
PcaProjection fit_pca(const EmbeddingMatrix& reference, int k);

EmbeddingSet project(const PcaProjection& p, const EmbeddingSet& set);

/// @brief ||mu_a - mu_b||^2 + Tr(S_a) + Tr(S_b) - 2 Tr(sqrt(S_a^1/2 S_b S_a^1/2)).
/// Exactly symmetric in its arguments and exactly zero for identical inputs.
/// @throws Error(DimensionMismatch), Error(NumericalFailure) if a ridge-regularized retry also fails.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

inline constexpr double kAnchorEpsilon = 1e-6;

/// @brief APA = 1/2 + (FAD(C,R') - FAD(C,R)) / (2 FAD(R,R')), clipped to [0, 1].
/// @throws Error(DegenerateAnchor) when FAD(R,R') <= @p anchor_epsilon.
ApaResult apa_score(const GaussianStats& c, const GaussianStats& r, const GaussianStats& r_prime,
                    double anchor_epsilon = kAnchorEpsilon);

/// @brief Common-language effect size: P(a > b) over all pairs, ties counted 1/2.
/// @throws Error(EmptyInput) if either list is empty.
double cles(std::span<const double> invariant_scores, std::span<const double> noninvariant_scores);

/// @brief Mismatched anchor R' from R: stems re-paired across songs.
std::vector<WindowPair> mismatch_pairs(const std::vector<WindowPair>& reference_windows, std::uint64_t seed);

}  // namespace apa
