#include "apa/stats.h"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "apa/error.h"
#include "apa/perturb.h"

namespace apa {

namespace {

Eigen::MatrixXd to_double(const EmbeddingMatrix& m) { return m.cast<double>(); }

bool identical(const GaussianStats& a, const GaussianStats& b) { return a.mean == b.mean && a.cov == b.cov; }

// Total order on stats used to evaluate the distance in one canonical argument
// order, so that d(a, b) and d(b, a) are the same floating-point number.
bool canonically_before(const GaussianStats& a, const GaussianStats& b) {
  if (a.mean != b.mean) {
    return std::lexicographical_compare(a.mean.data(), a.mean.data() + a.mean.size(), b.mean.data(),
                                        b.mean.data() + b.mean.size());
  }
  return std::lexicographical_compare(a.cov.data(), a.cov.data() + a.cov.size(), b.cov.data(),
                                      b.cov.data() + b.cov.size());
}

struct TraceSqrt {
  double value = 0.0;
  bool ok = false;
};

// Tr(sqrt(A^1/2 B A^1/2)) through two symmetric eigendecompositions.
TraceSqrt trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_a(a);
  if (eig_a.info() != Eigen::Success) return {};
  const Eigen::VectorXd root = eig_a.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sqrt_a = eig_a.eigenvectors() * root.asDiagonal() * eig_a.eigenvectors().transpose();

  Eigen::MatrixXd m = sqrt_a * b * sqrt_a;
  m = 0.5 * (m + m.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_m(m, Eigen::EigenvaluesOnly);
  if (eig_m.info() != Eigen::Success) return {};
  const Eigen::VectorXd& lambda = eig_m.eigenvalues();
  if (!lambda.allFinite()) return {};

  // M is PSD in exact arithmetic; a clearly negative eigenvalue means the
  // decomposition lost too much precision to trust.
  const double scale = lambda.cwiseAbs().maxCoeff();
  if (scale > 0.0 && lambda.minCoeff() < -1e-8 * scale) return {};
  return {lambda.cwiseMax(0.0).cwiseSqrt().sum(), true};
}

double frechet_ordered(const GaussianStats& a, const GaussianStats& b) {
  const double mean_term = (a.mean - b.mean).squaredNorm();
  TraceSqrt ts = trace_sqrt_product(a.cov, b.cov);
  double tr_a = a.cov.trace();
  double tr_b = b.cov.trace();

  if (!ts.ok) {
    const double eps = 1e-6 * (a.cov.diagonal().mean() + b.cov.diagonal().mean()) / 2.0;
    const Eigen::Index d = a.dim();
    const Eigen::MatrixXd ridge = eps * Eigen::MatrixXd::Identity(d, d);
    ts = trace_sqrt_product(a.cov + ridge, b.cov + ridge);
    if (!ts.ok) throw Error(ErrorCode::NumericalFailure, "matrix square root failed after ridge retry");
    tr_a += eps * static_cast<double>(d);
    tr_b += eps * static_cast<double>(d);
  }
  const double d = mean_term + tr_a + tr_b - 2.0 * ts.value;
  if (!std::isfinite(d)) throw Error(ErrorCode::NumericalFailure, "non-finite Frechet distance");
  return std::max(0.0, d);
}

}  // namespace

ProjectionMode projection_mode(std::string_view label) {
  if (label == "NP") return ProjectionMode::NP;
  if (label == "PCA100") return ProjectionMode::PCA100;
  if (label == "PCA10") return ProjectionMode::PCA10;
  throw Error(ErrorCode::InvalidArgument, "unknown projection '" + std::string(label) + "'");
}

std::string_view to_string(ProjectionMode mode) {
  switch (mode) {
    case ProjectionMode::NP: return "NP";
    case ProjectionMode::PCA100: return "PCA100";
    case ProjectionMode::PCA10: return "PCA10";
  }
  return "?";
}

GaussianStats fit_gaussian(const EmbeddingMatrix& rows) {
  if (rows.rows() < 2) {
    throw Error(ErrorCode::TooFewSamples, "need at least 2 embeddings, got " + std::to_string(rows.rows()));
  }
  const Eigen::MatrixXd x = to_double(rows);
  GaussianStats s;
  s.n = static_cast<std::size_t>(x.rows());
  s.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - s.mean.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  s.cov = 0.5 * (cov + cov.transpose());
  return s;
}

GaussianStats fit_gaussian(const EmbeddingSet& set) { return fit_gaussian(set.vectors); }

PcaProjection fit_pca(const EmbeddingMatrix& reference, int k) {
  const Eigen::Index dim = reference.cols();
  const Eigen::Index n = reference.rows();
  if (k <= 0 || k > dim) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(k) + " components requested from " + std::to_string(dim) + "-dim data");
  }
  if (n <= k) {
    throw Error(ErrorCode::TooFewSamples,
                std::to_string(k) + " components need more than " + std::to_string(n) + " samples");
  }

  const GaussianStats g = fit_gaussian(reference);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g.cov);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::NumericalFailure, "covariance eigendecomposition");

  PcaProjection p;
  p.center = g.mean;
  p.components.resize(k, dim);
  p.explained_variance.resize(k);
  const Eigen::VectorXd& values = eig.eigenvalues();  // ascending
  const double largest = std::max(0.0, values(dim - 1));
  int rank = 0;
  for (Eigen::Index i = 0; i < dim; ++i) rank += values(i) > largest * 1e-10 ? 1 : 0;

  for (int c = 0; c < k; ++c) {
    const Eigen::Index src = dim - 1 - c;
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    // Deterministic sign: largest-magnitude entry positive.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    p.components.row(c) = v.transpose();
    p.explained_variance(c) = std::max(0.0, values(src));
  }
  if (k > rank) {
    p.warnings.push_back("RankDeficient: " + std::to_string(k) + " components requested, numerical rank " +
                         std::to_string(rank) + "; zero-variance components retained");
  }
  return p;
}

PcaProjection fit_pca(const EmbeddingSet& reference, ProjectionMode mode) {
  if (mode == ProjectionMode::NP) {
    const Eigen::Index dim = reference.vectors.cols();
    PcaProjection p;
    p.mode = mode;
    p.components = Eigen::MatrixXd::Identity(dim, dim);
    p.center = Eigen::VectorXd::Zero(dim);
    if (reference.vectors.rows() >= 2) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit_gaussian(reference).cov, Eigen::EigenvaluesOnly);
      p.explained_variance = eig.eigenvalues().reverse().cwiseMax(0.0);
    }
    return p;
  }
  PcaProjection p = fit_pca(reference.vectors, mode == ProjectionMode::PCA100 ? 100 : 10);
  p.mode = mode;
  return p;
}

EmbeddingSet project(const PcaProjection& p, const EmbeddingSet& set) {
  if (set.vectors.cols() != p.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "projection expects " + std::to_string(p.input_dim()) +
                                                  " dims, set has " + std::to_string(set.vectors.cols()));
  }
  EmbeddingSet out = set;
  const Eigen::MatrixXd centered = to_double(set.vectors).rowwise() - p.center.transpose();
  out.vectors = (centered * p.components.transpose()).cast<float>();
  out.embedder.dim = static_cast<int>(p.output_dim());
  return out;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  if (a.dim() != b.dim() || a.cov.rows() != a.dim() || b.cov.rows() != b.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "Gaussian dimensions differ");
  }
  if (identical(a, b)) return 0.0;
  return canonically_before(a, b) ? frechet_ordered(a, b) : frechet_ordered(b, a);
}

ApaResult apa_score(const GaussianStats& c, const GaussianStats& r, const GaussianStats& r_prime,
                    double anchor_epsilon) {
  ApaResult res;
  res.fad_rrp = frechet_distance(r, r_prime);
  if (!(res.fad_rrp > anchor_epsilon)) {
    throw Error(ErrorCode::DegenerateAnchor,
                "FAD(R,R') = " + std::to_string(res.fad_rrp) + " does not separate the anchors");
  }
  res.fad_cr = frechet_distance(c, r);
  res.fad_crp = frechet_distance(c, r_prime);
  res.apa_raw = 0.5 + (res.fad_crp - res.fad_cr) / (2.0 * res.fad_rrp);
  res.apa = std::clamp(res.apa_raw, 0.0, 1.0);
  res.clipped = res.apa != res.apa_raw;
  return res;
}

double cles(std::span<const double> invariant_scores, std::span<const double> noninvariant_scores) {
  if (invariant_scores.empty() || noninvariant_scores.empty()) {
    throw Error(ErrorCode::EmptyInput, "CLES needs two non-empty score lists");
  }
  std::vector<double> sorted(noninvariant_scores.begin(), noninvariant_scores.end());
  std::sort(sorted.begin(), sorted.end());
  std::uint64_t doubled = 0;  // 2 * wins + ties
  for (double a : invariant_scores) {
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), a);
    const auto hi = std::upper_bound(lo, sorted.end(), a);
    doubled += 2 * static_cast<std::uint64_t>(lo - sorted.begin()) + static_cast<std::uint64_t>(hi - lo);
  }
  return static_cast<double>(doubled) /
         (2.0 * static_cast<double>(invariant_scores.size()) * static_cast<double>(sorted.size()));
}

std::vector<WindowPair> mismatch_pairs(const std::vector<WindowPair>& reference_windows, std::uint64_t seed) {
  return substitute_stems(reference_windows, seed);
}

}  // namespace apa
