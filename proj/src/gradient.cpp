#include "demd/gradient.hpp"

#include <algorithm>
#include <cmath>

#include "demd/error.hpp"

namespace demd {

namespace {

void check_dense_mode(int n, const EmbedConfig& config) {
  if (n > kGradientMaxNodes)
    throw UnsupportedConfiguration("gradients run in dense mode, limited to n <= " + std::to_string(kGradientMaxNodes));
  if (config.method != EmbedMethod::exact_spectral)
    throw UnsupportedConfiguration("gradients are defined for the exact diffusion path only, not " + to_string(config.method));
  if (config.subsample) throw UnsupportedConfiguration("gradients of subsampled embeddings are not supported");
  config.validate();
}

Matrix dense_kernel(const Matrix& x, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidParameter("epsilon must be positive");
  const Eigen::Index n = x.rows();
  Matrix k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) k(i, j) = k(j, i) = std::exp(-(x.row(i) - x.row(j)).squaredNorm() / epsilon);
  }
  return k;
}

// dK/dx_{v,c}; nonzero only on row and column v.
Matrix kernel_derivative(const Matrix& x, const Matrix& k, double epsilon, int v, int c) {
  const Eigen::Index n = x.rows();
  Matrix dk = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j == v) continue;
    const double g = -(2.0 / epsilon) * (x(v, c) - x(j, c)) * k(v, j);
    dk(v, j) = g;
    dk(j, v) = g;
  }
  return dk;
}

struct DenseChain {
  Matrix k, knorm, p;
  Vector q, d;
};

DenseChain dense_chain(const Matrix& x, double epsilon) {
  DenseChain ch;
  ch.k = dense_kernel(x, epsilon);
  ch.q = ch.k.rowwise().sum();
  ch.knorm = ch.q.cwiseInverse().asDiagonal() * ch.k * ch.q.cwiseInverse().asDiagonal();
  ch.d = ch.knorm.rowwise().sum();
  ch.p = ch.d.cwiseInverse().asDiagonal() * ch.knorm;
  return ch;
}

Matrix transition_derivative(const DenseChain& ch, const Matrix& dk) {
  const Vector dq = dk.rowwise().sum();
  const Vector rq = dq.cwiseQuotient(ch.q);
  const Matrix dknorm = -(rq.asDiagonal() * ch.knorm) + ch.q.cwiseInverse().asDiagonal() * dk * ch.q.cwiseInverse().asDiagonal() -
                        ch.knorm * rq.asDiagonal();
  const Vector dd = dknorm.rowwise().sum();
  return ch.d.cwiseInverse().asDiagonal() * (dknorm - dd.asDiagonal() * ch.p);
}

// P^(2^k) for k = 0..K.
std::vector<Matrix> dyadic_powers(const Matrix& p, int max_scale) {
  std::vector<Matrix> out{p};
  for (int k = 1; k <= max_scale; ++k) out.push_back(out.back() * out.back());
  return out;
}

double block_weight(int k, int max_scale, double alpha) {
  return k < max_scale ? std::pow(2.0, -static_cast<double>(max_scale - k - 1) * alpha) : 1.0;
}

Vector difference(const DistributionSet& dist, int i, int j) {
  const int m = dist.num_distributions();
  if (i < 0 || i >= m || j < 0 || j >= m) throw InvalidParameter("distribution index out of range");
  return dist.measures.col(i) - dist.measures.col(j);
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::vector<Matrix> grad_affinity(const PointCloud& points, const AffinityKernel& kernel, int v) {
  if (kernel.kind != KernelKind::dense_gaussian)
    throw UnsupportedConfiguration("kernel gradients need an untruncated Gaussian kernel");
  if (kernel.size() != points.size()) throw InvalidInput("kernel and point cloud sizes differ");
  if (v < 0 || v >= points.size()) throw InvalidParameter("node index out of range");
  const Matrix k(kernel.weights);
  std::vector<Matrix> out;
  for (int c = 0; c < points.dim(); ++c) out.push_back(kernel_derivative(points.coords, k, kernel.epsilon, v, c));
  return out;
}

double dense_diffusion_emd(const Matrix& coords, double epsilon, const EmbedConfig& config,
                           const DistributionSet& dist, int i, int j) {
  const int n = static_cast<int>(coords.rows());
  check_dense_mode(n, config);
  if (dist.num_nodes() != n) throw InvalidInput("distribution rows do not match point count");
  const int max_scale = config.resolved_max_scale(n);
  const Vector delta = difference(dist, i, j);
  const auto powers = dyadic_powers(dense_chain(coords, epsilon).p, max_scale);
  double w = 0.0;
  for (int k = 0; k < max_scale; ++k)
    w += block_weight(k, max_scale, config.alpha) * ((powers[static_cast<std::size_t>(k + 1)] - powers[static_cast<std::size_t>(k)]) * delta).cwiseAbs().sum();
  return w + (powers.back() * delta).cwiseAbs().sum();
}

EmdGradient grad_diffusion_emd(const PointCloud& points, double epsilon, const EmbedConfig& config,
                               const DistributionSet& dist, int i, int j, int v) {
  const int n = points.size();
  check_dense_mode(n, config);
  if (dist.num_nodes() != n) throw InvalidInput("distribution rows do not match point count");
  if (v < 0 || v >= n) throw InvalidParameter("node index out of range");
  const int max_scale = config.resolved_max_scale(n);
  const Vector delta = difference(dist, i, j);
  const DenseChain ch = dense_chain(points.coords, epsilon);
  const auto powers = dyadic_powers(ch.p, max_scale);

  std::vector<Vector> level(powers.size());
  for (std::size_t k = 0; k < powers.size(); ++k) level[k] = powers[k] * delta;
  // Signs of every embedding block of the difference.
  std::vector<Vector> signs(powers.size());
  EmdGradient out;
  for (int k = 0; k <= max_scale; ++k) {
    const Vector b = k < max_scale ? Vector(level[static_cast<std::size_t>(k + 1)] - level[static_cast<std::size_t>(k)])
                                   : level[static_cast<std::size_t>(k)];
    signs[static_cast<std::size_t>(k)] = b.unaryExpr([](double x) { return sign(x); });
    if ((b.array() == 0.0).any()) out.subgradient = true;
  }

  out.gradient = Vector::Zero(points.dim());
  for (int c = 0; c < points.dim(); ++c) {
    const Matrix dk = kernel_derivative(points.coords, ch.k, epsilon, v, c);
    Matrix dpow = transition_derivative(ch, dk);
    std::vector<Vector> dlevel{dpow * delta};
    for (int k = 1; k <= max_scale; ++k) {
      const Matrix& half = powers[static_cast<std::size_t>(k - 1)];
      dpow = (dpow * half + half * dpow).eval();
      dlevel.push_back(dpow * delta);
    }
    double g = 0.0;
    for (int k = 0; k < max_scale; ++k)
      g += block_weight(k, max_scale, config.alpha) *
           signs[static_cast<std::size_t>(k)].dot(dlevel[static_cast<std::size_t>(k + 1)] - dlevel[static_cast<std::size_t>(k)]);
    g += signs[static_cast<std::size_t>(max_scale)].dot(dlevel[static_cast<std::size_t>(max_scale)]);
    out.gradient(c) = g;
  }
  return out;
}

Vector central_difference(const std::function<double(const Matrix&)>& f, const Matrix& coords, int v, double step) {
  if (!(step > 0.0)) throw InvalidParameter("finite-difference step must be positive");
  if (v < 0 || v >= coords.rows()) throw InvalidParameter("node index out of range");
  Vector g(coords.cols());
  for (Eigen::Index c = 0; c < coords.cols(); ++c) {
    Matrix plus = coords, minus = coords;
    plus(v, c) += step;
    minus(v, c) -= step;
    g(c) = (f(plus) - f(minus)) / (plus(v, c) - minus(v, c));
  }
  return g;
}

double relative_error(const Vector& analytic, const Vector& numeric) {
  const double scale = std::max(numeric.cwiseAbs().maxCoeff(), 1e-12);
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

GradientReport finite_difference_check(const PointCloud& points, double epsilon, const EmbedConfig& config,
                                       const DistributionSet& dist, int i, int j, int v, double step,
                                       double tolerance) {
  GradientReport report;
  report.node = v;
  report.tolerance = tolerance;
  const EmdGradient g = grad_diffusion_emd(points, epsilon, config, dist, i, j, v);
  report.analytic = g.gradient;
  report.subgradient = g.subgradient;
  report.numeric = central_difference(
      [&](const Matrix& x) { return dense_diffusion_emd(x, epsilon, config, dist, i, j); }, points.coords, v, step);
  report.max_relative_error = relative_error(report.analytic, report.numeric);
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

}  // namespace demd
