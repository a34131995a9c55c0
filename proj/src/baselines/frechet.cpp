#include <algorithm>
#include <cmath>
#include <numeric>

#include "nnd/baselines.hpp"
#include "nnd/error.hpp"

namespace nnd {

namespace {

constexpr double kSymmetryTolerance = 1e-6;
constexpr double kPsdTolerance = 1e-6;

double scale_of(const Eigen::MatrixXd& a) { return std::max(1.0, a.cwiseAbs().maxCoeff()); }

void require_symmetric(const Eigen::MatrixXd& a, const char* what) {
  if (a.rows() != a.cols()) {
    throw ShapeError(std::string(what) + " must be square, got " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()));
  }
  if (a.size() == 0) return;
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTolerance * scale_of(a)) {
    throw ConfigError(std::string(what) + " is not symmetric (max |A - A^T| = " + std::to_string(asym) + ")");
  }
}

Eigen::MatrixXd root_from(const SymmetricEigen& e) {
  const Eigen::VectorXd r = e.values.cwiseMax(0.0).cwiseSqrt();
  return e.vectors * r.asDiagonal() * e.vectors.transpose();
}

void require_psd(const SymmetricEigen& e, const Eigen::MatrixXd& a, const char* what) {
  if (e.values.size() > 0 && e.values.minCoeff() < -kPsdTolerance * scale_of(a)) {
    throw ConfigError(std::string(what) + " is not positive semidefinite (eigenvalue " +
                      std::to_string(e.values.minCoeff()) + ")");
  }
}

}  // namespace

GaussianMoments moments(const Eigen::MatrixXd& features) {
  const auto n = features.rows();
  if (n < 2) throw DataError("moments need at least 2 samples, got " + std::to_string(n));
  GaussianMoments m;
  m.mu = features.colwise().mean().transpose();
  const Eigen::MatrixXd centred = features.rowwise() - m.mu.transpose();
  const Eigen::MatrixXd s = (centred.transpose() * centred) / static_cast<double>(n - 1);
  m.sigma = 0.5 * (s + s.transpose());
  return m;
}

SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& input, double tolerance, int max_sweeps) {
  require_symmetric(input, "matrix");
  const auto n = input.rows();
  Eigen::MatrixXd a = 0.5 * (input + input.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double target = std::max(tolerance, 1e-14 * a.norm());

  const auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < max_sweeps && off_norm() >= target; ++sweep) {
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        // A ← Jᵀ A J with the rotation in the (p, q) plane.
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) < a(y, y); });
  SymmetricEigen out{Eigen::VectorXd(n), Eigen::MatrixXd(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto src = order[static_cast<std::size_t>(i)];
    out.values(i) = a(src, src);
    out.vectors.col(i) = v.col(src);
  }
  return out;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) { return root_from(jacobi_eigen(a)); }

Eigen::MatrixXd sqrtm_product(const Eigen::MatrixXd& sigma_p, const Eigen::MatrixXd& sigma_q) {
  require_symmetric(sigma_p, "sigma_p");
  require_symmetric(sigma_q, "sigma_q");
  if (sigma_p.rows() != sigma_q.rows()) {
    throw ShapeError("covariances of dimension " + std::to_string(sigma_p.rows()) + " and " +
                     std::to_string(sigma_q.rows()));
  }
  const Eigen::MatrixXd root_p = psd_sqrt(sigma_p);
  const Eigen::MatrixXd m = root_p * sigma_q * root_p;
  return psd_sqrt(0.5 * (m + m.transpose()));
}

double frechet_distance(const GaussianMoments& a, const GaussianMoments& b) {
  const auto d = a.mu.size();
  if (b.mu.size() != d || a.sigma.rows() != d || b.sigma.rows() != d) {
    throw ShapeError("moments of dimension " + std::to_string(d) + " and " + std::to_string(b.mu.size()));
  }
  require_symmetric(a.sigma, "sigma_p");
  require_symmetric(b.sigma, "sigma_q");
  const auto eig_p = jacobi_eigen(a.sigma);
  const auto eig_q = jacobi_eigen(b.sigma);
  require_psd(eig_p, a.sigma, "sigma_p");
  require_psd(eig_q, b.sigma, "sigma_q");

  const Eigen::MatrixXd root_p = root_from(eig_p);
  const Eigen::MatrixXd m = root_p * b.sigma * root_p;
  const auto eig_m = jacobi_eigen(0.5 * (m + m.transpose()));
  const double cross = eig_m.values.cwiseMax(0.0).cwiseSqrt().sum();

  const double fd = (a.mu - b.mu).squaredNorm() + a.sigma.trace() + b.sigma.trace() - 2.0 * cross;
  return std::max(fd, 0.0);
}

}  // namespace nnd
