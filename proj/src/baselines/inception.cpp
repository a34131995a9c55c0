#include <algorithm>
#include <cmath>

#include "nnd/baselines.hpp"
#include "nnd/error.hpp"

namespace nnd {

std::string to_string(IsVariant v) { return v == IsVariant::kl_mean ? "kl_mean" : "exponentiated"; }

IsVariant parse_is_variant(const std::string& text) {
  if (text == "kl_mean") return IsVariant::kl_mean;
  if (text == "exponentiated") return IsVariant::exponentiated;
  throw ConfigError("IS variant must be \"kl_mean\" or \"exponentiated\", got \"" + text + "\"");
}

IsScore inception_style_score(const Eigen::MatrixXd& probs, IsVariant variant, int splits) {
  const auto n = probs.rows();
  const auto k = probs.cols();
  if (n < 1 || k < 1) throw DataError("inception-style score needs a non-empty N x K probability matrix");
  if (splits < 1) throw ConfigError("IS splits must be positive");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (probs.row(i).minCoeff() < 0.0 || std::abs(probs.row(i).sum() - 1.0) > 1e-5) {
      throw DataError("row " + std::to_string(i) + " of classifier output is not a probability vector");
    }
  }

  IsScore out;
  out.variant = variant;
  const auto parts = std::min<Eigen::Index>(splits, n);
  for (Eigen::Index s = 0; s < parts; ++s) {
    const auto begin = s * n / parts;
    const auto end = (s + 1) * n / parts;
    const auto block = probs.middleRows(begin, end - begin);
    const Eigen::RowVectorXd marginal = block.colwise().mean();
    double kl_total = 0.0;
    for (Eigen::Index i = 0; i < block.rows(); ++i) {
      for (Eigen::Index y = 0; y < k; ++y) {
        const double p = block(i, y);
        if (p == 0.0) continue;  // 0·log 0 = 0
        kl_total += p * (std::log(std::max(p, kKlFloor)) - std::log(std::max(marginal(y), kKlFloor)));
      }
    }
    const double kl = kl_total / static_cast<double>(block.rows());
    out.split_scores.push_back(variant == IsVariant::kl_mean ? kl : std::exp(kl));
  }
  double sum = 0.0;
  for (double v : out.split_scores) sum += v;
  out.value = sum / static_cast<double>(out.split_scores.size());
  return out;
}

double is_divergence(const IsScore& p, const IsScore& q) {
  if (p.variant != q.variant) {
    throw UsageError("IS divergence between a " + to_string(p.variant) + " and a " + to_string(q.variant) +
                     " score");
  }
  return std::abs(p.value - q.value);
}

}  // namespace nnd
