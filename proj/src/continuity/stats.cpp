#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "gestalt/continuity.hpp"
#include "gestalt/error.hpp"

namespace gestalt {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("correlation inputs differ in length");
  if (a.size() < 3) throw ConfigError("correlation needs at least three samples");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw NumericError("correlation input is not finite");
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double correlation_p_value(double r, std::size_t n) {
  if (n < 3) throw ConfigError("p-value needs at least three samples");
  const double df = static_cast<double>(n - 2);
  const double r2 = std::min(r * r, 1.0);
  if (r2 >= 1.0) return DBL_MIN;
  const double t = std::sqrt(r2 * df / (1.0 - r2));
  const boost::math::students_t dist(df);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
  return std::clamp(p, DBL_MIN, 1.0);
}

Correlation pearson(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw NumericError("correlation of a zero-variance vector");
  const double r = std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
  return {r, correlation_p_value(r, a.size())};
}

Correlation spearman(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

CorrelationReport correlate_scores(const HeadScoreMatrix& a, const HeadScoreMatrix& b) {
  if (a.scores.rows() != b.scores.rows() || a.scores.cols() != b.scores.cols())
    throw ConfigError("score matrices differ in shape");
  std::vector<double> va;
  std::vector<double> vb;
  for (Eigen::Index l = 0; l < a.scores.rows(); ++l) {
    for (Eigen::Index h = 0; h < a.scores.cols(); ++h) {
      va.push_back(a.scores(l, h));
      vb.push_back(b.scores(l, h));
    }
  }
  CorrelationReport out;
  out.dataset_a = a.dataset;
  out.dataset_b = b.dataset;
  out.model = a.model;
  out.n = va.size();
  out.pearson = pearson(va, vb);
  out.spearman = spearman(va, vb);
  return out;
}

}  // namespace gestalt
