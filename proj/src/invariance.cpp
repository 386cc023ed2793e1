#include "invtrans/invariance.hpp"

#include <algorithm>
#include <bit>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <cmath>
#include <numeric>
#include <vector>

#include "invtrans/rng.hpp"

namespace invtrans {

namespace {

// Residuals reordered so task groups are contiguous, plus the group layout
// and the kernel width. The statistic is invariant under row permutations,
// so the reordering only serves the segment-wise inner loops.
struct Prepared {
  Eigen::VectorXd r;
  std::vector<Eigen::Index> group_start;  // size D+1, sentinel at the end
  std::vector<double> group_frac;         // n_k / n
  double q = 0.0;                         // sum (n_k/n)^2
  double sigma2 = 0.0;
  bool degenerate = false;                // no spread in the residuals
};

// Exact k-th smallest pairwise difference (1-based rank over all m(m-1)/2
// unordered pairs) of an ascending value vector, without materializing the
// pairs. count(t) is monotone in t and steps only at achieved differences, so
// a binary search on the bit patterns of nonnegative doubles lands exactly on
// an achieved difference.
double kth_pairwise_diff(const std::vector<double>& v, std::uint64_t k) {
  const std::size_t m = v.size();
  const auto count_le = [&](double t) {
    std::uint64_t cnt = 0;
    std::size_t lo = 0;
    for (std::size_t j = 0; j < m; ++j) {
      while (v[j] - v[lo] > t) ++lo;
      cnt += j - lo;
    }
    return cnt;
  };
  std::uint64_t lo_b = 0;
  std::uint64_t hi_b = std::bit_cast<std::uint64_t>(v.back() - v.front());
  while (lo_b < hi_b) {
    const std::uint64_t mid = lo_b + (hi_b - lo_b) / 2;
    if (count_le(std::bit_cast<double>(mid)) >= k)
      hi_b = mid;
    else
      lo_b = mid + 1;
  }
  return std::bit_cast<double>(lo_b);
}

Prepared prepare(const ResidualSample& sample, const KernelConfig& cfg, Eigen::Index min_rows) {
  const Eigen::Index n = sample.residuals.size();
  if (static_cast<Eigen::Index>(sample.task_ids.size()) != n)
    fail(Errc::DimensionMismatch, "residuals and task ids differ in length");
  if (n < min_rows) fail(Errc::TooFewSamples, "need at least " + std::to_string(min_rows) + " rows, have " +
                                                  std::to_string(n));
  if (!sample.residuals.allFinite()) fail(Errc::NonFiniteValue, "residuals contain non-finite values");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return sample.task_ids[static_cast<std::size_t>(a)] < sample.task_ids[static_cast<std::size_t>(b)];
  });

  Prepared prep;
  prep.r.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) prep.r[i] = sample.residuals[order[static_cast<std::size_t>(i)]];

  prep.group_start.push_back(0);
  for (Eigen::Index i = 1; i < n; ++i)
    if (sample.task_ids[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] !=
        sample.task_ids[static_cast<std::size_t>(order[static_cast<std::size_t>(i - 1)])])
      prep.group_start.push_back(i);
  prep.group_start.push_back(n);
  const std::size_t d = prep.group_start.size() - 1;
  if (d < 2) fail(Errc::SingleTask, "need residuals from at least 2 tasks");
  for (std::size_t g = 0; g < d; ++g) {
    const double frac = static_cast<double>(prep.group_start[g + 1] - prep.group_start[g]) /
                        static_cast<double>(n);
    prep.group_frac.push_back(frac);
    prep.q += frac * frac;
  }

  if (cfg.bandwidth) {
    if (!(*cfg.bandwidth > 0.0)) fail(Errc::InvalidBandwidth, "explicit bandwidth must be > 0");
    prep.sigma2 = *cfg.bandwidth * *cfg.bandwidth;
    double lo = prep.r.minCoeff(), hi = prep.r.maxCoeff();
    prep.degenerate = !(hi > lo);
    return prep;
  }

  // Median heuristic on a capped, deterministically chosen point set.
  const Eigen::Index cap = 2000;
  std::vector<Eigen::Index> pts;
  if (n <= cap) {
    pts.resize(static_cast<std::size_t>(n));
    std::iota(pts.begin(), pts.end(), 0);
  } else {
    std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    Rng rng = Rng::from_path(0x6d656469616eULL, {static_cast<std::uint64_t>(n)});
    for (Eigen::Index i = 0; i < cap; ++i) {
      const Eigen::Index j = i + static_cast<Eigen::Index>(rng.uniform_below(static_cast<std::uint64_t>(n - i)));
      std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
    }
    pts.assign(all.begin(), all.begin() + cap);
  }
  std::vector<double> vals;
  vals.reserve(pts.size());
  for (Eigen::Index i : pts) vals.push_back(prep.r[i]);
  std::sort(vals.begin(), vals.end());

  // Exact-zero distances do not enter the median; ties sit in runs of equal
  // values, so their pair count falls out of the run lengths.
  const std::uint64_t m = vals.size();
  std::uint64_t zero_pairs = 0;
  for (std::size_t i = 0; i < vals.size();) {
    std::size_t j = i + 1;
    while (j < vals.size() && vals[j] == vals[i]) ++j;
    const std::uint64_t run = j - i;
    zero_pairs += run * (run - 1) / 2;
    i = j;
  }
  const std::uint64_t positive = m * (m - 1) / 2 - zero_pairs;
  if (positive == 0) {
    prep.degenerate = true;
    prep.sigma2 = 1.0;
    return prep;
  }
  const std::uint64_t mid = positive / 2;
  const double upper = kth_pairwise_diff(vals, zero_pairs + mid + 1);
  double median_sq = upper * upper;
  if (positive % 2 == 0) {
    const double lower = kth_pairwise_diff(vals, zero_pairs + mid);
    median_sq = 0.5 * (lower * lower + median_sq);
  }
  prep.sigma2 = 0.5 * median_sq;
  return prep;
}

struct HsicMoments {
  double stat = 0.0;
  double kernel_sum = 0.0;  // sum over all entries of K
  double var_acc = 0.0;     // sum over i != j of (Kc Lc)_{ij}^2
};

// One pass over the lower-triangle kernel columns accumulates, per row, the
// kernel sums and squared-kernel sums restricted to each task block. The
// delta kernel is piecewise constant on task pairs, so both centered moments
// reduce to block arithmetic afterwards and the n x n matrix is never stored.
HsicMoments hsic_moments(const Prepared& prep, HsicWorkspace& ws) {
  const Eigen::Index n = prep.r.size();
  const Eigen::Index d = static_cast<Eigen::Index>(prep.group_frac.size());
  if (ws.gram.rows() < n || ws.gram.cols() < 2 * d) ws.gram.resize(n, 2 * d);
  if (ws.row_sum.size() < n) ws.row_sum.resize(n);

  auto R = ws.gram.block(0, 0, n, d);  // R(i, h) = sum_{j in task h} K_ij
  auto Q = ws.gram.block(0, d, n, d);  // Q(i, h) = sum_{j in task h} K_ij^2
  R.setZero();
  Q.setZero();

  std::vector<Eigen::Index> group_of(static_cast<std::size_t>(n));
  for (Eigen::Index g = 0; g < d; ++g)
    for (Eigen::Index i = prep.group_start[static_cast<std::size_t>(g)];
         i < prep.group_start[static_cast<std::size_t>(g) + 1]; ++i)
      group_of[static_cast<std::size_t>(i)] = g;

  const double inv_two_sigma2 = 1.0 / (2.0 * prep.sigma2);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index len = n - j;
    auto c = ws.row_sum.segment(j, len);
    c = (-(prep.r.segment(j, len).array() - prep.r[j]).square() * inv_two_sigma2).exp();
    const Eigen::Index gj = group_of[static_cast<std::size_t>(j)];
    // Rows i >= j see K_ij in column block g_j; the diagonal enters here once.
    ws.gram.col(gj).segment(j, len) += c;
    ws.gram.col(d + gj).segment(j, len).array() += c.array().square();
    // Row j sees the mirrored off-diagonal entries, split by the group of i.
    for (Eigen::Index g = gj; g < d; ++g) {
      const Eigen::Index a = std::max(prep.group_start[static_cast<std::size_t>(g)], j + 1);
      const Eigen::Index b = prep.group_start[static_cast<std::size_t>(g) + 1];
      if (a >= b) continue;
      const auto seg = c.segment(a - j, b - a);
      ws.gram(j, g) += seg.sum();
      ws.gram(j, d + g) += seg.squaredNorm();
    }
  }

  const double nd = static_cast<double>(n);
  Eigen::VectorXd rm = R.rowwise().sum();
  const double total = rm.sum();
  const double gm = total / (nd * nd);
  rm /= nd;
  const double gm_half = 0.5 * gm;

  HsicMoments m;
  m.kernel_sum = total;

  // Writing Kc_ij = K_ij - u_i - u_j with u_i = rm_i - gm/2, every block sum
  // of Kc and of Kc^2 follows from the per-group reductions below.
  Eigen::VectorXd ng(d), srm(d), su(d), su2(d), diag2(d);
  Eigen::MatrixXd B(d, d), SK2(d, d), SU(d, d);
  for (Eigen::Index g = 0; g < d; ++g) {
    const Eigen::Index a = prep.group_start[static_cast<std::size_t>(g)];
    const Eigen::Index len = prep.group_start[static_cast<std::size_t>(g) + 1] - a;
    ng[g] = static_cast<double>(len);
    const auto rm_g = rm.segment(a, len);
    srm[g] = rm_g.sum();
    const auto u_g = rm_g.array() - gm_half;
    su[g] = u_g.sum();
    su2[g] = u_g.square().sum();
    diag2[g] = (1.0 - 2.0 * u_g).square().sum();  // diagonal Kc_ii = 1 - 2 u_i
    for (Eigen::Index h = 0; h < d; ++h) {
      B(g, h) = R.col(h).segment(a, len).sum();
      SK2(g, h) = Q.col(h).segment(a, len).sum();
      SU(g, h) = (u_g * R.col(h).segment(a, len).array()).sum();
    }
  }

  double stat_acc = 0.0, var_acc = 0.0;
  for (Eigen::Index g = 0; g < d; ++g) {
    const double fg = prep.group_frac[static_cast<std::size_t>(g)];
    for (Eigen::Index h = 0; h < d; ++h) {
      const double fh = prep.group_frac[static_cast<std::size_t>(h)];
      const double lcv = (g == h ? 1.0 : 0.0) - fg - fh + prep.q;
      stat_acc += lcv * (B(g, h) - srm[g] * ng[h] - srm[h] * ng[g] + ng[g] * ng[h] * gm);
      double kc2 = SK2(g, h) - 2.0 * (SU(g, h) + SU(h, g)) + ng[h] * su2[g] +
                   2.0 * su[g] * su[h] + ng[g] * su2[h];
      if (g == h) kc2 -= diag2[g];  // var_acc runs over i != j only
      var_acc += lcv * lcv * kc2;
    }
  }
  m.stat = stat_acc / (nd * nd);
  m.var_acc = var_acc;
  return m;
}

TestOutcome degenerate_outcome(double level, double stat) {
  TestOutcome out;
  out.statistic = stat;
  out.p_value = 1.0;
  out.accepted = true;
  out.level = level;
  out.degenerate_null = true;
  return out;
}

}  // namespace

double hsic_statistic(const ResidualSample& sample, const KernelConfig& cfg) {
  HsicWorkspace ws;
  return hsic_statistic(sample, cfg, ws);
}

double hsic_statistic(const ResidualSample& sample, const KernelConfig& cfg, HsicWorkspace& ws) {
  Prepared prep = prepare(sample, cfg, 4);
  if (prep.degenerate && !cfg.bandwidth) return 0.0;
  return hsic_moments(prep, ws).stat;
}

TestOutcome hsic_d_sample_test(const ResidualSample& sample, const KernelConfig& cfg, double level) {
  HsicWorkspace ws;
  return hsic_d_sample_test(sample, cfg, level, ws);
}

TestOutcome hsic_d_sample_test(const ResidualSample& sample, const KernelConfig& cfg, double level,
                               HsicWorkspace& ws) {
  if (!(level >= 0.0 && level <= 1.0)) fail(Errc::InvalidConfig, "level must lie in [0, 1]");
  Prepared prep = prepare(sample, cfg, 4);
  if (prep.degenerate) return degenerate_outcome(level, 0.0);

  const double n = static_cast<double>(prep.r.size());
  HsicMoments m = hsic_moments(prep, ws);

  // Two-moment Gamma fit to the null of n * HSIC_b. The second moment has an
  // (n-4)(n-5) factor, so n <= 5 has no usable null model.
  const double mu_k = (m.kernel_sum - n) / (n * (n - 1.0));
  double l_sum = 0.0;
  for (double f : prep.group_frac) l_sum += (f * n) * (f * n);
  const double mu_l = (l_sum - n) / (n * (n - 1.0));
  const double mean_h = (1.0 + mu_k * mu_l - mu_k - mu_l) / n;
  const double var_h = (m.var_acc / 36.0) * (72.0 * (n - 4.0) * (n - 5.0)) /
                       (n * (n - 1.0) * (n - 2.0) * (n - 3.0)) / (n * (n - 1.0));
  if (!(mean_h > 0.0) || !(var_h > 0.0) || !std::isfinite(mean_h) || !std::isfinite(var_h))
    return degenerate_outcome(level, m.stat);

  const double shape = mean_h * mean_h / var_h;
  const double scale = n * var_h / mean_h;
  const double x = std::max(n * m.stat, 0.0);
  boost::math::gamma_distribution<double> gd(shape, scale);
  const double p = boost::math::cdf(boost::math::complement(gd, x));

  TestOutcome out;
  out.statistic = m.stat;
  out.p_value = p;
  out.accepted = p > level;
  out.level = level;
  return out;
}

TestOutcome levene_test(const ResidualSample& sample, double level) {
  if (!(level >= 0.0 && level <= 1.0)) fail(Errc::InvalidConfig, "level must lie in [0, 1]");
  Prepared prep = prepare(sample, KernelConfig{1.0}, 4);
  const std::size_t d = prep.group_frac.size();
  const double n = static_cast<double>(prep.r.size());

  // Absolute deviations from group means, then a one-way F test on them.
  double num = 0.0, den = 0.0, z_total = 0.0;
  std::vector<double> z_mean(d);
  Eigen::VectorXd z(prep.r.size());
  for (std::size_t g = 0; g < d; ++g) {
    const Eigen::Index a = prep.group_start[g], b = prep.group_start[g + 1];
    if (b - a < 2) fail(Errc::TaskTooSmall, "every task needs >= 2 rows for the variance test");
    const double gmean = prep.r.segment(a, b - a).mean();
    auto zg = z.segment(a, b - a);
    zg = (prep.r.segment(a, b - a).array() - gmean).abs();
    z_mean[g] = zg.mean();
    z_total += zg.sum();
  }
  const double z_bar = z_total / n;
  for (std::size_t g = 0; g < d; ++g) {
    const Eigen::Index a = prep.group_start[g], b = prep.group_start[g + 1];
    num += static_cast<double>(b - a) * (z_mean[g] - z_bar) * (z_mean[g] - z_bar);
    den += (z.segment(a, b - a).array() - z_mean[g]).square().sum();
  }

  TestOutcome out;
  out.level = level;
  const double dd = static_cast<double>(d);
  if (den == 0.0) {
    if (num == 0.0) {
      out.statistic = 0.0;
      out.p_value = 1.0;
      out.accepted = true;
    } else {
      out.statistic = std::numeric_limits<double>::infinity();
      out.p_value = 0.0;
      out.accepted = false;
    }
    return out;
  }
  const double w = ((n - dd) / (dd - 1.0)) * num / den;
  boost::math::fisher_f fdist(dd - 1.0, n - dd);
  const double p = boost::math::cdf(boost::math::complement(fdist, w));
  out.statistic = w;
  out.p_value = p;
  out.accepted = p > level;
  return out;
}

}  // namespace invtrans
