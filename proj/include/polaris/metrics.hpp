#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "polaris/common.hpp"

namespace polaris {

inline double pearson_r(const std::vector<double>& a, const std::vector<double>& b) {
  check_arg(a.size() == b.size() && a.size() >= 2, "pearson_r: need two equal-length series");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// Ranks with ties averaged (1-based fractional ranks).
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
  check_arg(a.size() == b.size() && a.size() >= 2, "spearman_rho: need two equal-length series");
  return pearson_r(average_ranks(a), average_ranks(b));
}

// KL(P || Q) between histograms of two samples over a shared equal-width
// binning of the pooled range, with add-one smoothing. Natural log.
inline double kl_divergence_hist(const std::vector<double>& p_samples,
                                 const std::vector<double>& q_samples, int bins = 32) {
  check_arg(bins >= 1, "kl_divergence_hist: bins must be positive");
  check_arg(!p_samples.empty() && !q_samples.empty(), "kl_divergence_hist: empty sample set");
  double lo = p_samples[0], hi = p_samples[0];
  for (double x : p_samples) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  for (double x : q_samples) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (hi == lo) return 0.0;
  const double width = (hi - lo) / bins;
  auto histogram = [&](const std::vector<double>& xs) {
    std::vector<double> h(bins, 1.0);  // add-one smoothing
    for (double x : xs) {
      int b = static_cast<int>((x - lo) / width);
      b = std::clamp(b, 0, bins - 1);
      h[b] += 1.0;
    }
    const double total = static_cast<double>(xs.size()) + bins;
    for (double& v : h) v /= total;
    return h;
  };
  const auto p = histogram(p_samples);
  const auto q = histogram(q_samples);
  double kl = 0.0;
  for (int b = 0; b < bins; ++b) kl += p[b] * std::log(p[b] / q[b]);
  return kl;
}

inline double median(std::vector<double> xs) {
  check_arg(!xs.empty(), "median: empty input");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// One optimization run reduced to its convergence trace.
struct RunSeries {
  std::string workload;
  std::string method;
  std::uint64_t seed = 0;
  std::vector<double> cumulative_min_edp;

  double final_edp() const {
    check(!cumulative_min_edp.empty(), "RunSeries: empty trace");
    return cumulative_min_edp.back();
  }
};

struct GroupSummary {
  std::string workload;
  std::string method;
  int n_runs = 0;
  double median_edp = 0.0;
  double min_edp = 0.0;
  double max_edp = 0.0;
};

enum class GroupBy { kWorkloadAndMethod, kMethod };

inline std::vector<GroupSummary> summarize_runs(const std::vector<RunSeries>& runs,
                                                GroupBy group_by = GroupBy::kWorkloadAndMethod) {
  check_arg(!runs.empty(), "summarize_runs: no runs");
  for (const auto& r : runs) {
    check_arg(!r.cumulative_min_edp.empty(), "summarize_runs: empty run series");
    for (std::size_t i = 1; i < r.cumulative_min_edp.size(); ++i)
      check_arg(r.cumulative_min_edp[i] <= r.cumulative_min_edp[i - 1],
                "summarize_runs: series is not a cumulative minimum");
  }
  if (group_by == GroupBy::kMethod) {
    for (const auto& r : runs)
      check_arg(r.workload == runs.front().workload,
                "summarize_runs: cannot group mixed workloads by method only");
  }
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  for (const auto& r : runs) {
    const std::string wl = group_by == GroupBy::kMethod ? runs.front().workload : r.workload;
    groups[{wl, r.method}].push_back(r.final_edp());
  }
  std::vector<GroupSummary> out;
  for (const auto& [key, vals] : groups) {
    GroupSummary g;
    g.workload = key.first;
    g.method = key.second;
    g.n_runs = static_cast<int>(vals.size());
    g.median_edp = median(vals);
    g.min_edp = *std::min_element(vals.begin(), vals.end());
    g.max_edp = *std::max_element(vals.begin(), vals.end());
    out.push_back(g);
  }
  return out;
}

// CSV rows: metric,name,value,n,seed,context
struct CsvRow {
  std::string metric;
  std::string name;
  double value = 0.0;
  int n = 0;
  std::uint64_t seed = 0;
  std::string context;
};

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string to_csv(const std::vector<CsvRow>& rows) {
  std::string out = "metric,name,value,n,seed,context\n";
  for (const auto& r : rows) {
    out += r.metric + "," + r.name + "," + format_double(r.value) + "," + std::to_string(r.n) +
           "," + std::to_string(r.seed) + "," + r.context + "\n";
  }
  return out;
}

inline std::vector<CsvRow> summaries_to_csv_rows(const std::vector<GroupSummary>& summaries) {
  std::vector<CsvRow> rows;
  for (const auto& g : summaries) {
    rows.push_back({"final_edp_median", g.workload + "/" + g.method, g.median_edp, g.n_runs, 0, ""});
    rows.push_back({"final_edp_min", g.workload + "/" + g.method, g.min_edp, g.n_runs, 0, ""});
    rows.push_back({"final_edp_max", g.workload + "/" + g.method, g.max_edp, g.n_runs, 0, ""});
  }
  return rows;
}

}  // namespace polaris
