#pragma once

// Reference computations written directly from the definitions, sharing no
// code with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

inline double sds(double ratio, double mu, double sigma) {
  const long double r = ratio, m = mu, s = sigma;
  return static_cast<double>((r - m) / s);
}

// Grade index 0..6 and direction (-1 atrophy, +1 enlargement, 0 none) by
// walking the cut points from the mildest outward.
inline std::pair<int, int> grade(double z, const std::array<double, 6>& atrophy, const std::array<double, 6>& enl) {
  if (std::isnan(z)) return {0, 0};
  int g = 0;
  if (z < 0) {
    for (int k = 0; k < 6; ++k)
      if (z <= atrophy[k]) g = k + 1;
    return {g, g ? -1 : 0};
  }
  for (int k = 0; k < 6; ++k)
    if (z >= enl[k]) g = k + 1;
  return {g, g ? 1 : 0};
}

// Knots as (age, mu, sigma); clamps outside the range.
inline std::pair<double, double> interpolate(const std::vector<std::array<double, 3>>& knots, double age) {
  if (age <= knots.front()[0]) return {knots.front()[1], knots.front()[2]};
  if (age >= knots.back()[0]) return {knots.back()[1], knots.back()[2]};
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const auto& a = knots[i];
    const auto& b = knots[i + 1];
    if (age >= a[0] && age <= b[0]) {
      const double w = (age - a[0]) / (b[0] - a[0]);
      return {a[1] * (1 - w) + b[1] * w, a[2] * (1 - w) + b[2] * w};
    }
  }
  return {knots.back()[1], knots.back()[2]};
}

inline std::vector<double> advantages(const std::vector<double>& r) {
  long double sum = 0;
  for (double x : r) sum += x;
  const long double mean = sum / r.size();
  long double ss = 0;
  for (double x : r) ss += (x - mean) * (x - mean);
  const long double sd = std::sqrt(ss / r.size());
  std::vector<double> out(r.size(), 0.0);
  if (sd < 1e-8L) return out;
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = static_cast<double>((r[i] - mean) / sd);
  return out;
}

struct Metrics {
  double bacc = 0;
  double macro_f1 = 0;
  std::array<double, 5> f1{};
  std::array<double, 5> precision{};
  std::array<double, 5> recall{};
};

// conf[g][p]
inline Metrics metrics(const std::array<std::array<long, 5>, 5>& conf) {
  Metrics m;
  double recall_sum = 0;
  int present = 0;
  for (int c = 0; c < 5; ++c) {
    long tp = 0, fp = 0, fn = 0;
    for (int g = 0; g < 5; ++g)
      for (int p = 0; p < 5; ++p) {
        if (g == c && p == c) tp += conf[g][p];
        if (g != c && p == c) fp += conf[g][p];
        if (g == c && p != c) fn += conf[g][p];
      }
    const double prec = tp + fp ? double(tp) / double(tp + fp) : 0.0;
    const double rec = tp + fn ? double(tp) / double(tp + fn) : 0.0;
    m.precision[c] = prec;
    m.recall[c] = rec;
    m.f1[c] = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    m.macro_f1 += m.f1[c] / 5.0;
    if (tp + fn > 0) {
      recall_sum += rec;
      ++present;
    }
  }
  m.bacc = recall_sum / present;
  return m;
}

// Plurality over top picks (-1 = no vote); ties by Borda over rankings
// (class -> rank), then by lowest class index.
inline int vote(const std::vector<int>& tops, const std::vector<std::map<int, int>>& rankings) {
  std::array<int, 5> count{};
  std::array<long, 5> borda{};
  for (std::size_t i = 0; i < tops.size(); ++i) {
    if (tops[i] < 0) continue;
    ++count[tops[i]];
    for (const auto& [cls, rank] : rankings[i]) borda[cls] += std::max(0, 5 - rank);
  }
  int best = -1;
  for (int c = 0; c < 5; ++c) {
    if (count[c] == 0) continue;
    if (best < 0 || count[c] > count[best] || (count[c] == count[best] && borda[c] > borda[best])) best = c;
  }
  return best;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = (double(i) + double(j)) / 2.0 + 1.0;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = double(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i] / n;
    my += ry[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

}  // namespace oracle
