#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace entente {

// Anomaly score is 1 - decoder edge probability, so higher means more
// suspicious and labels mark known-malicious edges.
struct ScoredEdges {
  std::vector<double> scores;
  std::vector<int> labels;
};

namespace detail {

inline void check_scored(const ScoredEdges& s) {
  if (s.scores.size() != s.labels.size())
    throw std::invalid_argument("scores and labels differ in length");
  for (double x : s.scores)
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite score");
  for (int l : s.labels)
    if (l != 0 && l != 1) throw std::invalid_argument("label must be 0 or 1");
}

inline std::size_t count_positives(const ScoredEdges& s) {
  return static_cast<std::size_t>(std::count(s.labels.begin(), s.labels.end(), 1));
}

inline std::vector<std::size_t> order_desc(const ScoredEdges& s) {
  std::vector<std::size_t> idx(s.scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return s.scores[a] > s.scores[b];
  });
  return idx;
}

}  // namespace detail

// Step-sum AP over descending unique thresholds, equal scores grouped at one
// threshold.
inline double average_precision(const ScoredEdges& s) {
  detail::check_scored(s);
  auto positives = detail::count_positives(s);
  if (positives == 0) throw std::invalid_argument("average_precision needs a positive");
  auto idx = detail::order_desc(s);
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, flagged = 0, i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && s.scores[idx[j]] == s.scores[idx[i]]) {
      tp += static_cast<std::size_t>(s.labels[idx[j]]);
      ++flagged;
      ++j;
    }
    double recall = static_cast<double>(tp) / static_cast<double>(positives);
    double precision = static_cast<double>(tp) / static_cast<double>(flagged);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

// Rank statistic P(pos > neg) + P(pos == neg)/2 via average ranks of ties.
inline double roc_auc(const ScoredEdges& s) {
  detail::check_scored(s);
  auto positives = detail::count_positives(s);
  auto negatives = s.labels.size() - positives;
  if (positives == 0 || negatives == 0)
    throw std::invalid_argument("roc_auc needs both classes");
  std::vector<std::size_t> idx(s.scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return s.scores[a] < s.scores[b];
  });
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < idx.size() && s.scores[idx[j]] == s.scores[idx[i]]) {
      pos_in_group += static_cast<std::size_t>(s.labels[idx[j]]);
      ++j;
    }
    double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    pos_rank_sum += avg_rank * static_cast<double>(pos_in_group);
    i = j;
  }
  double p = static_cast<double>(positives);
  double n = static_cast<double>(negatives);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

struct PrPoint {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

// One point per unique threshold, descending; step-integrating the points
// (sum of recall increments times precision) reproduces average_precision.
inline std::vector<PrPoint> pr_curve(const ScoredEdges& s) {
  detail::check_scored(s);
  auto positives = detail::count_positives(s);
  if (positives == 0) throw std::invalid_argument("pr_curve needs a positive");
  auto idx = detail::order_desc(s);
  std::vector<PrPoint> pts;
  std::size_t tp = 0, flagged = 0, i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && s.scores[idx[j]] == s.scores[idx[i]]) {
      tp += static_cast<std::size_t>(s.labels[idx[j]]);
      ++flagged;
      ++j;
    }
    pts.push_back({s.scores[idx[i]],
                   static_cast<double>(tp) / static_cast<double>(positives),
                   static_cast<double>(tp) / static_cast<double>(flagged)});
    i = j;
  }
  return pts;
}

struct ThresholdObjective {
  enum class Kind { f1, fpr_target };
  Kind kind = Kind::f1;
  double fpr_limit = 0.0;

  static ThresholdObjective f1() { return {Kind::f1, 0.0}; }
  static ThresholdObjective fpr_target(double x) { return {Kind::fpr_target, x}; }
};

struct SelectedThreshold {
  double tau = 0.0;
  bool degenerate = false;
};

struct Confusion {
  long tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  // fpr_printed follows the FP / (TP + FP) form some writeups use (it equals
  // 1 - precision); fpr_conventional is FP / (FP + TN).
  double fpr_printed = 0.0;
  double fpr_conventional = 0.0;
  bool degenerate = false;  // some ratio had an empty denominator
};

// An edge counts as detected when its score is >= tau.
inline Confusion confusion(const ScoredEdges& s, double tau) {
  detail::check_scored(s);
  Confusion c;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    bool flagged = s.scores[i] >= tau;
    if (s.labels[i] == 1)
      ++(flagged ? c.tp : c.fn);
    else
      ++(flagged ? c.fp : c.tn);
  }
  auto ratio = [&](long num, long den) {
    if (den == 0) {
      c.degenerate = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  c.precision = ratio(c.tp, c.tp + c.fp);
  c.recall = ratio(c.tp, c.tp + c.fn);
  c.fpr_printed = ratio(c.fp, c.tp + c.fp);
  c.fpr_conventional = ratio(c.fp, c.fp + c.tn);
  return c;
}

namespace detail {

// Unique scores plus the midpoints between adjacent ones, ascending. A
// midpoint flags the same set as the score above it, so the smallest-tau tie
// rule lands in the gap rather than on a data point.
inline std::vector<double> threshold_candidates(const ScoredEdges& s) {
  std::vector<double> uniq = s.scores;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  std::vector<double> cand;
  cand.reserve(uniq.size() * 2);
  for (std::size_t i = 0; i < uniq.size(); ++i) {
    if (i) {
      double mid = uniq[i - 1] + (uniq[i] - uniq[i - 1]) / 2.0;
      if (mid > uniq[i - 1] && mid < uniq[i]) cand.push_back(mid);
    }
    cand.push_back(uniq[i]);
  }
  return cand;
}

}  // namespace detail

inline SelectedThreshold select_threshold(const ScoredEdges& validation,
                                          const ThresholdObjective& objective) {
  detail::check_scored(validation);
  auto positives = detail::count_positives(validation);
  if (positives == 0 || positives == validation.labels.size())
    throw std::invalid_argument("select_threshold needs both classes");
  auto cand = detail::threshold_candidates(validation);
  if (cand.size() == 1) return {cand[0], true};

  SelectedThreshold out;
  if (objective.kind == ThresholdObjective::Kind::f1) {
    double best_f1 = -1.0;
    for (double tau : cand) {
      auto c = confusion(validation, tau);
      double denom = 2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fp) +
                     static_cast<double>(c.fn);
      double f1 = denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / denom;
      if (f1 > best_f1) {
        best_f1 = f1;
        out.tau = tau;
      }
    }
    return out;
  }

  // Smallest tau whose conventional FPR meets the target; flagging nothing
  // always does, so fall back just above the top score.
  for (double tau : cand) {
    auto c = confusion(validation, tau);
    if (c.fpr_conventional <= objective.fpr_limit) {
      out.tau = tau;
      return out;
    }
  }
  out.tau = std::nextafter(cand.back(), std::numeric_limits<double>::infinity());
  out.degenerate = true;
  return out;
}

// Fraction of known-malicious edges that slip under the threshold.
inline double attack_success_rate(const std::vector<double>& malicious_scores,
                                  double tau) {
  if (malicious_scores.empty())
    throw std::invalid_argument("attack_success_rate needs scores");
  std::size_t evaded = 0;
  for (double x : malicious_scores) {
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite score");
    if (x < tau) ++evaded;
  }
  return static_cast<double>(evaded) / static_cast<double>(malicious_scores.size());
}

}  // namespace entente
