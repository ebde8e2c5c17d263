#include "ssfo/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>

#include "ssfo/errors.hpp"

namespace ssfo {
namespace metrics {

std::vector<std::string> normalize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || std::ispunct(c)) {
      if (!cur.empty()) {
        tokens.push_back(std::move(cur));
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) {
    tokens.push_back(std::move(cur));
  }
  return tokens;
}

namespace {

bool contains_contiguous(const std::vector<std::string>& haystack,
                         const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > haystack.size()) {
    return false;
  }
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), haystack.begin() + i)) {
      return true;
    }
  }
  return false;
}

double f1(double precision, double recall) {
  if (precision + recall == 0.0) {
    return 0.0;
  }
  return 2.0 * precision * recall / (precision + recall);
}

std::map<std::vector<std::string>, int> ngram_counts(const std::vector<std::string>& tokens,
                                                     int n) {
  std::map<std::vector<std::string>, int> counts;
  if (static_cast<int>(tokens.size()) < n) {
    return counts;
  }
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)]++;
  }
  return counts;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      if (a[i - 1] == b[j - 1]) {
        cur[j] = prev[j - 1] + 1;
      } else {
        cur[j] = std::max(prev[j], cur[j - 1]);
      }
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

int span_em(std::string_view prediction, std::span<const std::string> references) {
  if (references.empty()) {
    throw precondition_error("span_em: references must be non-empty");
  }
  const std::vector<std::string> pred = normalize(prediction);
  for (const std::string& ref : references) {
    if (contains_contiguous(pred, normalize(ref))) {
      return 1;
    }
  }
  return 0;
}

double rouge_n_f1(std::string_view prediction, std::span<const std::string> references,
                  int n) {
  if (n != 1 && n != 2) {
    throw precondition_error("rouge_n_f1: n must be 1 or 2");
  }
  if (references.empty()) {
    throw precondition_error("rouge_n_f1: references must be non-empty");
  }
  const std::vector<std::string> pred = normalize(prediction);
  const auto pred_counts = ngram_counts(pred, n);
  int pred_total = 0;
  for (const auto& [gram, c] : pred_counts) {
    pred_total += c;
  }
  double best = 0.0;
  for (const std::string& ref_text : references) {
    const std::vector<std::string> ref = normalize(ref_text);
    const auto ref_counts = ngram_counts(ref, n);
    int ref_total = 0;
    int overlap = 0;
    for (const auto& [gram, c] : ref_counts) {
      ref_total += c;
      auto it = pred_counts.find(gram);
      if (it != pred_counts.end()) {
        overlap += std::min(c, it->second);  // clipped
      }
    }
    if (pred_total == 0 || ref_total == 0) {
      continue;  // score 0 against this reference
    }
    const double p = static_cast<double>(overlap) / pred_total;
    const double r = static_cast<double>(overlap) / ref_total;
    best = std::max(best, f1(p, r));
  }
  return best;
}

double rouge_l_f1(std::string_view prediction, std::span<const std::string> references) {
  if (references.empty()) {
    throw precondition_error("rouge_l_f1: references must be non-empty");
  }
  const std::vector<std::string> pred = normalize(prediction);
  double best = 0.0;
  for (const std::string& ref_text : references) {
    const std::vector<std::string> ref = normalize(ref_text);
    if (pred.empty() || ref.empty()) {
      continue;
    }
    const std::size_t lcs = lcs_length(pred, ref);
    const double p = static_cast<double>(lcs) / pred.size();
    const double r = static_cast<double>(lcs) / ref.size();
    best = std::max(best, f1(p, r));
  }
  return best;
}

int csl(const std::vector<bool>& satisfaction) {
  if (satisfaction.empty()) {
    throw precondition_error("csl: satisfaction list must be non-empty");
  }
  int k = 0;
  for (bool s : satisfaction) {
    if (!s) {
      break;
    }
    ++k;
  }
  return k;
}

std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw precondition_error("pearson: length mismatch");
  }
  if (xs.size() < 2) {
    throw precondition_error("pearson: need at least 2 points");
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    return std::nullopt;  // degenerate: zero variance
  }
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> average_ranks(std::span<const double> xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&xs](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) {
      ++j;
    }
    const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    for (std::size_t k = i; k <= j; ++k) {
      ranks[order[k]] = mean_rank;
    }
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw precondition_error("spearman: length mismatch");
  }
  const std::vector<double> rx = average_ranks(xs);
  const std::vector<double> ry = average_ranks(ys);
  return pearson(rx, ry);
}

EvalSummary evaluate_records(const std::vector<EvalRecord>& records) {
  EvalSummary s;
  s.n = records.size();
  if (records.empty()) {
    return s;
  }
  double csl_sum = 0.0;
  std::size_t csl_n = 0;
  for (const EvalRecord& r : records) {
    s.span_em += span_em(r.prediction, r.references);
    s.rouge1_f1 += rouge_n_f1(r.prediction, r.references, 1);
    s.rouge2_f1 += rouge_n_f1(r.prediction, r.references, 2);
    s.rougeL_f1 += rouge_l_f1(r.prediction, r.references);
    if (r.levels.has_value()) {
      csl_sum += csl(*r.levels);
      ++csl_n;
    }
  }
  const double n = static_cast<double>(records.size());
  s.span_em /= n;
  s.rouge1_f1 /= n;
  s.rouge2_f1 /= n;
  s.rougeL_f1 /= n;
  if (csl_n > 0) {
    s.csl_mean = csl_sum / static_cast<double>(csl_n);
  }
  return s;
}

}  // namespace metrics
}  // namespace ssfo
