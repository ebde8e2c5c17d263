#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ssfo {
namespace metrics {

// Standard extractive-QA normalization: lowercase, strip punctuation,
// collapse whitespace, split on spaces.
std::vector<std::string> normalize(std::string_view text);

// 1 iff some reference's normalized token sequence occurs contiguously in the
// normalized prediction.
int span_em(std::string_view prediction, std::span<const std::string> references);

// Clipped n-gram F1, max over references. n in {1, 2}.
double rouge_n_f1(std::string_view prediction, std::span<const std::string> references, int n);

// LCS-based F1 (exact dynamic programming), max over references.
double rouge_l_f1(std::string_view prediction, std::span<const std::string> references);

// Largest k such that levels 1..k are all satisfied.
int csl(const std::vector<bool>& satisfaction);

// Sample Pearson correlation; nullopt when either variance is zero.
std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys);

// Pearson over average ranks (ties get the mean rank).
std::optional<double> spearman(std::span<const double> xs, std::span<const double> ys);

std::vector<double> average_ranks(std::span<const double> xs);

struct EvalRecord {
  std::string prediction;
  std::vector<std::string> references;
  std::optional<std::vector<bool>> levels;
};

struct EvalSummary {
  double span_em = 0.0;
  double rouge1_f1 = 0.0;
  double rouge2_f1 = 0.0;
  double rougeL_f1 = 0.0;
  std::optional<double> csl_mean;
  std::size_t n = 0;
};

EvalSummary evaluate_records(const std::vector<EvalRecord>& records);

}  // namespace metrics
}  // namespace ssfo
