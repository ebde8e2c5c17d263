#pragma once

#include <span>
#include <vector>

namespace ssfo {

// log(sum exp(x_i)), max-shifted
double log_sum_exp(std::span<const double> xs);

std::vector<double> log_softmax(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits);

// log(1 + e^x); never exponentiates a large positive argument
double softplus(double x);

// 1 / (1 + e^-x), stable in both tails
double sigmoid(double x);

}  // namespace ssfo
