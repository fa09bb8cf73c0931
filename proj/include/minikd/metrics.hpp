#pragma once

#include <vector>

namespace minikd {

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

/// Needs at least two points and nonzero variance on both sides.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Positive class is 1.
double f1_binary(const std::vector<int>& preds, const std::vector<int>& labels);

/// Matthews correlation; 0 when any marginal is degenerate.
double mcc(const std::vector<int>& preds, const std::vector<int>& labels);

}  // namespace minikd
