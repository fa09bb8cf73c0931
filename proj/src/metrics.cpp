#include "minikd/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace minikd {

namespace {

void require_paired(std::size_t a, std::size_t b, const char* op) {
  if (a != b) throw std::invalid_argument(std::string(op) + ": length mismatch");
  if (a == 0) throw std::invalid_argument(std::string(op) + ": empty input");
}

}  // namespace

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  require_paired(preds.size(), labels.size(), "accuracy");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == labels[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  require_paired(x.size(), y.size(), "pearson");
  if (x.size() < 2) throw std::invalid_argument("pearson: needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

namespace {

struct Confusion {
  double tp = 0, tn = 0, fp = 0, fn = 0;
};

Confusion confusion(const std::vector<int>& preds, const std::vector<int>& labels,
                    const char* op) {
  require_paired(preds.size(), labels.size(), op);
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] != 0 && preds[i] != 1) throw std::invalid_argument(std::string(op) + ": predictions must be binary");
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument(std::string(op) + ": labels must be binary");
    if (preds[i] == 1 && labels[i] == 1) c.tp += 1;
    if (preds[i] == 0 && labels[i] == 0) c.tn += 1;
    if (preds[i] == 1 && labels[i] == 0) c.fp += 1;
    if (preds[i] == 0 && labels[i] == 1) c.fn += 1;
  }
  return c;
}

}  // namespace

double f1_binary(const std::vector<int>& preds, const std::vector<int>& labels) {
  const Confusion c = confusion(preds, labels, "f1_binary");
  const double denom = 2.0 * c.tp + c.fp + c.fn;
  if (denom == 0.0) return 0.0;
  return 2.0 * c.tp / denom;
}

double mcc(const std::vector<int>& preds, const std::vector<int>& labels) {
  const Confusion c = confusion(preds, labels, "mcc");
  const double denom = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn);
  if (denom == 0.0) return 0.0;  // an all-one-class predictor is no better than random
  return (c.tp * c.tn - c.fp * c.fn) / std::sqrt(denom);
}

}  // namespace minikd
