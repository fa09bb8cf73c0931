#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace minikd {

struct MetricsRow {
  long long step = 0;
  std::string stage;
  double loss_total = 0.0;
  double loss_latent = 0.0;
  double loss_soft = 0.0;
  double loss_hard = 0.0;
  std::optional<double> dev_metric;
  std::int64_t timestamp = 0;  // unix seconds
};

/// Tab-separated with a header row; flushed after every append so an
/// interrupted run keeps its history.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void append(const MetricsRow& row);

 private:
  std::string path_;
};

void write_metrics(const std::vector<MetricsRow>& rows, const std::string& path);
std::vector<MetricsRow> read_metrics(const std::string& path);

struct Aggregate {
  double mean = 0.0;
  double std_dev = 0.0;
  int count = 0;
};

/// Collects per-run summary.json files (flat string->number maps) from run
/// directories and reduces each key to mean and (population) std.
std::map<std::string, Aggregate> aggregate_runs(const std::vector<std::string>& run_dirs);

void write_summary(const std::string& dir, const std::map<std::string, double>& values);
std::map<std::string, double> read_summary(const std::string& dir);

}  // namespace minikd
