#include "minikd/report.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace minikd {

namespace {

constexpr const char* kHeader =
    "step\tstage\tloss_total\tloss_latent\tloss_soft\tloss_hard\tdev_metric\ttimestamp";

std::string format_row(const MetricsRow& row) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << row.step << '\t' << row.stage << '\t' << row.loss_total << '\t' << row.loss_latent
     << '\t' << row.loss_soft << '\t' << row.loss_hard << '\t';
  if (row.dev_metric) os << *row.dev_metric;
  os << '\t' << row.timestamp;
  return os.str();
}

}  // namespace

MetricsWriter::MetricsWriter(const std::string& path) : path_(path) {
  std::ofstream os(path_, std::ios::trunc);
  if (!os) throw std::runtime_error("metrics: cannot write " + path_);
  os << kHeader << "\n";
  os.flush();
}

void MetricsWriter::append(const MetricsRow& row) {
  std::ofstream os(path_, std::ios::app);
  if (!os) throw std::runtime_error("metrics: cannot append to " + path_);
  os << format_row(row) << "\n";
  os.flush();
  if (!os) throw std::runtime_error("metrics: write failed for " + path_);
}

void write_metrics(const std::vector<MetricsRow>& rows, const std::string& path) {
  MetricsWriter writer(path);
  for (const MetricsRow& row : rows) writer.append(row);
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("metrics: cannot read " + path);
  std::string line;
  if (!std::getline(is, line) || line != kHeader) {
    throw std::runtime_error("metrics: missing or unexpected header in " + path);
  }
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 8) throw std::runtime_error("metrics: malformed row in " + path);
    MetricsRow row;
    row.step = std::stoll(fields[0]);
    row.stage = fields[1];
    row.loss_total = std::stod(fields[2]);
    row.loss_latent = std::stod(fields[3]);
    row.loss_soft = std::stod(fields[4]);
    row.loss_hard = std::stod(fields[5]);
    if (!fields[6].empty()) row.dev_metric = std::stod(fields[6]);
    row.timestamp = std::stoll(fields[7]);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_summary(const std::string& dir, const std::map<std::string, double>& values) {
  nlohmann::json j(values);
  std::ofstream os(dir + "/summary.json", std::ios::trunc);
  if (!os) throw std::runtime_error("summary: cannot write " + dir + "/summary.json");
  os << j.dump(2) << "\n";
}

std::map<std::string, double> read_summary(const std::string& dir) {
  std::ifstream is(dir + "/summary.json");
  if (!is) throw std::runtime_error("summary: cannot read " + dir + "/summary.json");
  nlohmann::json j;
  is >> j;
  std::map<std::string, double> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.value().is_number()) out[it.key()] = it.value().get<double>();
  }
  return out;
}

std::map<std::string, Aggregate> aggregate_runs(const std::vector<std::string>& run_dirs) {
  if (run_dirs.empty()) throw std::invalid_argument("aggregate_runs: no run directories");
  std::map<std::string, std::vector<double>> samples;
  for (const std::string& dir : run_dirs) {
    for (const auto& [key, value] : read_summary(dir)) samples[key].push_back(value);
  }
  std::map<std::string, Aggregate> out;
  for (const auto& [key, values] : samples) {
    Aggregate agg;
    agg.count = static_cast<int>(values.size());
    for (double v : values) agg.mean += v;
    agg.mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
    agg.std_dev = std::sqrt(ss / static_cast<double>(values.size()));
    out[key] = agg;
  }
  return out;
}

}  // namespace minikd
