#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace zest::clf {

enum class Setting { kZsl, kGzsl };

std::string to_string(Setting s);
Setting setting_from_string(const std::string& name);

/// Accuracy of one method in one setting on one partition.
struct EvalReport {
  std::string method = "zest";
  Setting setting = Setting::kGzsl;
  std::uint64_t seed = 0;
  double accuracy = 0;
  std::size_t total = 0;
  std::vector<int> classes;                         // global class ids, row/column order below
  std::vector<std::string> class_names;
  std::vector<double> per_class_accuracy;           // NaN-free: classes with no test data get 0
  std::vector<std::size_t> per_class_count;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted], indices into `classes`
  std::optional<double> seen_accuracy;              // GZSL only
  std::optional<double> unseen_accuracy;
  std::string note;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

/// Reads a file written by write_reports_jsonl.
std::vector<EvalReport> read_reports_jsonl(const std::filesystem::path& path);

/// Builds a report from true and predicted global class ids. Every entry of
/// `truth` must belong to `classes`; predictions outside it count as errors
/// and are not entered in the confusion matrix.
EvalReport make_report(std::string method, Setting setting, std::span<const int> classes,
                       std::span<const std::string> class_names, std::span<const int> truth,
                       std::span<const int> predicted, std::span<const int> unseen_classes = {});

struct SummaryRow {
  std::string method;
  Setting setting;
  double mean = 0;
  double stddev = 0;  // sample standard deviation; 0 for a single run
  std::size_t runs = 0;
};

/// Groups by (method, setting) in first-appearance order.
std::vector<SummaryRow> summarize(std::span<const EvalReport> reports);

std::string format_table(std::span<const SummaryRow> rows);
void write_summary_csv(const std::filesystem::path& path, std::span<const SummaryRow> rows);
/// One JSON object per line.
void write_reports_jsonl(const std::filesystem::path& path, std::span<const EvalReport> reports);
/// Per-run CSV: method,setting,seed,accuracy,total,seen_accuracy,unseen_accuracy
void write_reports_csv(const std::filesystem::path& path, std::span<const EvalReport> reports);

}  // namespace zest::clf
