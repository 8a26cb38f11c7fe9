#include "zest/classifier/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace zest::clf {

std::string to_string(Setting s) { return s == Setting::kZsl ? "ZSL" : "GZSL"; }

Setting setting_from_string(const std::string& name) {
  if (name == "ZSL" || name == "zsl") return Setting::kZsl;
  if (name == "GZSL" || name == "gzsl") return Setting::kGzsl;
  throw std::invalid_argument("unknown setting '" + name + "'");
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j = {{"method", method},
                      {"setting", to_string(setting)},
                      {"seed", seed},
                      {"accuracy", accuracy},
                      {"total", total},
                      {"classes", classes},
                      {"class_names", class_names},
                      {"per_class_accuracy", per_class_accuracy},
                      {"per_class_count", per_class_count},
                      {"confusion", confusion}};
  if (seen_accuracy) j["seen_accuracy"] = *seen_accuracy;
  if (unseen_accuracy) j["unseen_accuracy"] = *unseen_accuracy;
  if (!note.empty()) j["note"] = note;
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.method = j.at("method");
  r.setting = setting_from_string(j.at("setting"));
  r.seed = j.at("seed");
  r.accuracy = j.at("accuracy");
  r.total = j.at("total");
  r.classes = j.at("classes").get<std::vector<int>>();
  r.class_names = j.at("class_names").get<std::vector<std::string>>();
  r.per_class_accuracy = j.at("per_class_accuracy").get<std::vector<double>>();
  r.per_class_count = j.at("per_class_count").get<std::vector<std::size_t>>();
  r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
  if (j.contains("seen_accuracy")) r.seen_accuracy = j.at("seen_accuracy").get<double>();
  if (j.contains("unseen_accuracy")) r.unseen_accuracy = j.at("unseen_accuracy").get<double>();
  r.note = j.value("note", "");
  return r;
}

std::vector<EvalReport> read_reports_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<EvalReport> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(EvalReport::from_json(nlohmann::json::parse(line)));
  }
  return out;
}

EvalReport make_report(std::string method, Setting setting, std::span<const int> classes,
                       std::span<const std::string> class_names, std::span<const int> truth,
                       std::span<const int> predicted, std::span<const int> unseen_classes) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("make_report: length mismatch");
  if (truth.empty()) throw std::invalid_argument("make_report: no test data");
  if (class_names.size() != classes.size()) throw std::invalid_argument("make_report: class name count mismatch");
  auto index_of = [&](int c) -> std::optional<std::size_t> {
    const auto it = std::find(classes.begin(), classes.end(), c);
    if (it == classes.end()) return std::nullopt;
    return static_cast<std::size_t>(it - classes.begin());
  };
  const std::size_t k = classes.size();
  EvalReport r;
  r.method = std::move(method);
  r.setting = setting;
  r.classes.assign(classes.begin(), classes.end());
  r.class_names.assign(class_names.begin(), class_names.end());
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  r.per_class_count.assign(k, 0);
  std::vector<std::size_t> per_class_correct(k, 0);
  std::size_t correct = 0, seen_total = 0, seen_correct = 0, unseen_total = 0, unseen_correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = index_of(truth[i]);
    if (!t) throw std::invalid_argument("test label " + std::to_string(truth[i]) + " is outside the label set");
    ++r.per_class_count[*t];
    const bool hit = truth[i] == predicted[i];
    if (const auto p = index_of(predicted[i])) ++r.confusion[*t][*p];
    if (hit) {
      ++correct;
      ++per_class_correct[*t];
    }
    const bool unseen = std::find(unseen_classes.begin(), unseen_classes.end(), truth[i]) != unseen_classes.end();
    (unseen ? unseen_total : seen_total) += 1;
    (unseen ? unseen_correct : seen_correct) += hit ? 1 : 0;
  }
  r.total = truth.size();
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
  r.per_class_accuracy.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    r.per_class_accuracy[c] =
        r.per_class_count[c] ? static_cast<double>(per_class_correct[c]) / static_cast<double>(r.per_class_count[c]) : 0;
  }
  if (setting == Setting::kGzsl && !unseen_classes.empty()) {
    if (seen_total) r.seen_accuracy = static_cast<double>(seen_correct) / static_cast<double>(seen_total);
    if (unseen_total) r.unseen_accuracy = static_cast<double>(unseen_correct) / static_cast<double>(unseen_total);
  }
  return r;
}

std::vector<SummaryRow> summarize(std::span<const EvalReport> reports) {
  std::vector<SummaryRow> rows;
  std::vector<std::vector<double>> values;
  for (const auto& r : reports) {
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const SummaryRow& s) { return s.method == r.method && s.setting == r.setting; });
    if (it == rows.end()) {
      rows.push_back({r.method, r.setting});
      values.emplace_back();
      it = rows.end() - 1;
    }
    values[static_cast<std::size_t>(it - rows.begin())].push_back(r.accuracy);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& v = values[i];
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    rows[i].mean = mean;
    rows[i].stddev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    rows[i].runs = v.size();
  }
  return rows;
}

std::string format_table(std::span<const SummaryRow> rows) {
  std::string out = "method      setting  accuracy         runs\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-11s %-8s %.4f +- %.4f  %zu\n", r.method.c_str(), to_string(r.setting).c_str(),
                  r.mean, r.stddev, r.runs);
    out += buf;
  }
  return out;
}

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

void write_summary_csv(const std::filesystem::path& path, std::span<const SummaryRow> rows) {
  auto out = open_for_write(path);
  out << "method,setting,mean_accuracy,std_accuracy,runs\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%zu\n", r.method.c_str(), to_string(r.setting).c_str(), r.mean,
                  r.stddev, r.runs);
    out << buf;
  }
}

void write_reports_jsonl(const std::filesystem::path& path, std::span<const EvalReport> reports) {
  auto out = open_for_write(path);
  for (const auto& r : reports) out << r.to_json().dump() << '\n';
}

void write_reports_csv(const std::filesystem::path& path, std::span<const EvalReport> reports) {
  auto out = open_for_write(path);
  out << "method,setting,seed,accuracy,total,seen_accuracy,unseen_accuracy\n";
  auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char b[32];
    std::snprintf(b, sizeof b, "%.6f", *v);
    return std::string(b);
  };
  char buf[160];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s,%s,%llu,%.6f,%zu,", r.method.c_str(), to_string(r.setting).c_str(),
                  static_cast<unsigned long long>(r.seed), r.accuracy, r.total);
    out << buf << opt(r.seen_accuracy) << ',' << opt(r.unseen_accuracy) << '\n';
  }
}

}  // namespace zest::clf
