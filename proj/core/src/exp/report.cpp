#include "effssl/exp/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace effssl::exp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

ReportSpec spec_from_kv(const std::map<std::string, std::string>& kv) {
  ReportSpec spec;
  for (const auto& [key, value] : kv) {
    if (key == "metrics" || key == "report.metrics") {
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) spec.metrics.push_back(item);
      }
    } else if (key == "x" || key == "report.x") {
      spec.x = value;
    } else if (key == "transform" || key == "report.transform") {
      spec.transform = value;
    } else if (key == "reference_x" || key == "report.reference_x") {
      spec.reference_x = std::stod(value);
    } else if (key == "aggregate" || key == "report.aggregate") {
      spec.aggregate = value;
    } else {
      throw std::invalid_argument("unknown report spec key: " + key);
    }
  }
  if (spec.metrics.empty()) throw std::invalid_argument("report spec: metrics list required");
  if (spec.x != "step" && spec.x != "epoch")
    throw std::invalid_argument("report spec: x must be step or epoch");
  if (spec.transform != "none" && spec.transform != "gain-vs-reference")
    throw std::invalid_argument("report spec: unknown transform " + spec.transform);
  if (spec.aggregate != "none" && spec.aggregate != "mean-std")
    throw std::invalid_argument("report spec: unknown aggregate " + spec.aggregate);
  return spec;
}

}  // namespace

ReportSpec parse_report_spec_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line, section;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("report spec: expected key = value, got: " + line);
    std::string key = trim(line.substr(0, eq));
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
    kv[key] = trim(line.substr(eq + 1));
  }
  return spec_from_kv(kv);
}

ReportSpec parse_report_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report spec " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_report_spec_text(ss.str());
}

namespace {

struct Row {
  std::string run_id;
  double x = 0.0;
  std::string metric;
  double value = 0.0;
};

std::string run_id_for(const std::string& file) {
  const fs::path p(file);
  const std::string parent = p.parent_path().filename().string();
  return parent.empty() ? p.stem().string() : parent;
}

}  // namespace

PlotData emit_plot_data(const std::vector<std::string>& jsonl_files, const ReportSpec& spec) {
  PlotData out;
  std::vector<Row> rows;

  for (const std::string& file : jsonl_files) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open metrics file " + file);
    const std::string run_id = run_id_for(file);

    // For x = epoch the last record per epoch wins.
    std::map<std::pair<std::string, int64_t>, double> last_per_epoch;
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error&) {
        ++out.skipped_records;
        continue;
      }
      if (j.contains("protocol")) {  // evaluation record
        const std::string metric =
            j.value("protocol", "") + "_" + j.value("layer", "") + "_" + j.value("metric", "");
        for (const std::string& want : spec.metrics) {
          if (want == metric || want == j.value("metric", "")) {
            rows.push_back({run_id, 0.0, want, j.value("value", 0.0)});
          }
        }
        continue;
      }
      if (!j.contains("step")) {
        ++out.skipped_records;
        continue;
      }
      for (const std::string& want : spec.metrics) {
        if (!j.contains(want)) continue;
        const double v = j.at(want).get<double>();
        if (spec.x == "epoch") {
          last_per_epoch[{want, j.at("epoch").get<int64_t>()}] = v;
        } else {
          rows.push_back({run_id, static_cast<double>(j.at("step").get<int64_t>()), want, v});
        }
      }
    }
    for (const auto& [key, v] : last_per_epoch)
      rows.push_back({run_id, static_cast<double>(key.second), key.first, v});
  }

  if (spec.transform == "gain-vs-reference") {
    std::map<std::pair<std::string, std::string>, double> reference;
    for (const Row& r : rows)
      if (r.x == spec.reference_x) reference[{r.run_id, r.metric}] = r.value;
    for (Row& r : rows) {
      auto it = reference.find({r.run_id, r.metric});
      if (it == reference.end())
        throw std::runtime_error("gain-vs-reference: run " + r.run_id + " metric " + r.metric +
                                 " has no record at reference x");
      r.value -= it->second;
    }
  }

  std::ostringstream csv;
  if (spec.aggregate == "mean-std") {
    std::map<std::pair<double, std::string>, std::vector<double>> groups;
    for (const Row& r : rows) groups[{r.x, r.metric}].push_back(r.value);
    csv << "x,metric,mean,std,n\n";
    for (const auto& [key, values] : groups) {
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= static_cast<double>(values.size());
      double var = 0.0;
      for (double v : values) var += (v - mean) * (v - mean);
      const double stddev =
          values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
      csv << key.first << "," << key.second << "," << mean << "," << stddev << ","
          << values.size() << "\n";
    }
  } else {
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
      if (a.run_id != b.run_id) return a.run_id < b.run_id;
      if (a.metric != b.metric) return a.metric < b.metric;
      return a.x < b.x;
    });
    csv << "run_id,x,metric,value\n";
    for (const Row& r : rows)
      csv << r.run_id << "," << r.x << "," << r.metric << "," << r.value << "\n";
  }
  out.csv = csv.str();
  return out;
}

}  // namespace effssl::exp
