#pragma once

#include <string>
#include <vector>

namespace effssl::exp {

/// What to extract from metrics/eval JSONL files and how to shape it.
struct ReportSpec {
  std::vector<std::string> metrics;   // e.g. total_loss, grad_snr, top1
  std::string x = "step";             // step | epoch
  std::string transform = "none";     // none | gain-vs-reference
  double reference_x = 0.0;           // reference epoch/step for the gain transform
  std::string aggregate = "none";     // none | mean-std
};

ReportSpec parse_report_spec(const std::string& path);
ReportSpec parse_report_spec_text(const std::string& text);

struct PlotData {
  std::string csv;
  int skipped_records = 0;  // malformed JSONL lines
};

/// Tidy CSV from JSONL inputs: one row per (run, x, metric). Training metrics
/// reduce to the last record per epoch when x = epoch; eval records map to a
/// single point. gain-vs-reference subtracts each run's value at reference_x;
/// mean-std groups rows across runs into mean and sample-stddev columns.
/// Pure function of its inputs.
PlotData emit_plot_data(const std::vector<std::string>& jsonl_files, const ReportSpec& spec);

}  // namespace effssl::exp
