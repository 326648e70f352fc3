#pragma once

#include <span>
#include <string>

#include "strucdiff/evaluation.hpp"

namespace strucdiff {

// {"reports":[{"masking_fraction":f,"model":{path:{metric,value,stderr,count}},"baseline":{...}}]}
std::string metric_reports_json(std::span<const MetricReport> reports);

// One row per (fraction, predictor, leaf) with space-padded columns.
std::string metric_reports_aligned_csv(std::span<const MetricReport> reports);

// Plot-ready long format: fraction,leaf,predictor,metric,value,stderr,count.
std::string metric_reports_long_csv(std::span<const MetricReport> reports);

}  // namespace strucdiff
