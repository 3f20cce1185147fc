#pragma once

#include <iosfwd>
#include <string>

#include "mcemssm/simulator.hpp"
#include "mcemssm/types.hpp"

namespace mcemssm {

/// Dataset CSV layout: t,y,y_observed,a0..,c0.. with one row per time
/// point, t consecutive from 1. Missing outcomes are empty y cells;
/// the y_observed column makes the mask explicit on top of that.
void write_dataset_csv(std::ostream& os, const TimeSeriesDataset& data);
void write_dataset_csv(const std::string& path, const TimeSeriesDataset& data);

/// Reads the layout above. y_observed is optional (empty y cells mark
/// missing entries either way); a*/c* columns may be absent. Throws
/// std::runtime_error on malformed input, non-consecutive time
/// indices, or an all-missing outcome.
TimeSeriesDataset read_dataset_csv(std::istream& is);
TimeSeriesDataset read_dataset_csv(const std::string& path);

void write_truth_csv(std::ostream& os, const TruthPaths& truth);
void write_truth_csv(const std::string& path, const TruthPaths& truth);

/// Shortest exact decimal form of a double (%.17g).
std::string format_double(double v);

}  // namespace mcemssm
