#pragma once

#include "mcemssm/types.hpp"

namespace mcemssm {

/// One analysis row: the regressor vector F_t for time t plus a mask
/// marking which outcome-lag slots originate from missing outcomes.
/// Masked slots hold the current fill value, not an observed one.
struct DesignRow {
  int t = 0;                            // 1-based time index
  VectorXd values;                      // length = expanded dimension
  std::vector<std::uint8_t> lag_missing;  // per expanded column
  bool any_lag_missing = false;
};

/// Segment-expanded model: every periodic-stable base coefficient is
/// re-encoded as one static coefficient per segment, with the design
/// value gated by the segment indicator. Static and random-walk
/// coefficients map to a single column each; G = I throughout.
struct ExpandedModel {
  ModelSpec spec;
  int T = 0;
  int d = 0;

  struct Column {
    int base_coef = 0;
    int seg_begin = 1;   // active for seg_begin <= t <= seg_end (1-based)
    int seg_end = 0;
    int outcome_lag = 0; // 0 if not an outcome-lag column
    bool random_walk = false;
  };
  std::vector<Column> columns;
  std::vector<std::vector<int>> base_to_columns;  // per base coefficient

  static ExpandedModel build(const ModelSpec& spec, int T);

  /// Expanded column active at (base coefficient, time t); -1 when t
  /// falls outside every segment (cannot happen for valid segments).
  int column_at(int base_coef, int t) const;
};

/// Builds rows for t = q+1..T. Lag slots referencing a missing
/// outcome are filled from lag_fill (keyed by the missing time index)
/// and flagged in the mask.
std::vector<DesignRow> build_design(const TimeSeriesDataset& data,
                                    const ExpandedModel& em,
                                    const std::map<int, double>& lag_fill);

/// Rewrites every masked lag slot from y_filled (length T, missing
/// entries already imputed). Used inside the Gibbs sweep where only
/// the imputations change between passes.
void refresh_lag_slots(std::vector<DesignRow>& rows, const ExpandedModel& em,
                       const VectorXd& y_filled);

}  // namespace mcemssm
