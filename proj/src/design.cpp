#include "mcemssm/design.hpp"

namespace mcemssm {

ExpandedModel ExpandedModel::build(const ModelSpec& spec, int T) {
  spec.validate(T);
  ExpandedModel em;
  em.spec = spec;
  em.T = T;
  em.base_to_columns.resize(spec.base_dim());

  const int base_dim = spec.base_dim();
  for (int b = 0; b < base_dim; ++b) {
    int outcome_lag = (b >= 1 && b <= spec.q) ? b : 0;
    switch (spec.roles[b]) {
      case CoefficientRole::Static:
      case CoefficientRole::RandomWalk: {
        Column col;
        col.base_coef = b;
        col.seg_begin = 1;
        col.seg_end = T;
        col.outcome_lag = outcome_lag;
        col.random_walk = spec.roles[b] == CoefficientRole::RandomWalk;
        em.base_to_columns[b].push_back(static_cast<int>(em.columns.size()));
        em.columns.push_back(col);
        break;
      }
      case CoefficientRole::PeriodicStable: {
        std::vector<int> cps;
        if (auto it = spec.segments.find(b); it != spec.segments.end())
          cps = it->second;
        int begin = 1;
        for (std::size_t k = 0; k <= cps.size(); ++k) {
          int end = (k < cps.size()) ? cps[k] : T;
          Column col;
          col.base_coef = b;
          col.seg_begin = begin;
          col.seg_end = end;
          col.outcome_lag = outcome_lag;
          col.random_walk = false;
          em.base_to_columns[b].push_back(static_cast<int>(em.columns.size()));
          em.columns.push_back(col);
          begin = end + 1;
        }
        break;
      }
    }
  }
  em.d = static_cast<int>(em.columns.size());
  return em;
}

int ExpandedModel::column_at(int base_coef, int t) const {
  for (int c : base_to_columns[base_coef]) {
    if (t >= columns[c].seg_begin && t <= columns[c].seg_end) return c;
  }
  return -1;
}

namespace {

// Base regressor value at (base coefficient, time t), before segment
// gating; the lag source time is reported so missingness can be
// tracked for outcome lags.
double base_value(const TimeSeriesDataset& data, const ModelSpec& spec, int b,
                  int t, int* lag_source_t) {
  *lag_source_t = 0;
  if (b == 0) return 1.0;
  if (b <= spec.q) {
    *lag_source_t = t - b;
    return data.y(t - b - 1);
  }
  int k = b - 1 - spec.q;
  if (k < (spec.p + 1) * spec.n_exposures) {
    int e = k / (spec.p + 1), lag = k % (spec.p + 1);
    return data.exposures(t - lag - 1, e);
  }
  k -= (spec.p + 1) * spec.n_exposures;
  int c = k / (spec.o + 1), lag = k % (spec.o + 1);
  return data.covariates(t - lag - 1, c);
}

}  // namespace

std::vector<DesignRow> build_design(const TimeSeriesDataset& data,
                                    const ExpandedModel& em,
                                    const std::map<int, double>& lag_fill) {
  data.validate();
  const ModelSpec& spec = em.spec;
  const int T = data.length();
  if (em.T != T) throw std::invalid_argument("build_design: model/data length mismatch");

  std::vector<DesignRow> rows;
  rows.reserve(T - spec.q);
  for (int t = spec.q + 1; t <= T; ++t) {
    DesignRow row;
    row.t = t;
    row.values = VectorXd::Zero(em.d);
    row.lag_missing.assign(em.d, 0);
    for (int c = 0; c < em.d; ++c) {
      const auto& col = em.columns[c];
      if (t < col.seg_begin || t > col.seg_end) continue;
      int src = 0;
      double v = base_value(data, spec, col.base_coef, t, &src);
      if (src > 0 && !data.y_observed[src - 1]) {
        auto it = lag_fill.find(src);
        if (it == lag_fill.end())
          throw std::invalid_argument("build_design: no fill value for missing Y at t=" +
                                      std::to_string(src));
        v = it->second;
        row.lag_missing[c] = 1;
        row.any_lag_missing = true;
      }
      row.values(c) = v;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void refresh_lag_slots(std::vector<DesignRow>& rows, const ExpandedModel& em,
                       const VectorXd& y_filled) {
  for (auto& row : rows) {
    if (!row.any_lag_missing) continue;
    for (int c = 0; c < em.d; ++c) {
      if (!row.lag_missing[c]) continue;
      row.values(c) = y_filled(row.t - em.columns[c].outcome_lag - 1);
    }
  }
}

}  // namespace mcemssm
