#include "mcemssm/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace mcemssm {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& s, int line_no, const std::string& col) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("csv: line " + std::to_string(line_no) +
                             ": bad numeric value '" + s + "' in column " + col);
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("csv: cannot open '" + path + "' for writing");
  return os;
}

}  // namespace

void write_dataset_csv(std::ostream& os, const TimeSeriesDataset& data) {
  data.validate();
  os << "t,y,y_observed";
  for (int e = 0; e < data.n_exposures(); ++e) os << ",a" << e;
  for (int c = 0; c < data.n_covariates(); ++c) os << ",c" << c;
  os << '\n';
  for (int t = 1; t <= data.length(); ++t) {
    os << t << ',';
    if (data.y_observed[t - 1]) os << format_double(data.y(t - 1));
    os << ',' << static_cast<int>(data.y_observed[t - 1]);
    for (int e = 0; e < data.n_exposures(); ++e)
      os << ',' << format_double(data.exposures(t - 1, e));
    for (int c = 0; c < data.n_covariates(); ++c)
      os << ',' << format_double(data.covariates(t - 1, c));
    os << '\n';
  }
}

void write_dataset_csv(const std::string& path, const TimeSeriesDataset& data) {
  auto os = open_out(path);
  write_dataset_csv(os, data);
}

TimeSeriesDataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("csv: empty file");
  std::vector<std::string> header = split_line(line);

  int t_col = -1, y_col = -1, obs_col = -1;
  std::vector<int> a_cols, c_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string& h = header[i];
    if (h == "t") t_col = static_cast<int>(i);
    else if (h == "y") y_col = static_cast<int>(i);
    else if (h == "y_observed") obs_col = static_cast<int>(i);
    else if (!h.empty() && h[0] == 'a') a_cols.push_back(static_cast<int>(i));
    else if (!h.empty() && h[0] == 'c') c_cols.push_back(static_cast<int>(i));
    else throw std::runtime_error("csv: unknown column '" + h + "'");
  }
  if (t_col < 0 || y_col < 0) throw std::runtime_error("csv: need columns t and y");

  std::vector<double> y;
  std::vector<std::uint8_t> observed;
  std::vector<std::vector<double>> a(a_cols.size()), c(c_cols.size());
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("csv: line " + std::to_string(line_no) +
                               ": expected " + std::to_string(header.size()) + " cells");
    int t = static_cast<int>(parse_double(cells[t_col], line_no, "t"));
    if (t != static_cast<int>(y.size()) + 1)
      throw std::runtime_error("csv: line " + std::to_string(line_no) +
                               ": time index must run consecutively from 1");
    bool has_y = !cells[y_col].empty();
    bool obs = has_y;
    if (obs_col >= 0) {
      obs = parse_double(cells[obs_col], line_no, "y_observed") != 0.0;
      if (obs && !has_y)
        throw std::runtime_error("csv: line " + std::to_string(line_no) +
                                 ": observed outcome with empty y cell");
    }
    y.push_back(has_y ? parse_double(cells[y_col], line_no, "y") : 0.0);
    observed.push_back(obs ? 1 : 0);
    for (std::size_t j = 0; j < a_cols.size(); ++j)
      a[j].push_back(parse_double(cells[a_cols[j]], line_no, header[a_cols[j]]));
    for (std::size_t j = 0; j < c_cols.size(); ++j)
      c[j].push_back(parse_double(cells[c_cols[j]], line_no, header[c_cols[j]]));
  }
  if (y.empty()) throw std::runtime_error("csv: no data rows");

  const int T = static_cast<int>(y.size());
  TimeSeriesDataset data;
  data.y = Eigen::Map<VectorXd>(y.data(), T);
  data.y_observed = observed;
  data.exposures = MatrixXd(T, a_cols.size());
  for (std::size_t j = 0; j < a_cols.size(); ++j)
    data.exposures.col(static_cast<int>(j)) = Eigen::Map<VectorXd>(a[j].data(), T);
  data.covariates = MatrixXd(T, c_cols.size());
  for (std::size_t j = 0; j < c_cols.size(); ++j)
    data.covariates.col(static_cast<int>(j)) = Eigen::Map<VectorXd>(c[j].data(), T);

  bool any_obs = false;
  for (auto o : observed) any_obs = any_obs || o;
  if (!any_obs) throw std::runtime_error("csv: outcome is missing at every time point");
  data.validate();
  return data;
}

TimeSeriesDataset read_dataset_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("csv: cannot open '" + path + "'");
  return read_dataset_csv(is);
}

void write_truth_csv(std::ostream& os, const TruthPaths& truth) {
  os << "t,beta0,rho,beta1,beta2,betac,R\n";
  for (int i = 0; i < truth.beta0.size(); ++i) {
    os << (i + 1) << ',' << format_double(truth.beta0(i)) << ','
       << format_double(truth.rho(i)) << ',' << format_double(truth.beta1(i)) << ','
       << format_double(truth.beta2(i)) << ',' << format_double(truth.betac(i)) << ','
       << format_double(truth.R) << '\n';
  }
}

void write_truth_csv(const std::string& path, const TruthPaths& truth) {
  auto os = open_out(path);
  write_truth_csv(os, truth);
}

}  // namespace mcemssm
