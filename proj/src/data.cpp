#include "cfb/data.hpp"

#include "cfb/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace cfb {

Eigen::MatrixXd ObservationalDataset::V() const
{
  Eigen::MatrixXd out(n(), d1());
  for (Eigen::Index k = 0; k < d1(); ++k) {
    out.col(k) = X.col(v_cols[k]);
  }
  return out;
}

Eigen::Index ObservationalDataset::n_treated() const
{
  return static_cast<Eigen::Index>(std::llround(T.sum()));
}

void ObservationalDataset::validate() const
{
  if (n() < 2) {
    throw Error(ErrorKind::InvalidDataset, "need at least 2 observations");
  }
  if (T.size() != n() || Y.size() != n()) {
    throw Error(ErrorKind::InvalidDataset, "X, T and Y row counts differ");
  }
  if (static_cast<Eigen::Index>(col_kinds.size()) != d()) {
    throw Error(ErrorKind::InvalidDataset, "col_kinds length differs from d");
  }
  for (Eigen::Index i = 0; i < n(); ++i) {
    if (T(i) != 0.0 && T(i) != 1.0) {
      throw Error(ErrorKind::NonBinaryTreatment,
                  "treatment value at row " + std::to_string(i) + " is not 0/1");
    }
  }
  const auto treated = n_treated();
  if (treated < 1 || treated > n() - 1) {
    throw Error(ErrorKind::InvalidDataset, "both treatment arms must be non-empty");
  }
  for (Eigen::Index j = 0; j < d(); ++j) {
    if (col_kinds[j] != ColumnKind::Binary) continue;
    for (Eigen::Index i = 0; i < n(); ++i) {
      if (X(i, j) != 0.0 && X(i, j) != 1.0) {
        throw Error(ErrorKind::InvalidDataset,
                    "binary column " + std::to_string(j) + " holds a non 0/1 value");
      }
    }
  }
  if (v_cols.empty()) {
    throw Error(ErrorKind::InvalidDataset, "at least one conditioning column required");
  }
  std::set<int> seen;
  for (int c : v_cols) {
    if (c < 0 || c >= d() || !seen.insert(c).second) {
      throw Error(ErrorKind::InvalidDataset, "v_cols must be distinct valid indices");
    }
    if (col_kinds[c] != ColumnKind::Continuous) {
      throw Error(ErrorKind::InvalidDataset, "conditioning columns must be continuous");
    }
  }
}

double ScalingMap::scale(Eigen::Index col, double x) const
{
  const auto& r = ranges.at(col);
  if (!r) return x;
  return (x - r->min) / (r->max - r->min);
}

double ScalingMap::unscale(Eigen::Index col, double x) const
{
  const auto& r = ranges.at(col);
  if (!r) return x;
  return r->min + x * (r->max - r->min);
}

ScalingMap fit_scaling(const ObservationalDataset& ds)
{
  ScalingMap map;
  map.ranges.resize(ds.d());
  for (Eigen::Index j = 0; j < ds.d(); ++j) {
    if (ds.col_kinds[j] == ColumnKind::Binary) continue;
    const double lo = ds.X.col(j).minCoeff();
    const double hi = ds.X.col(j).maxCoeff();
    if (!(hi > lo)) {
      const auto name = j < static_cast<Eigen::Index>(ds.col_names.size())
                          ? ds.col_names[j]
                          : std::to_string(j);
      throw Error(ErrorKind::ConstantColumn, "column '" + name + "' is constant");
    }
    map.ranges[j] = ScalingMap::Range{lo, hi};
  }
  return map;
}

namespace {

ObservationalDataset map_columns(const ObservationalDataset& ds,
                                 const ScalingMap& map,
                                 bool forward)
{
  if (static_cast<Eigen::Index>(map.ranges.size()) != ds.d()) {
    throw Error(ErrorKind::DimensionMismatch, "scaling map does not match dataset width");
  }
  ObservationalDataset out = ds;
  for (Eigen::Index j = 0; j < ds.d(); ++j) {
    const auto& r = map.ranges[j];
    if (!r) continue;
    const double span = r->max - r->min;
    if (forward) {
      out.X.col(j) = (ds.X.col(j).array() - r->min) / span;
    } else {
      out.X.col(j) = ds.X.col(j).array() * span + r->min;
    }
  }
  return out;
}

bool parse_double(const std::string& text, double& value)
{
  auto first = text.data();
  auto last = text.data() + text.size();
  while (first != last && std::isspace(static_cast<unsigned char>(*first))) ++first;
  while (last != first && std::isspace(static_cast<unsigned char>(*(last - 1)))) --last;
  if (first == last) return false;
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  return ec == std::errc() && ptr == last && std::isfinite(value);
}

} // namespace

ObservationalDataset apply_scaling(const ObservationalDataset& ds, const ScalingMap& map)
{
  return map_columns(ds, map, true);
}

ObservationalDataset unapply_scaling(const ObservationalDataset& ds, const ScalingMap& map)
{
  return map_columns(ds, map, false);
}

std::vector<std::string> split_csv_line(const std::string& line)
{
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

ObservationalDataset load_csv(const std::string& path, const CsvSchema& schema)
{
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::IoError, "cannot open '" + path + "'");
  }

  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::InvalidDataset, "'" + path + "' has no header row");
  }
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    line.erase(0, 3);
  }
  auto header = split_csv_line(line);
  for (auto& h : header) {
    h.erase(0, h.find_first_not_of(" \t"));
    h.erase(h.find_last_not_of(" \t") + 1);
  }

  auto index_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw Error(ErrorKind::MissingColumn, "column '" + name + "' not found in header");
    }
    return static_cast<std::size_t>(it - header.begin());
  };

  // V columns lead X unless the caller already listed them as covariates.
  std::vector<std::string> x_names;
  for (const auto& v : schema.v_cols) {
    if (std::find(schema.covariate_cols.begin(), schema.covariate_cols.end(), v) ==
        schema.covariate_cols.end()) {
      x_names.push_back(v);
    }
  }
  for (const auto& c : schema.covariate_cols) {
    if (std::find(x_names.begin(), x_names.end(), c) == x_names.end()) {
      x_names.push_back(c);
    }
  }
  for (const auto& b : schema.binary_cols) {
    if (std::find(x_names.begin(), x_names.end(), b) == x_names.end()) {
      throw Error(ErrorKind::MissingColumn,
                  "binary column '" + b + "' is not among the covariates");
    }
  }

  const auto t_idx = index_of(schema.treatment_col);
  const auto y_idx = index_of(schema.outcome_col);
  std::vector<std::size_t> x_idx;
  for (const auto& name : x_names) x_idx.push_back(index_of(name));

  std::vector<double> t_vals, y_vals, x_vals;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    auto cell = [&](std::size_t idx, const std::string& name) {
      double value = 0.0;
      if (idx >= fields.size() || !parse_double(fields[idx], value)) {
        throw Error(ErrorKind::MissingValue,
                    "row " + std::to_string(row) + ", column '" + name + "'");
      }
      return value;
    };
    const double t = cell(t_idx, schema.treatment_col);
    if (t != 0.0 && t != 1.0) {
      throw Error(ErrorKind::NonBinaryTreatment,
                  "row " + std::to_string(row) + " has treatment value " + fields[t_idx]);
    }
    t_vals.push_back(t);
    y_vals.push_back(cell(y_idx, schema.outcome_col));
    for (std::size_t k = 0; k < x_idx.size(); ++k) {
      x_vals.push_back(cell(x_idx[k], x_names[k]));
    }
  }

  ObservationalDataset ds;
  const auto n = static_cast<Eigen::Index>(t_vals.size());
  const auto d = static_cast<Eigen::Index>(x_names.size());
  ds.T = Eigen::Map<Eigen::VectorXd>(t_vals.data(), n);
  ds.Y = Eigen::Map<Eigen::VectorXd>(y_vals.data(), n);
  ds.X = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
    x_vals.data(), n, d);
  ds.col_names = x_names;
  ds.col_kinds.assign(d, ColumnKind::Continuous);
  for (const auto& b : schema.binary_cols) {
    ds.col_kinds[std::find(x_names.begin(), x_names.end(), b) - x_names.begin()] =
      ColumnKind::Binary;
  }
  for (const auto& v : schema.v_cols) {
    ds.v_cols.push_back(
      static_cast<int>(std::find(x_names.begin(), x_names.end(), v) - x_names.begin()));
  }
  ds.validate();
  return ds;
}

} // namespace cfb
