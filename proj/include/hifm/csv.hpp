#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hifm/data.hpp"
#include "hifm/errors.hpp"
#include "hifm/simulation.hpp"

namespace hifm::csv {

// 17 significant digits: every double round-trips exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    std::size_t start = 0;
    while (start < field.size() && field[start] == ' ') ++start;
    fields.push_back(field.substr(start));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline std::vector<std::vector<std::string>> read_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    rows.push_back(split_line(line));
  }
  return rows;
}

inline double parse_double(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("cannot parse '" + s + "' as a number (" + context + ")");
  }
}

}  // namespace hifm::csv

namespace hifm::io {

inline std::string type_name(ColumnType t) {
  return t == ColumnType::binary ? "binary" : "continuous";
}
inline std::string role_name(ColumnRole r) {
  return r == ColumnRole::outcome ? "outcome" : "covariate";
}

inline ColumnType parse_type(const std::string& s) {
  if (s == "binary") return ColumnType::binary;
  if (s == "continuous") return ColumnType::continuous;
  throw ValidationError("unknown column type '" + s + "' (want binary|continuous)");
}

inline ColumnRole parse_role(const std::string& s) {
  if (s == "outcome") return ColumnRole::outcome;
  if (s == "covariate") return ColumnRole::covariate;
  throw ValidationError("unknown column role '" + s + "' (want outcome|covariate)");
}

inline void write_schema(const std::vector<ColumnSpec>& schema, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << "name,type,role\n";
  for (const auto& c : schema) {
    out << c.name << "," << type_name(c.type) << "," << role_name(c.role) << "\n";
  }
}

inline std::vector<ColumnSpec> read_schema(const std::string& path) {
  const auto rows = csv::read_rows(path);
  if (rows.empty() || rows[0] != std::vector<std::string>{"name", "type", "role"}) {
    throw ValidationError("schema file '" + path + "' must start with header name,type,role");
  }
  std::vector<ColumnSpec> schema;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 3) {
      throw ValidationError("schema file '" + path + "' row " + std::to_string(i) +
                            " needs 3 fields");
    }
    schema.push_back({rows[i][0], parse_type(rows[i][1]), parse_role(rows[i][2])});
  }
  return schema;
}

// data.csv: header "group,<columns in schema order>", one row per observation.
inline void write_dataset(const Dataset& data, const std::string& data_path,
                          const std::string& schema_path) {
  write_schema(data.schema(), schema_path);
  std::ofstream out(data_path);
  if (!out) throw ValidationError("cannot write '" + data_path + "'");
  out << "group";
  for (const auto& c : data.schema()) out << "," << c.name;
  out << "\n";
  for (int i = 0; i < data.n(); ++i) {
    out << data.group()[i];
    for (int j = 0; j < data.p(); ++j) out << "," << csv::format_double(data.z()(i, j));
    out << "\n";
  }
}

inline Dataset read_dataset(const std::string& data_path, const std::string& schema_path) {
  const std::vector<ColumnSpec> schema = read_schema(schema_path);
  const auto rows = csv::read_rows(data_path);
  if (rows.empty()) throw ValidationError("data file '" + data_path + "' is empty");
  const auto& header = rows[0];
  if (header.empty() || header[0] != "group") {
    throw ValidationError("data file '" + data_path + "' must have a leading 'group' column");
  }
  if (header.size() != schema.size() + 1) {
    throw ValidationError("data file '" + data_path + "' has " +
                          std::to_string(header.size() - 1) + " value columns, schema has " +
                          std::to_string(schema.size()));
  }
  for (std::size_t j = 0; j < schema.size(); ++j) {
    if (header[j + 1] != schema[j].name) {
      throw ValidationError("data column '" + header[j + 1] + "' does not match schema column '" +
                            schema[j].name + "'");
    }
  }
  const int n = static_cast<int>(rows.size()) - 1;
  const int p = static_cast<int>(schema.size());
  Eigen::MatrixXd z(n, p);
  Eigen::VectorXi group(n);
  for (int i = 0; i < n; ++i) {
    const auto& row = rows[i + 1];
    if (static_cast<int>(row.size()) != p + 1) {
      throw ValidationError("data row " + std::to_string(i + 1) + " has " +
                            std::to_string(row.size()) + " fields, want " + std::to_string(p + 1));
    }
    group[i] =
        static_cast<int>(csv::parse_double(row[0], "group, row " + std::to_string(i + 1)));
    for (int j = 0; j < p; ++j) {
      z(i, j) = csv::parse_double(row[j + 1], schema[j].name + ", row " + std::to_string(i + 1));
    }
  }
  return Dataset(std::move(z), schema, std::move(group));
}

// Ground-truth parameters in long form: kind,population,row,col,value.
inline void write_truth(const SyntheticTruth& truth, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << "kind,population,row,col,value\n";
  for (int l = 0; l < 2; ++l) {
    for (int j = 0; j < truth.lambda[l].rows(); ++j) {
      for (int h = 0; h < truth.lambda[l].cols(); ++h) {
        out << "lambda," << l + 1 << "," << j << "," << h << ","
            << csv::format_double(truth.lambda[l](j, h)) << "\n";
      }
    }
    for (int h = 0; h < truth.w[l].size(); ++h) {
      out << "w," << l + 1 << ",0," << h << "," << csv::format_double(truth.w[l][h]) << "\n";
    }
    for (int j = 0; j < truth.sigma2[l].size(); ++j) {
      out << "sigma2," << l + 1 << "," << j << ",0," << csv::format_double(truth.sigma2[l][j])
          << "\n";
    }
    for (int j = 0; j < truth.theta[l].size(); ++j) {
      out << "theta," << l + 1 << "," << j << ",0," << csv::format_double(truth.theta[l][j])
          << "\n";
    }
  }
}

}  // namespace hifm::io
