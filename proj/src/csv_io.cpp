#include "pgsmm/csv_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_map>

namespace pgsmm {

namespace {

std::vector<std::string> split_row(const std::string& line, int line_no, const std::string& source) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quoted) {
      if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
        cell += '"';
        ++k;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  if (quoted) throw InputError(source + ": line " + std::to_string(line_no) + ": unterminated quote");
  cells.push_back(std::move(cell));
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

double parse_number(const std::string& text, int line_no, const std::string& column,
                    const std::string& source) {
  const std::string t = trim(text);
  auto fail = [&](const std::string& what) {
    return InputError(source + ": line " + std::to_string(line_no) + ", column '" + column + "': " + what);
  };
  if (t.empty() || t == "NA" || t == "NaN" || t == "nan") throw fail("missing value");
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size()) throw fail("non-numeric value '" + t + "'");
  if (!std::isfinite(value)) throw fail("non-finite value");
  return value;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

struct Row {
  int line = 0;
  double time = 0.0;
  double response = 0.0;
  std::vector<double> fixed;
  std::vector<double> random;
};

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

LongitudinalDataset parse_csv(std::istream& in, const CsvSchema& schema, const std::string& source) {
  std::string line;
  int line_no = 1;
  if (!std::getline(in, line)) throw InputError(source + ": empty file");
  const auto header = split_row(line, line_no, source);
  std::unordered_map<std::string, int> column;
  for (int k = 0; k < static_cast<int>(header.size()); ++k) column[trim(header[k])] = k;
  auto index_of = [&](const std::string& name) {
    const auto it = column.find(name);
    if (it == column.end()) throw InputError(source + ": missing column '" + name + "'");
    return it->second;
  };

  const int subject_col = index_of(schema.subject);
  const int time_col = index_of(schema.time);
  const int response_col = index_of(schema.response);
  std::vector<int> fixed_cols, random_cols;
  for (const auto& name : schema.fixed) fixed_cols.push_back(index_of(name));
  for (const auto& name : schema.random) random_cols.push_back(index_of(name));
  std::vector<std::pair<int, int>> inter_cols;
  for (const auto& [a, b] : schema.interactions) inter_cols.emplace_back(index_of(a), index_of(b));

  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<Row>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || line == "\r") continue;
    const auto cells = split_row(line, line_no, source);
    if (cells.size() != header.size())
      throw InputError(source + ": line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, found " + std::to_string(cells.size()));
    const std::string id = trim(cells[subject_col]);
    if (id.empty())
      throw InputError(source + ": line " + std::to_string(line_no) + ": missing subject id");
    Row r;
    r.line = line_no;
    r.time = parse_number(cells[time_col], line_no, schema.time, source);
    r.response = parse_number(cells[response_col], line_no, schema.response, source);
    for (std::size_t k = 0; k < fixed_cols.size(); ++k)
      r.fixed.push_back(parse_number(cells[fixed_cols[k]], line_no, schema.fixed[k], source));
    for (std::size_t k = 0; k < inter_cols.size(); ++k) {
      const auto& [a, b] = schema.interactions[k];
      r.fixed.push_back(parse_number(cells[inter_cols[k].first], line_no, a, source) *
                        parse_number(cells[inter_cols[k].second], line_no, b, source));
    }
    if (schema.random_intercept) r.random.push_back(1.0);
    for (std::size_t k = 0; k < random_cols.size(); ++k)
      r.random.push_back(parse_number(cells[random_cols[k]], line_no, schema.random[k], source));
    auto [it, fresh] = rows.try_emplace(id);
    if (fresh) order.push_back(id);
    it->second.push_back(std::move(r));
  }
  if (order.empty()) throw InputError(source + ": no data rows");

  LongitudinalDataset data;
  data.fixed_names = schema.fixed;
  for (const auto& [a, b] : schema.interactions) data.fixed_names.push_back(a + "*" + b);
  if (schema.random_intercept) data.random_names.push_back(kInterceptName);
  data.random_names.insert(data.random_names.end(), schema.random.begin(), schema.random.end());
  const auto p = static_cast<Eigen::Index>(data.fixed_names.size());
  const auto q = static_cast<Eigen::Index>(data.random_names.size());

  for (const auto& id : order) {
    auto& visits = rows[id];
    std::stable_sort(visits.begin(), visits.end(),
                     [](const Row& a, const Row& b) { return a.time < b.time; });
    for (std::size_t j = 1; j < visits.size(); ++j)
      if (!(visits[j].time > visits[j - 1].time))
        throw InputError(source + ": line " + std::to_string(visits[j].line) + ": subject '" + id +
                         "' has a repeated time " + format_double(visits[j].time));
    const auto m = static_cast<Eigen::Index>(visits.size());
    Subject s;
    s.id = id;
    s.time.resize(m);
    s.response.resize(m);
    s.fixed.resize(m, p);
    s.random.resize(m, q);
    for (Eigen::Index j = 0; j < m; ++j) {
      s.time[j] = visits[j].time;
      s.response[j] = visits[j].response;
      for (Eigen::Index k = 0; k < p; ++k) s.fixed(j, k) = visits[j].fixed[k];
      for (Eigen::Index k = 0; k < q; ++k) s.random(j, k) = visits[j].random[k];
    }
    data.subjects.push_back(std::move(s));
  }

  if (schema.standardize && p > 0) {
    const double total = data.observation_count();
    if (total < 2) throw InputError(source + ": standardization needs at least two rows");
    for (Eigen::Index k = 0; k < p; ++k) {
      double sum = 0.0;
      for (const auto& s : data.subjects) sum += s.fixed.col(k).sum();
      const double mean = sum / total;
      double ss = 0.0;
      for (const auto& s : data.subjects) ss += (s.fixed.col(k).array() - mean).square().sum();
      const double sd = std::sqrt(ss / (total - 1.0));
      if (!(sd > 0.0))
        throw InputError(source + ": column '" + data.fixed_names[k] + "' is constant and cannot be standardized");
      for (auto& s : data.subjects) s.fixed.col(k) = (s.fixed.col(k).array() - mean) / sd;
    }
  }
  data.validate();
  return data;
}

LongitudinalDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open data file " + path.string());
  return parse_csv(in, schema, path.string());
}

CsvSchema canonical_schema(const LongitudinalDataset& data) {
  CsvSchema schema;
  schema.fixed = data.fixed_names;
  schema.random_intercept = !data.random_names.empty() && data.random_names.front() == kInterceptName;
  schema.random.assign(data.random_names.begin() + (schema.random_intercept ? 1 : 0),
                       data.random_names.end());
  return schema;
}

void write_csv(std::ostream& out, const LongitudinalDataset& data) {
  const CsvSchema schema = canonical_schema(data);
  out << "subject,time,response";
  for (const auto& name : schema.fixed) out << ',' << quote_if_needed(name);
  for (const auto& name : schema.random) out << ',' << quote_if_needed(name);
  out << '\n';
  const int skip = schema.random_intercept ? 1 : 0;
  for (const auto& s : data.subjects) {
    for (int j = 0; j < s.visits(); ++j) {
      out << quote_if_needed(s.id) << ',' << format_double(s.time[j]) << ','
          << format_double(s.response[j]);
      for (Eigen::Index k = 0; k < s.fixed.cols(); ++k) out << ',' << format_double(s.fixed(j, k));
      for (Eigen::Index k = skip; k < s.random.cols(); ++k) out << ',' << format_double(s.random(j, k));
      out << '\n';
    }
  }
}

}  // namespace pgsmm
