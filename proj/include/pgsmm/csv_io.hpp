#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "pgsmm/dataset.hpp"

namespace pgsmm {

// Maps CSV columns to model roles.
struct CsvSchema {
  std::string subject = "subject";
  std::string time = "time";
  std::string response = "response";
  std::vector<std::string> fixed;
  std::vector<std::string> random;
  bool random_intercept = true;
  // Product columns appended to the fixed covariates, named "a*b".
  std::vector<std::pair<std::string, std::string>> interactions;
  // Rescale every fixed column (interactions included) to sample mean 0 and
  // sample variance 1.
  bool standardize = false;
};

inline constexpr const char* kInterceptName = "(intercept)";

/// Reads long-format data, one row per visit. Subjects keep their order of
/// first appearance; visits are sorted by time. Errors name the file line.
LongitudinalDataset parse_csv(std::istream& in, const CsvSchema& schema,
                              const std::string& source = "<input>");
LongitudinalDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Canonical long-format export; reading it back with canonical_schema()
/// reproduces the dataset exactly.
void write_csv(std::ostream& out, const LongitudinalDataset& data);
CsvSchema canonical_schema(const LongitudinalDataset& data);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace pgsmm
