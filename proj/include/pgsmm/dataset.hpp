#pragma once

#include <string>
#include <vector>

#include "pgsmm/common.hpp"
#include "pgsmm/spline_basis.hpp"

namespace pgsmm {

// One subject's visits, sorted by time.
struct Subject {
  std::string id;
  Vector time;
  Vector response;
  Matrix fixed;   // n_i x p
  Matrix random;  // n_i x q

  int visits() const { return static_cast<int>(time.size()); }
  bool operator==(const Subject&) const = default;
};

// Long-format longitudinal data grouped by subject.
struct LongitudinalDataset {
  std::vector<std::string> fixed_names;
  std::vector<std::string> random_names;
  std::vector<Subject> subjects;

  int subject_count() const { return static_cast<int>(subjects.size()); }
  int fixed_dimension() const { return static_cast<int>(fixed_names.size()); }
  int random_dimension() const { return static_cast<int>(random_names.size()); }
  int observation_count() const;
  std::vector<double> all_times() const;

  // Throws InputError on shape mismatches, non-finite values, empty
  // subjects or non-increasing times.
  void validate() const;

  bool operator==(const LongitudinalDataset&) const = default;
};

// Per-subject stacked design D_i = [X_i, B(t_i)].
struct SubjectDesign {
  Matrix design;
  Matrix random;
  Vector response;
};

struct ModelDesign {
  SplineBasis basis;
  int fixed_dim = 0;   // p
  int spline_dim = 0;  // h
  int random_dim = 0;  // q
  int observations = 0;
  std::vector<SubjectDesign> subjects;

  int subject_count() const { return static_cast<int>(subjects.size()); }
  int coefficient_count() const { return fixed_dim + spline_dim; }
};

ModelDesign build_design(const LongitudinalDataset& data, const SplineConfig& spline);

}  // namespace pgsmm
