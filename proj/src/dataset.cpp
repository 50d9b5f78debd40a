#include "pgsmm/dataset.hpp"

namespace pgsmm {

int LongitudinalDataset::observation_count() const {
  int total = 0;
  for (const auto& s : subjects) total += s.visits();
  return total;
}

std::vector<double> LongitudinalDataset::all_times() const {
  std::vector<double> out;
  out.reserve(observation_count());
  for (const auto& s : subjects) out.insert(out.end(), s.time.begin(), s.time.end());
  return out;
}

void LongitudinalDataset::validate() const {
  if (subjects.empty()) throw InputError("dataset has no subjects");
  const auto p = static_cast<Eigen::Index>(fixed_names.size());
  const auto q = static_cast<Eigen::Index>(random_names.size());
  if (q < 1) throw InputError("dataset needs at least one random-effect covariate");
  for (const auto& s : subjects) {
    const auto m = s.time.size();
    if (m < 1) throw InputError("subject '" + s.id + "' has no observations");
    if (s.response.size() != m || s.fixed.rows() != m || s.random.rows() != m ||
        s.fixed.cols() != p || s.random.cols() != q)
      throw InputError("subject '" + s.id + "' has inconsistent column shapes");
    if (!s.time.allFinite() || !s.response.allFinite() || !s.fixed.allFinite() ||
        !s.random.allFinite())
      throw InputError("subject '" + s.id + "' has non-finite values");
    for (Eigen::Index j = 1; j < m; ++j) {
      if (!(s.time[j] > s.time[j - 1]))
        throw InputError("subject '" + s.id + "' has non-increasing observation times");
    }
  }
}

ModelDesign build_design(const LongitudinalDataset& data, const SplineConfig& spline) {
  data.validate();
  ModelDesign out;
  const auto times = data.all_times();
  out.basis = build_spline_basis(spline, times, data.subject_count());
  out.fixed_dim = data.fixed_dimension();
  out.spline_dim = out.basis.dimension();
  out.random_dim = data.random_dimension();
  out.observations = data.observation_count();
  out.subjects.reserve(data.subjects.size());
  for (const auto& s : data.subjects) {
    SubjectDesign d;
    d.design.resize(s.visits(), out.coefficient_count());
    d.design.leftCols(out.fixed_dim) = s.fixed;
    d.design.rightCols(out.spline_dim) = out.basis.evaluate(s.time);
    d.random = s.random;
    d.response = s.response;
    out.subjects.push_back(std::move(d));
  }
  return out;
}

}  // namespace pgsmm
