#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "axisfit/dataset.hpp"
#include "axisfit/mixed_fit.hpp"

namespace axisfit {

enum class RunMode { fit_subject, fit_map, fit_population, simulate, validate };

const char* to_string(RunMode mode);

/// Settings of one CLI run. Every field has a flag of the same name
/// (underscores become dashes) and a key of the same name in config files.
struct RunConfig {
  RunMode mode = RunMode::fit_subject;
  std::string data;
  FrameFormat format = FrameFormat::automatic;
  bool skip_invalid = false;
  int subsample_stride = 1;
  std::string subject;  // empty: every subject
  PopulationModel model;
  MixedAlgorithm algorithm = MixedAlgorithm::plme;
  LmmMethod lmm_method = LmmMethod::ml;
  PriorSpec prior = PriorSpec::standard();
  FitOptions fit;
  int max_outer = 50;
  double outer_tol = 1e-6;
  std::uint64_t seed = 1;
  int threads = 0;
  std::string json_out;
  std::string report_out;

  // Throws ErrorKind::validation when a mode-required field is missing or
  // a value is out of range.
  void validate() const;
};

/// Reads "key = value" lines; '#' starts a comment. Throws ErrorKind::parse
/// with the line number for lines without '='.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

}  // namespace axisfit
