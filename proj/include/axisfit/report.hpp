#pragma once

// Human-readable reports (degrees) and machine-readable JSON (radians, units
// in field names).

#include <string>
#include <vector>

#include <json.hpp>

#include "axisfit/bayes_fit.hpp"
#include "axisfit/dataset.hpp"
#include "axisfit/mixed_fit.hpp"
#include "axisfit/simulation.hpp"

namespace axisfit {

/// False when NO_COLOR is set or stdout is not a terminal.
bool color_enabled();

std::string format_subject_fit(const std::string& subject_id, const SubjectFitResult& fit, bool color = false);
std::string format_posterior(const std::string& subject_id, const PosteriorResult& fit, bool color = false);
std::string format_population(const PopulationFit& fit, const std::vector<std::pair<std::string, WaldResult>>& tests,
                              bool color = false);
// Fixed effects (bias, RMSE, relative variance bias), then the sd estimators.
std::string format_sim_report(const SimReport& report, bool color = false);
std::string format_dataset_summary(const Dataset& data, bool color = false);

nlohmann::json to_json(const AnatomicalAngles& beta);
nlohmann::json to_json(const SubjectFitResult& fit);
nlohmann::json to_json(const PosteriorResult& fit);
nlohmann::json to_json(const PopulationFit& fit, const std::vector<std::pair<std::string, WaldResult>>& tests);
nlohmann::json to_json(const SimReport& report);

}  // namespace axisfit
