#pragma once

#include <ostream>
#include <vector>

#include "obsinfo/adaptive.hpp"
#include "obsinfo/config.hpp"
#include "obsinfo/data.hpp"
#include "obsinfo/information.hpp"

namespace obsinfo {

json to_json(const Theta& v);
Theta theta_from_json(const json& j);

json to_json(const ContinuousDesign& xi);
json to_json(const ExactDesign& xi);
ContinuousDesign continuous_design_from_json(const json& j);
ExactDesign exact_design_from_json(const json& j);

// {"rows": [[...], ...], "definiteness": "positive_definite"}
json to_json(const InfoMatrix& m);

json to_json(const SolverDiagnostics& d);
json to_json(const Provenance& p);
json to_json(const RunPlan& plan);
json to_json(const RunSummary& s);

// One record of the trajectory export: {j, plan, omega, Q, eff_theta,
// eff_mle, theta_hat?}.
json to_json(const TrajectoryEntry& e);
void write_trajectory_jsonl(std::ostream& out, const std::vector<TrajectoryEntry>& trajectory);

}  // namespace obsinfo
