#pragma once

#include "csbrm/json_io.hpp"
#include "csbrm/roadmap.hpp"
#include "csbrm/scenario.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace csbrm {

/// 3-sigma shape of the position block of a state covariance: an ellipse
/// in 2-D, an ellipsoid in 3-D.
json_io::Json position_ellipse_json(const Mat& state_cov, int np);

/// result.json for a start/goal query. When no path exists the document
/// says so (found = false) and carries no path data.
json_io::Json plan_result_json(const Scenario& sc, const RoadmapGraph& g, int start, int goal);

/// Path-level Monte Carlo summary with the first `keep` rollouts' positions.
json_io::Json simulation_json(const Scenario& sc, const PathRollouts& r, std::uint64_t seed, int keep = 50);

struct VerifyOutcome {
  json_io::Json report;
  bool holds = true;
};

/// Concatenation check on the given paths.
VerifyOutcome verify_paths_json(const RoadmapGraph& g, const std::vector<std::vector<int>>& paths,
                                double tol = 1e-6);

/// Up to `count` random walks of 1 to 3 edges; fixed by the seed.
std::vector<std::vector<int>> random_paths(const RoadmapGraph& g, int count, std::uint64_t seed);

/// Plotting input: world, roadmap, and the planned path with its rollouts
/// when a result document is given. Everything is copied, nothing derived
/// by the plotting side.
json_io::Json figures_json(const Scenario& sc, const RoadmapGraph& g,
                           const std::optional<json_io::Json>& result);

}  // namespace csbrm
