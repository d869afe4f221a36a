// Static SVG figures: estimated vs ground-truth trajectory (top-down) next
// to the translation-error-over-time series. Figures only, no interactivity.
#pragma once

#include <filesystem>
#include <string>

#include "riglab/evaluation.hpp"
#include "riglab/trajectory_csv.hpp"

namespace riglab {

struct SvgPlotOptions {
  int width = 960;   // total canvas, both panels
  int height = 480;
  std::string title = "trajectory evaluation";
};

// Left panel: x/y paths of both trajectories to shared scale. Right panel:
// per-pose translation error over time. Output is deterministic for
// identical inputs. Throws std::invalid_argument on empty trajectories and
// std::runtime_error when the file cannot be written.
void write_trajectory_svg(const std::filesystem::path& file,
                          const Trajectory& estimate,
                          const Trajectory& ground_truth,
                          const std::vector<ScanError>& errors,
                          const SvgPlotOptions& options = {});

}  // namespace riglab
