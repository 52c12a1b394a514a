#pragma once

#include <string>
#include <vector>

#include "harfuse/fusion.hpp"
#include "harfuse/models.hpp"

namespace harfuse {

// Two-panel line plot (accuracy left, loss right) of a training history.
// Pure string builder with fixed-precision coordinates, so identical
// histories render byte-identical documents.
std::string history_svg(const TrainHistory& history, const std::string& title);

// Row-normalized confusion-matrix heatmap with percentage cell labels.
std::string confusion_svg(const ConfusionMatrix& cm, const std::vector<std::string>& class_names,
                          const std::string& title);

}  // namespace harfuse
