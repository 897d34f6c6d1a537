#pragma once

#include <filesystem>
#include <vector>

#include "dpd/datastore.hpp"
#include "dpd/evaluation.hpp"
#include "dpd/learning.hpp"

namespace dpd {

// Streams one or more datasets into a column-per-sample training set. All
// files must share one normalization spec and raster size (SpecMismatch).
TrainingSet load_training_set(const std::vector<std::filesystem::path>& datasets,
                              DatasetHeader* header_out = nullptr);

TrainingSet to_training_set(const std::vector<FrameRecord>& records);

// Per-indicator mean of the normalized targets.
IndicatorArray mean_target(const TrainingSet& data);

// (estimate, truth) pairs of a model over every record of the datasets.
std::vector<AffordancePair> model_pairs(const MlpModel& model,
                                        const std::vector<std::filesystem::path>& datasets);

// (estimate, truth) pairs of a fixed normalized prediction.
std::vector<AffordancePair> constant_pairs(const IndicatorArray& normalized, const NormalizationSpec& spec,
                                           const std::vector<std::filesystem::path>& datasets);

}  // namespace dpd
