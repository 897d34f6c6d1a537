#include "dpd/training_data.hpp"

#include "dpd/errors.hpp"
#include "dpd/perception.hpp"

namespace dpd {

namespace {

DatasetHeader common_header(const std::vector<std::filesystem::path>& datasets, std::size_t& count) {
  if (datasets.empty()) throw Error(ErrorCode::EmptyDataset, "no dataset given");
  DatasetHeader first = read_header(datasets.front());
  count = 0;
  for (const auto& path : datasets) {
    const DatasetHeader h = for_each_record(path, [&](FrameRecord&&) { ++count; });
    if (!(h.spec == first.spec) || h.camera.width != first.camera.width ||
        h.camera.height_px != first.camera.height_px) {
      throw Error(ErrorCode::SpecMismatch, path.string() + " does not match " + datasets.front().string());
    }
  }
  if (count == 0) throw Error(ErrorCode::EmptyDataset, "datasets contain no records");
  return first;
}

void put_column(TrainingSet& set, Eigen::Index col, const FrameRecord& rec) {
  if (static_cast<Eigen::Index>(rec.raster.pixels.size()) != set.inputs.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "raster size differs between records");
  }
  set.inputs.col(col) = Eigen::Map<const Eigen::VectorXf>(rec.raster.pixels.data(), set.inputs.rows());
  for (std::size_t k = 0; k < kIndicatorCount; ++k) set.targets(static_cast<Eigen::Index>(k), col) = rec.targets[k];
}

}  // namespace

TrainingSet load_training_set(const std::vector<std::filesystem::path>& datasets, DatasetHeader* header_out) {
  std::size_t count = 0;
  const DatasetHeader header = common_header(datasets, count);
  TrainingSet set;
  const auto n = static_cast<Eigen::Index>(count);
  set.inputs.resize(static_cast<Eigen::Index>(header.camera.width) * header.camera.height_px, n);
  set.targets.resize(static_cast<Eigen::Index>(kIndicatorCount), n);
  Eigen::Index col = 0;
  for (const auto& path : datasets) {
    for_each_record(path, [&](FrameRecord&& rec) { put_column(set, col++, rec); });
  }
  if (header_out) *header_out = header;
  return set;
}

TrainingSet to_training_set(const std::vector<FrameRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::EmptyDataset, "no records");
  TrainingSet set;
  const auto n = static_cast<Eigen::Index>(records.size());
  set.inputs.resize(static_cast<Eigen::Index>(records.front().raster.pixels.size()), n);
  set.targets.resize(static_cast<Eigen::Index>(kIndicatorCount), n);
  for (Eigen::Index c = 0; c < n; ++c) put_column(set, c, records[static_cast<std::size_t>(c)]);
  return set;
}

IndicatorArray mean_target(const TrainingSet& data) {
  if (data.size() == 0) throw Error(ErrorCode::EmptyDataset, "no samples");
  const Eigen::VectorXd m = data.targets.rowwise().mean();
  IndicatorArray out{};
  for (std::size_t k = 0; k < kIndicatorCount; ++k) out[k] = m(static_cast<Eigen::Index>(k));
  return out;
}

std::vector<AffordancePair> model_pairs(const MlpModel& model,
                                        const std::vector<std::filesystem::path>& datasets) {
  std::vector<AffordancePair> pairs;
  for (const auto& path : datasets) {
    for_each_record(path, [&](FrameRecord&& rec) {
      pairs.emplace_back(perceive_learned(rec.raster, model, model.spec).value, rec.raw);
    });
  }
  return pairs;
}

std::vector<AffordancePair> constant_pairs(const IndicatorArray& normalized, const NormalizationSpec& spec,
                                           const std::vector<std::filesystem::path>& datasets) {
  const AffordanceVector estimate = denormalize(normalized, spec);
  std::vector<AffordancePair> pairs;
  for (const auto& path : datasets) {
    for_each_record(path, [&](FrameRecord&& rec) { pairs.emplace_back(estimate, rec.raw); });
  }
  return pairs;
}

}  // namespace dpd
