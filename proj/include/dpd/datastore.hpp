#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "dpd/affordance.hpp"
#include "dpd/rendering.hpp"
#include "dpd/simulation.hpp"

namespace dpd {

enum class RecordSource : std::uint8_t { Human = 0, Autonomous = 1 };

struct FrameRecord {
  std::int64_t tick = 0;
  double station = 0.0;
  double lateral = 0.0;
  double angle = 0.0;
  int lane_index = -1;
  double curvature = 0.0;
  Raster raster;
  AffordanceVector raw;
  IndicatorArray targets{};  // normalize(raw) under the dataset spec
  ControlCommand command;
  RecordSource source = RecordSource::Autonomous;
  std::string track;

  bool operator==(const FrameRecord& o) const;
};

struct DatasetHeader {
  NormalizationSpec spec = NormalizationSpec::defaults();
  CameraModel camera;    // raster spec: camera.width x camera.height_px
  std::string metadata;  // free-form JSON object

  bool operator==(const DatasetHeader&) const = default;
};

// Fills every derived field of a record from a world snapshot.
FrameRecord make_record(const WorldState& world, int ego_id, const DatasetHeader& header,
                        const Raster& raster, const AffordanceVector& truth,
                        ControlCommand command, RecordSource source);

class DatasetWriter {
 public:
  // Creates (truncates) `path` and writes the header.
  DatasetWriter(const std::filesystem::path& path, DatasetHeader header);
  // Opens an existing dataset for appending; its header must match.
  static DatasetWriter append_to(const std::filesystem::path& path, const DatasetHeader& header);

  void append(const FrameRecord& record);
  void flush();
  std::size_t records_written() const { return written_; }
  const DatasetHeader& header() const { return header_; }

 private:
  DatasetWriter(std::ofstream out, DatasetHeader header, std::filesystem::path path);
  std::ofstream out_;
  DatasetHeader header_;
  std::filesystem::path path_;
  std::size_t written_ = 0;
};

struct Dataset {
  DatasetHeader header;
  std::vector<FrameRecord> records;
};

DatasetHeader read_header(const std::filesystem::path& path);
// Streams records in file order without holding them all in memory.
DatasetHeader for_each_record(const std::filesystem::path& path,
                              const std::function<void(FrameRecord&&)>& fn);
Dataset read_all(const std::filesystem::path& path);

// Labels only, no rasters.
void export_labels_csv(std::ostream& os, const std::vector<FrameRecord>& records);

enum class SplitBy { Track, Random };

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

Split split(const std::vector<FrameRecord>& records, SplitBy by, double ratio, std::uint64_t seed);
// Track labels only; used when records are streamed.
Split split_tracks(const std::vector<std::string>& tracks, SplitBy by, double ratio, std::uint64_t seed);

}  // namespace dpd
