#include "dpd/datastore.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <zlib.h>

#include "binary_io.hpp"
#include "dpd/errors.hpp"

namespace dpd {

namespace {

constexpr char kDataMagic[8] = {'D', 'P', 'D', 'D', 'A', 'T', 'A', '\0'};
constexpr std::uint32_t kDataVersion = 1;
constexpr std::uint32_t kMaxRecordBytes = 1u << 28;

std::uint32_t crc_of(const unsigned char* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

void write_header(detail::ByteWriter& w, const DatasetHeader& h) {
  w.put_bytes(kDataMagic, sizeof kDataMagic);
  w.put<std::uint32_t>(kDataVersion);
  detail::write_spec(w, h.spec);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(h.camera.width));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(h.camera.height_px));
  w.put(h.camera.height);
  w.put(h.camera.focal);
  w.put(h.camera.cu);
  w.put(h.camera.cv);
  w.put_string(h.metadata);
}

DatasetHeader parse_header(detail::ByteReader& r, const std::filesystem::path& path) {
  char magic[8];
  r.get_bytes(magic, sizeof magic);
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kDataMagic))) {
    throw Error(ErrorCode::CorruptRecord, path.string() + " is not a dataset file");
  }
  if (const auto v = r.get<std::uint32_t>(); v != kDataVersion) {
    throw Error(ErrorCode::SpecMismatch, fmt::format("unsupported dataset version {}", v));
  }
  DatasetHeader h;
  h.spec = detail::read_spec(r);
  h.camera.width = static_cast<int>(r.get<std::uint32_t>());
  h.camera.height_px = static_cast<int>(r.get<std::uint32_t>());
  h.camera.height = r.get<double>();
  h.camera.focal = r.get<double>();
  h.camera.cu = r.get<double>();
  h.camera.cv = r.get<double>();
  h.metadata = r.get_string();
  return h;
}

std::vector<unsigned char> encode_record(const FrameRecord& rec) {
  detail::ByteWriter w;
  w.put<std::int64_t>(rec.tick);
  w.put(rec.station);
  w.put(rec.lateral);
  w.put(rec.angle);
  w.put<std::int32_t>(rec.lane_index);
  w.put(rec.curvature);
  std::uint16_t mask = 0;
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    if (rec.raw.active[k]) mask = static_cast<std::uint16_t>(mask | (1u << k));
  }
  w.put(mask);
  for (double v : rec.raw.value) w.put(v);
  for (double v : rec.targets) w.put(v);
  w.put(rec.command.steer);
  w.put(rec.command.accel);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(rec.source));
  w.put_string(rec.track);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(rec.raster.width));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(rec.raster.height));
  w.put_bytes(rec.raster.pixels.data(), rec.raster.pixels.size() * sizeof(float));
  return std::move(w.bytes());
}

FrameRecord decode_record(detail::ByteReader& r) {
  FrameRecord rec;
  rec.tick = r.get<std::int64_t>();
  rec.station = r.get<double>();
  rec.lateral = r.get<double>();
  rec.angle = r.get<double>();
  rec.lane_index = r.get<std::int32_t>();
  rec.curvature = r.get<double>();
  const auto mask = r.get<std::uint16_t>();
  for (std::size_t k = 0; k < kIndicatorCount; ++k) rec.raw.active[k] = (mask >> k) & 1u;
  for (double& v : rec.raw.value) v = r.get<double>();
  for (double& v : rec.targets) v = r.get<double>();
  rec.command.steer = r.get<double>();
  rec.command.accel = r.get<double>();
  const auto src = r.get<std::uint8_t>();
  if (src > 1) throw Error(ErrorCode::CorruptRecord, fmt::format("unknown source id {}", src));
  rec.source = static_cast<RecordSource>(src);
  rec.track = r.get_string();
  rec.raster.width = static_cast<int>(r.get<std::uint32_t>());
  rec.raster.height = static_cast<int>(r.get<std::uint32_t>());
  const std::size_t n = static_cast<std::size_t>(rec.raster.width) * static_cast<std::size_t>(rec.raster.height);
  if (n * sizeof(float) != r.remaining()) {
    throw Error(ErrorCode::CorruptRecord,
                fmt::format("raster size disagrees with record length at byte offset {}", r.offset()));
  }
  rec.raster.pixels.resize(n);
  r.get_bytes(rec.raster.pixels.data(), n * sizeof(float));
  return rec;
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open dataset " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

bool FrameRecord::operator==(const FrameRecord& o) const {
  return tick == o.tick && station == o.station && lateral == o.lateral && angle == o.angle &&
         lane_index == o.lane_index && curvature == o.curvature && raster == o.raster &&
         raw == o.raw && targets == o.targets && command.steer == o.command.steer &&
         command.accel == o.command.accel && source == o.source && track == o.track;
}

FrameRecord make_record(const WorldState& world, int ego_id, const DatasetHeader& header,
                        const Raster& raster, const AffordanceVector& truth, ControlCommand command,
                        RecordSource source) {
  const CarState& ego = world.car(ego_id);
  FrameRecord rec;
  rec.tick = world.tick;
  rec.station = ego.frame.station;
  rec.lateral = ego.frame.lateral;
  rec.angle = ego.frame.angle;
  rec.lane_index = ego.frame.lane_index.value_or(-1);
  rec.curvature = ego.frame.curvature;
  rec.raster = raster;
  rec.raw = truth;
  rec.targets = normalize(truth, header.spec);
  rec.command = command;
  rec.source = source;
  rec.track = world.track->name();
  return rec;
}

DatasetWriter::DatasetWriter(const std::filesystem::path& path, DatasetHeader header)
    : header_(std::move(header)), path_(path) {
  header_.spec.validate();
  header_.camera.validate();
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error(ErrorCode::IoFailure, "cannot create dataset " + path.string());
  detail::ByteWriter w;
  write_header(w, header_);
  out_.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
  if (!out_) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

DatasetWriter::DatasetWriter(std::ofstream out, DatasetHeader header, std::filesystem::path path)
    : out_(std::move(out)), header_(std::move(header)), path_(std::move(path)) {}

DatasetWriter DatasetWriter::append_to(const std::filesystem::path& path, const DatasetHeader& header) {
  const DatasetHeader existing = read_header(path);
  if (!(existing.spec == header.spec) || !(existing.camera == header.camera)) {
    throw Error(ErrorCode::SpecMismatch, path.string() + " was recorded with a different spec");
  }
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot append to " + path.string());
  return DatasetWriter(std::move(out), existing, path);
}

void DatasetWriter::append(const FrameRecord& record) {
  if (record.raster.width != header_.camera.width || record.raster.height != header_.camera.height_px) {
    throw Error(ErrorCode::SpecMismatch,
                fmt::format("raster {}x{} does not match the dataset's {}x{}", record.raster.width,
                            record.raster.height, header_.camera.width, header_.camera.height_px));
  }
  const auto payload = encode_record(record);
  detail::ByteWriter frame;
  frame.put<std::uint32_t>(static_cast<std::uint32_t>(payload.size()));
  frame.put<std::uint32_t>(crc_of(payload.data(), payload.size()));
  out_.write(reinterpret_cast<const char*>(frame.bytes().data()), static_cast<std::streamsize>(frame.bytes().size()));
  out_.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out_) throw Error(ErrorCode::IoFailure, "write failed: " + path_.string());
  ++written_;
}

void DatasetWriter::flush() {
  out_.flush();
  if (!out_) throw Error(ErrorCode::IoFailure, "flush failed: " + path_.string());
}

DatasetHeader read_header(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  detail::ByteReader r(bytes.data(), bytes.size());
  return parse_header(r, path);
}

DatasetHeader for_each_record(const std::filesystem::path& path,
                              const std::function<void(FrameRecord&&)>& fn) {
  const auto bytes = slurp(path);
  detail::ByteReader r(bytes.data(), bytes.size());
  const DatasetHeader header = parse_header(r, path);
  std::size_t pos = bytes.size() - r.remaining();
  while (pos < bytes.size()) {
    const std::size_t record_at = pos;
    if (bytes.size() - pos < 8) {
      throw Error(ErrorCode::CorruptRecord,
                  fmt::format("truncated record header at byte offset {}", record_at));
    }
    detail::ByteReader frame(bytes.data() + pos, 8, pos);
    const auto length = frame.get<std::uint32_t>();
    const auto crc = frame.get<std::uint32_t>();
    pos += 8;
    if (length > kMaxRecordBytes || bytes.size() - pos < length) {
      throw Error(ErrorCode::CorruptRecord,
                  fmt::format("record at byte offset {} claims {} bytes but {} remain", record_at,
                              length, bytes.size() - pos));
    }
    if (crc_of(bytes.data() + pos, length) != crc) {
      throw Error(ErrorCode::CorruptRecord, fmt::format("CRC mismatch in record at byte offset {}", record_at));
    }
    detail::ByteReader payload(bytes.data() + pos, length, pos);
    FrameRecord rec = decode_record(payload);
    if (rec.raster.width != header.camera.width || rec.raster.height != header.camera.height_px) {
      throw Error(ErrorCode::SpecMismatch,
                  fmt::format("record at byte offset {} has a {}x{} raster", record_at,
                              rec.raster.width, rec.raster.height));
    }
    pos += length;
    fn(std::move(rec));
  }
  return header;
}

Dataset read_all(const std::filesystem::path& path) {
  Dataset ds;
  ds.header = for_each_record(path, [&](FrameRecord&& r) { ds.records.push_back(std::move(r)); });
  return ds;
}

void export_labels_csv(std::ostream& os, const std::vector<FrameRecord>& records) {
  os << "tick,track,source,station,lateral,angle_frame,lane_index,steer,accel";
  for (std::size_t k = 0; k < kIndicatorCount; ++k) os << ',' << indicator_name(indicator_at(k));
  for (std::size_t k = 0; k < kIndicatorCount; ++k) os << ",norm_" << indicator_name(indicator_at(k));
  os << '\n';
  for (const auto& r : records) {
    fmt::print(os, "{},{},{},{:.17g},{:.17g},{:.17g},{},{:.17g},{:.17g}", r.tick, r.track,
               r.source == RecordSource::Human ? "human" : "autonomous", r.station, r.lateral,
               r.angle, r.lane_index, r.command.steer, r.command.accel);
    for (std::size_t k = 0; k < kIndicatorCount; ++k) {
      os << ',';
      if (r.raw.active[k]) fmt::print(os, "{:.17g}", r.raw.value[k]);
    }
    for (double t : r.targets) fmt::print(os, ",{:.17g}", t);
    os << '\n';
  }
}

Split split_tracks(const std::vector<std::string>& tracks, SplitBy by, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error(ErrorCode::ConfigError, "split ratio must lie in (0, 1)");
  std::mt19937_64 rng(seed);
  Split out;
  if (by == SplitBy::Random) {
    std::vector<std::size_t> idx(tracks.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(idx.size())));
    out.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.validation.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  } else {
    const std::set<std::string> unique(tracks.begin(), tracks.end());
    if (unique.size() < 2) {
      throw Error(ErrorCode::SingleTrack, "a track-disjoint split needs at least two tracks");
    }
    std::vector<std::string> names(unique.begin(), unique.end());
    std::shuffle(names.begin(), names.end(), rng);
    const auto n_train = std::clamp<long long>(std::llround(ratio * static_cast<double>(names.size())), 1,
                                               static_cast<long long>(names.size()) - 1);
    const std::set<std::string> train_tracks(names.begin(), names.begin() + n_train);
    for (std::size_t i = 0; i < tracks.size(); ++i) {
      (train_tracks.count(tracks[i]) ? out.train : out.validation).push_back(i);
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  return out;
}

Split split(const std::vector<FrameRecord>& records, SplitBy by, double ratio, std::uint64_t seed) {
  std::vector<std::string> tracks;
  tracks.reserve(records.size());
  for (const auto& r : records) tracks.push_back(r.track);
  return split_tracks(tracks, by, ratio, seed);
}

}  // namespace dpd
