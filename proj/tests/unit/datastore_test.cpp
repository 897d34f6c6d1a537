#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "dpd/datastore.hpp"
#include "test_support.hpp"

using namespace dpd;

namespace {

FrameRecord sample_record(std::int64_t tick, std::uint64_t seed, const DatasetHeader& header,
                          const std::string& track = "oval") {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  FrameRecord r;
  r.tick = tick;
  r.station = 100.0 + tick;
  r.lateral = 0.25;
  r.angle = -0.01;
  r.lane_index = 1;
  r.curvature = 1.0 / 150.0;
  r.raster = Raster(header.camera.width, header.camera.height_px);
  for (auto& p : r.raster.pixels) p = u(rng);
  r.raw.set(Indicator::Angle, -0.01);
  r.raw.set(Indicator::ToMarkingML, 1.75);
  r.raw.set(Indicator::ToMarkingMR, 2.25);
  r.raw.set(Indicator::DistMM, 12.5 + tick);
  r.targets = normalize(r.raw, header.spec);
  r.command = {0.1, -0.2};
  r.source = tick % 2 ? RecordSource::Human : RecordSource::Autonomous;
  r.track = track;
  return r;
}

std::vector<unsigned char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Datastore, RoundTripIsBitExact) {
  test::TempDir dir("ds_roundtrip");
  DatasetHeader header;
  header.metadata = R"({"scenario":"x"})";
  std::vector<FrameRecord> written;
  {
    DatasetWriter w(dir / "a.dpd", header);
    for (int i = 0; i < 25; ++i) {
      written.push_back(sample_record(i, i, header));
      w.append(written.back());
    }
    EXPECT_EQ(w.records_written(), 25u);
  }
  const auto ds = read_all(dir / "a.dpd");
  EXPECT_EQ(ds.header, header);
  ASSERT_EQ(ds.records.size(), written.size());
  for (std::size_t i = 0; i < written.size(); ++i) EXPECT_TRUE(ds.records[i] == written[i]) << i;
}

TEST(Datastore, EmptyDatasetReadsAsEmpty) {
  test::TempDir dir("ds_empty");
  { DatasetWriter w(dir / "e.dpd", DatasetHeader{}); }
  EXPECT_TRUE(read_all(dir / "e.dpd").records.empty());
}

TEST(Datastore, AppendRequiresMatchingHeader) {
  test::TempDir dir("ds_append");
  DatasetHeader header;
  { DatasetWriter w(dir / "a.dpd", header); w.append(sample_record(0, 0, header)); }
  {
    auto w = DatasetWriter::append_to(dir / "a.dpd", header);
    w.append(sample_record(1, 1, header));
  }
  EXPECT_EQ(read_all(dir / "a.dpd").records.size(), 2u);
  DatasetHeader other = header;
  other.spec = NormalizationSpec::defaults(3.75, 60.0);
  EXPECT_EQ(test::error_code_of([&] { DatasetWriter::append_to(dir / "a.dpd", other); }),
            ErrorCode::SpecMismatch);
}

TEST(Datastore, TruncationNamesTheRecordOffset) {
  test::TempDir dir("ds_trunc");
  DatasetHeader header;
  std::vector<std::uintmax_t> ends;
  {
    DatasetWriter w(dir / "t.dpd", header);
    w.flush();
    ends.push_back(std::filesystem::file_size(dir / "t.dpd"));
    for (int i = 0; i < 3; ++i) {
      w.append(sample_record(i, i, header));
      w.flush();
      ends.push_back(std::filesystem::file_size(dir / "t.dpd"));
    }
  }
  std::filesystem::resize_file(dir / "t.dpd", ends[2] + 10);
  try {
    read_all(dir / "t.dpd");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorruptRecord);
    EXPECT_NE(std::string(e.what()).find("byte offset " + std::to_string(ends[2])), std::string::npos)
        << e.what();
  }
}

TEST(Datastore, CrcCatchesSingleBitFlips) {
  test::TempDir dir("ds_crc");
  DatasetHeader header;
  std::uintmax_t header_end = 0;
  {
    DatasetWriter w(dir / "c.dpd", header);
    w.flush();
    header_end = std::filesystem::file_size(dir / "c.dpd");
    for (int i = 0; i < 3; ++i) w.append(sample_record(i, i, header));
  }
  const auto clean = slurp(dir / "c.dpd");
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> pos(header_end, clean.size() - 1);
  int caught = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto bytes = clean;
    bytes[pos(rng)] ^= static_cast<unsigned char>(1u << (rng() % 8));
    spit(dir / "f.dpd", bytes);
    try {
      read_all(dir / "f.dpd");
    } catch (const Error& e) {
      if (e.code() == ErrorCode::CorruptRecord) ++caught;
    }
  }
  EXPECT_EQ(caught, 1000);
}

TEST(Datastore, BadMagicAndMissingFile) {
  test::TempDir dir("ds_magic");
  spit(dir / "x.dpd", {'n', 'o', 'p', 'e', 0, 0, 0, 0});
  EXPECT_EQ(test::error_code_of([&] { read_all(dir / "x.dpd"); }), ErrorCode::CorruptRecord);
  EXPECT_EQ(test::error_code_of([&] { read_all(dir / "none.dpd"); }), ErrorCode::IoFailure);
}

TEST(Split, RandomSizesAndDeterminism) {
  std::vector<std::string> tracks(1000, "oval");
  const auto a = split_tracks(tracks, SplitBy::Random, 0.9, 3);
  EXPECT_EQ(a.train.size(), 900u);
  EXPECT_EQ(a.validation.size(), 100u);
  const auto b = split_tracks(tracks, SplitBy::Random, 0.9, 3);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_EQ(test::error_code_of([&] { split_tracks(tracks, SplitBy::Random, 1.0, 0); }),
            ErrorCode::ConfigError);
}

TEST(Split, ByTrackIsDisjoint) {
  std::vector<std::string> tracks;
  for (int i = 0; i < 300; ++i) tracks.push_back(std::string(1, static_cast<char>('A' + i % 3)));
  const auto s = split_tracks(tracks, SplitBy::Track, 0.67, 1);
  std::set<std::string> train, val;
  for (auto i : s.train) train.insert(tracks[i]);
  for (auto i : s.validation) val.insert(tracks[i]);
  EXPECT_EQ(train.size(), 2u);
  EXPECT_EQ(val.size(), 1u);
  for (const auto& t : val) EXPECT_EQ(train.count(t), 0u);
  EXPECT_EQ(s.train.size() + s.validation.size(), tracks.size());
  EXPECT_EQ(test::error_code_of([] { split_tracks({"A", "A"}, SplitBy::Track, 0.5, 0); }),
            ErrorCode::SingleTrack);
}

TEST(Datastore, LabelCsvHasOneRowPerRecord) {
  DatasetHeader header;
  std::vector<FrameRecord> recs{sample_record(0, 0, header), sample_record(1, 1, header)};
  std::stringstream ss;
  export_labels_csv(ss, recs);
  std::string line;
  int lines = 0;
  while (std::getline(ss, line)) ++lines;
  EXPECT_EQ(lines, 3);
}

TEST(Datastore, MakeRecordNormalizesTruth) {
  WorldState w;
  w.track = std::make_shared<const TrackGeometry>(make_straight_track(500.0, 2));
  w.cars.push_back(make_car(*w.track, 0, 50.0, 2.0, 10.0, true));
  w.cars.push_back(make_car(*w.track, 1, 70.0, 2.0, 10.0));
  DatasetHeader header;
  const auto truth = compute_affordance(w, 0);
  const auto rec = make_record(w, 0, header, Raster(64, 48), truth, {0.0, 0.5}, RecordSource::Human);
  EXPECT_EQ(rec.targets, normalize(truth, header.spec));
  EXPECT_EQ(rec.lane_index, 0);
  EXPECT_EQ(rec.source, RecordSource::Human);
  EXPECT_EQ(rec.track, "straight");
}
