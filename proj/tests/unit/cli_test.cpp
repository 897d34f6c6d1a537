#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "dpd/datastore.hpp"
#include "test_support.hpp"

using dpd::test::data_path;

namespace {

struct Run {
  int code = -1;
  std::string out;  // stdout and stderr
};

Run dpdrive(const std::string& args) {
  const std::string cmd = std::string("'") + DPDRIVE_PATH + "' " + args + " 2>&1";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string scn(const std::string& name) { return data_path("scenarios/" + name + ".scn").string(); }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Cli, UnknownFlagPrintsUsageAndExitsTwo) {
  const auto r = dpdrive("drive --scenario " + scn("highway_1lane") + " --bogus");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("Usage"), std::string::npos) << r.out;
}

TEST(Cli, MissingSubcommandOrScenarioExitsTwo) {
  EXPECT_EQ(dpdrive("").code, 2);
  EXPECT_EQ(dpdrive("drive --scenario /nonexistent/x.scn").code, 2);
}

TEST(Cli, BadOverrideIsAConfigError) {
  const auto r = dpdrive("drive --scenario " + scn("highway_1lane") + " --set no.such.key=1");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("no.such.key"), std::string::npos) << r.out;
}

TEST(Cli, RuntimeFailureExitsThree) {
  const auto r = dpdrive("drive --scenario " + scn("highway_1lane") + " --perceiver learned --model /nonexistent.model");
  EXPECT_EQ(r.code, 3) << r.out;
}

TEST(Cli, DriveWritesReportsAndReplayVerifiesTheLog) {
  dpd::test::TempDir dir("cli_drive");
  const auto out = dir.path().string();
  const auto r = dpdrive("drive --scenario " + scn("highway_2lane") + " --duration 20 --seed 4 --pairs --out " + out);
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* f : {"report.txt", "report.csv", "trajectory.csv", "pairs.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  const auto traj = slurp(dir / "trajectory.csv");
  EXPECT_EQ(std::count(traj.begin(), traj.end(), '\n'), 201);

  const auto rp = dpdrive("replay --scenario " + scn("highway_2lane") + " --seed 4 --log " + (dir / "trajectory.csv").string());
  EXPECT_EQ(rp.code, 0) << rp.out;
  EXPECT_NE(rp.out.find("replay matches 200 rows"), std::string::npos) << rp.out;

  // A different start pose makes the replay diverge.
  const auto bad = dpdrive("replay --scenario " + scn("highway_2lane") + " --seed 4 --set ego.lateral_offset=0.5 --log " + (dir / "trajectory.csv").string());
  EXPECT_EQ(bad.code, 3) << bad.out;

  // Oracle pairs carry zero error on every indicator.
  const auto ev = dpdrive("eval --pairs " + (dir / "pairs.csv").string() + " --format csv");
  ASSERT_EQ(ev.code, 0) << ev.out;
  std::istringstream lines(ev.out);
  std::string header;
  std::string values;
  std::getline(lines, header);
  std::getline(lines, values);
  std::istringstream cells(values);
  std::string cell;
  int numeric = 0;
  while (std::getline(cells, cell, ',')) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end != cell.c_str() && *end == '\0') {
      EXPECT_EQ(v, 0.0) << values;
      ++numeric;
    }
  }
  EXPECT_GE(numeric, 5) << ev.out;
}

TEST(Cli, RecordTrainEvalPipeline) {
  dpd::test::TempDir dir("cli_pipeline");
  const auto data = (dir / "train.dpd").string();
  const auto model = (dir / "m.model").string();
  auto r = dpdrive("record --headless --scenario " + scn("highway_2lane") + " --frames 64 --every 2 --wander 0.5 --out " + data);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(dpd::read_all(data).records.size(), 64u);

  r = dpdrive("train --data " + data + " --out " + model + " --iterations 20 --batch 16 --hidden 16 --lr 0.01");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(std::filesystem::exists(model));

  r = dpdrive("eval --model " + model + " --data " + data + " --baseline-data " + data);
  EXPECT_EQ(r.code, 0) << r.out;

  r = dpdrive("drive --scenario " + scn("highway_2lane") + " --duration 2 --perceiver learned --model " + model);
  EXPECT_EQ(r.code, 0) << r.out;
}

TEST(Cli, EvalNeedsExactlyOneSource) {
  EXPECT_EQ(dpdrive("eval").code, 2);
}
