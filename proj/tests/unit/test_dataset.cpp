#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include "axisfit/dataset.hpp"
#include "axisfit/simulation.hpp"

using namespace axisfit;

namespace {

Dataset synthetic(int m, int n, std::uint64_t seed) {
  Dataset d;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < m; ++i) {
    d.subjects.push_back(simulate_subject(default_angles(), n, MotionModel{}, 0.017, rng, "p" + std::to_string(i),
                                          i % 2 ? "B" : "A"));
  }
  return d;
}

const char* kIdentity = "s1,A,0,1,0,0,0,1,0,0,0,1\n";

}  // namespace

TEST_CASE("single identity row") {
  std::istringstream in(kIdentity);
  const Dataset d = read_dataset(in);
  REQUIRE(d.subjects.size() == 1);
  CHECK(d.subjects[0].size() == 1);
  CHECK(d.subjects[0].group_id() == "A");
}

TEST_CASE("write then load is the identity") {
  const Dataset d = synthetic(3, 12, 1);
  const auto path = std::filesystem::temp_directory_path() / "axisfit_roundtrip.csv";
  write_dataset(d, path.string());
  const Dataset back = load_dataset(path.string());
  std::filesystem::remove(path);
  REQUIRE(back.subjects.size() == d.subjects.size());
  for (std::size_t i = 0; i < d.subjects.size(); ++i) {
    CHECK(back.subjects[i].subject_id() == d.subjects[i].subject_id());
    CHECK(back.subjects[i].group_id() == d.subjects[i].group_id());
    REQUIRE(back.subjects[i].size() == d.subjects[i].size());
    for (std::size_t j = 0; j < d.subjects[i].size(); ++j) {
      CHECK((back.subjects[i].rotations()[j].matrix() - d.subjects[i].rotations()[j].matrix()).norm() == 0.0);
    }
  }
}

TEST_CASE("reflection is rejected") {
  const std::string text = std::string(kIdentity) + "s1,A,1,1,0,0,0,1,0,0,0,-1\n";
  std::istringstream strict(text);
  try {
    read_dataset(strict);
    FAIL("expected validation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::validation);
    CHECK(std::string(e.what()).find("reflection") != std::string::npos);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::istringstream lenient(text);
  const Dataset d = read_dataset(lenient, {FrameFormat::automatic, false});
  REQUIRE(d.rejected.size() == 1);
  CHECK(d.rejected[0].line == 2);
  CHECK(d.rejected[0].frame_index == 1);
  CHECK(d.rejected[0].reason.find("reflection") != std::string::npos);
  CHECK(d.total_frames() == 1);
}

TEST_CASE("parse errors carry line numbers") {
  for (const std::string bad : {"s1,A,0,1,0,0\ns1,A,1,1,0,0,0,1,0,0,0\n", "s1,A,0,1,0,0,0,1,0,0,0,x\n",
                                "# source=x\ns1,A,0,1,0,0,0,1,0,0,0,1\ns1,A,0,1,0,0,0,1,0,0,0,1\n"}) {
    std::istringstream in(bad);
    try {
      read_dataset(in);
      FAIL("expected parse error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::parse);
      CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
  }
}

TEST_CASE("metadata, header and cardan rows") {
  std::istringstream in(
      "# source=lab\n# sampling_hz=50\nsubject_id,group_id,frame_index,alpha,gamma,phi\n"
      "a,,1,30,17,10\na,,0,0,0,0\n");
  const Dataset d = read_dataset(in);
  CHECK(d.metadata.source == "lab");
  CHECK(d.metadata.sampling_hz == 50.0);
  REQUIRE(d.subjects[0].size() == 2);
  CHECK(d.subjects[0].rotations()[0].matrix().isIdentity(1e-15));
  const CardanAngles c = cardan_decompose_xzy(d.subjects[0].rotations()[1]);
  CHECK(rad_to_deg(c.alpha) == doctest::Approx(30.0));
  CHECK(rad_to_deg(c.gamma) == doctest::Approx(17.0));
  CHECK(rad_to_deg(c.phi) == doctest::Approx(10.0));
}

TEST_CASE("subsampling") {
  const Dataset d = synthetic(2, 1500, 2);
  const Dataset s = subsample(d, 30);
  CHECK(s.subjects[0].size() == 50);
  CHECK(s.metadata.stride == 30);
  CHECK((s.subjects[1].rotations()[2].matrix() - d.subjects[1].rotations()[60].matrix()).norm() == 0.0);
  CHECK(subsample(d, 1).total_frames() == d.total_frames());
  CHECK_THROWS_AS(subsample(d, 0), Error);
  try {
    subsample(d, 2000);
    FAIL("expected too_few_frames");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::too_few_frames);
  }
}

TEST_CASE("subject lookup") {
  const Dataset d = synthetic(2, 6, 3);
  CHECK(d.subject("p1").group_id() == "B");
  CHECK_THROWS_AS(d.subject("zz"), Error);
}
