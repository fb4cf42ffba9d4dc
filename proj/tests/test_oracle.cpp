#include "robinspec/errors.hpp"
#include "robinspec/oracle.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace robinspec;
using namespace robinspec::test;

TEST_CASE("forward oracle caches repeated queries") {
  ForwardOracle oracle(interval_model(101), 4);
  const Eigen::Vector2d a(0.1, 0.2), b(0.1, 0.3);
  const Eigen::VectorXd first = oracle.eigenvalues(a);
  CHECK(oracle.solves() == 1);
  const Eigen::VectorXd again = oracle.eigenvalues(a);
  CHECK(oracle.solves() == 1);
  CHECK(std::memcmp(first.data(), again.data(), sizeof(double) * 4) == 0);
  oracle.eigenvalues(b);
  CHECK(oracle.solves() == 2);
  // -0.0 and 0.0 are the same query.
  oracle.eigenvalues(Eigen::Vector2d(0.0, 0.0));
  oracle.eigenvalues(Eigen::Vector2d(-0.0, 0.0));
  CHECK(oracle.solves() == 3);
  CHECK(oracle.count() == 4);
  CHECK(oracle.boundary_size() == 2);
  CHECK_THROWS_AS(oracle.eigenvalues(Eigen::Vector3d::Zero()), ContractError);
}

TEST_CASE("recording oracle keeps distinct queries in first-seen order") {
  ForwardOracle inner(interval_model(51), 3);
  RecordingOracle rec(inner);
  rec.eigenvalues(Eigen::Vector2d(0.0, 0.0));
  rec.eigenvalues(Eigen::Vector2d(0.5, 0.0));
  rec.eigenvalues(Eigen::Vector2d(0.0, 0.0));
  REQUIRE(rec.records().size() == 2);
  CHECK(rec.records()[1].omega(0) == 0.5);
}

TEST_CASE("oracle file round-trips bit-exactly and replays") {
  ForwardOracle inner(interval_model(51), 3);
  RecordingOracle rec(inner);
  const Eigen::Vector2d q1(0.1, 1.0 / 3.0), q2(-0.7, 1e-300);
  const Eigen::VectorXd v1 = rec.eigenvalues(q1), v2 = rec.eigenvalues(q2);
  const auto path = std::filesystem::temp_directory_path() / "robinspec_oracle_roundtrip.json";
  write_oracle_file(path, rec.records());

  const auto back = read_oracle_file(path);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& orig = rec.records()[i];
    CHECK(std::memcmp(orig.omega.data(), back[i].omega.data(), sizeof(double) * 2) == 0);
    CHECK(std::memcmp(orig.eigenvalues.data(), back[i].eigenvalues.data(), sizeof(double) * 3) == 0);
  }

  ReplayOracle replay = load_replay_oracle(path, 0, 0);
  CHECK(replay.count() == 3);
  CHECK(replay.boundary_size() == 2);
  const Eigen::VectorXd r1 = replay.eigenvalues(q1);
  CHECK(std::memcmp(r1.data(), v1.data(), sizeof(double) * 3) == 0);
  CHECK(std::memcmp(replay.eigenvalues(q2).data(), v2.data(), sizeof(double) * 3) == 0);
  CHECK_THROWS_AS(replay.eigenvalues(Eigen::Vector2d(0.1, 0.3333)), MissingQueryError);
  std::filesystem::remove(path);
}

TEST_CASE("replay records with inconsistent dimensions are configuration errors") {
  std::vector<OracleRecord> records = {{Eigen::Vector2d(0, 0), Eigen::Vector3d(1, 2, 3)},
                                       {Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 2)}};
  CHECK_THROWS_AS(ReplayOracle(records, 3, 2), ConfigError);
  const auto path = std::filesystem::temp_directory_path() / "robinspec_oracle_bad.json";
  {
    std::ofstream out(path);
    out << "{\"omega\": []}";
  }
  CHECK_THROWS_AS(read_oracle_file(path), ConfigError);
  CHECK_THROWS_AS(read_oracle_file(path.string() + ".missing"), ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("field hashes are 16 hex characters") {
  const std::string h = field_hash_hex(Eigen::Vector2d(0.25, -1.0));
  CHECK(h.size() == 16);
  CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(h != field_hash_hex(Eigen::Vector2d(0.25, 1.0)));
}
