#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "cfd/cli.hpp"
#include "cfd/report.hpp"

namespace fs = std::filesystem;
using cfd::cli::run;
using cfd::report::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cfd_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Writes a synthetic fixture and returns the data flags for it.
std::vector<std::string> synth(const fs::path& dir, const std::string& seed = "3") {
  REQUIRE(run({"synth", "--rows", "50", "--seed", seed, "--out-dir", dir.string()}) == 0);
  return {"--data", (dir / "data.csv").string(), "--schema", (dir / "schema.json").string()};
}

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("audit reruns produce identical deterministic content") {
  const auto dir = scratch("determinism");
  const auto data = synth(dir);
  const std::vector<std::string> flags{"--mode", "small", "--score", "combined", "--seed", "7", "--phi", "always"};
  const auto a = dir / "a.json", b = dir / "b.json", c = dir / "c.json";
  REQUIRE(run(cat(cat({"audit"}, data), cat(flags, {"--jobs", "1", "--out", a.string()}))) == 0);
  REQUIRE(run(cat(cat({"audit"}, data), cat(flags, {"--jobs", "1", "--out", b.string()}))) == 0);
  REQUIRE(run(cat(cat({"audit"}, data), cat(flags, {"--jobs", "3", "--out", c.string()}))) == 0);
  const json ja = cfd::report::read_json(a);
  CHECK(cfd::report::deterministic_view(ja) == cfd::report::deterministic_view(cfd::report::read_json(b)));
  CHECK(cfd::report::deterministic_view(ja) == cfd::report::deterministic_view(cfd::report::read_json(c)));
  CHECK(ja["results"].size() == 10);
  CHECK(fs::exists(dir / "a.csv"));
  // Loading validates the stored aggregates.
  CHECK_NOTHROW(cfd::report::RunReport::from_json(ja));
}

TEST_CASE("random scoring is seeded") {
  const auto dir = scratch("random");
  const auto data = synth(dir);
  const std::vector<std::string> flags{"--mode", "large", "--m", "2", "--score", "random", "--seed", "7",
                                       "--phi", "always", "--psi", "same_group"};
  const auto a = dir / "a.json", b = dir / "b.json";
  REQUIRE(run(cat(cat({"audit"}, data), cat(flags, {"--out", a.string()}))) == 0);
  REQUIRE(run(cat(cat({"audit"}, data), cat(flags, {"--out", b.string()}))) == 0);
  const json ja = cfd::report::read_json(a), jb = cfd::report::read_json(b);
  CHECK(ja["results"] == jb["results"]);
}

TEST_CASE("usage and configuration errors exit with 2") {
  const auto dir = scratch("errors");
  const auto data = synth(dir);
  CHECK(run({"audit", "--bogus"}) == 2);
  CHECK(run({"frobnicate"}) == 2);
  CHECK(run(cat(cat({"audit"}, data), {"--mode", "medium"})) == 2);
  CHECK(run(cat(cat({"audit"}, data), {"--score", "influence"})) == 2);
  CHECK(run(cat(cat({"audit"}, data), {"--tests", "x,1"})) == 2);
  CHECK(run(cat(cat({"audit"}, data), {"--mode", "small", "--m", "2"})) == 2);
  CHECK(run(cat(cat({"scores"}, data), {"--test", "9999"})) == 2);
}

TEST_CASE("dataset errors exit with 3") {
  const auto dir = scratch("dataset");
  const auto data = synth(dir);
  {
    std::ofstream f(dir / "broken.csv");
    f << "a,b\n1,2\n";
  }
  CHECK(run({"audit", "--data", (dir / "broken.csv").string(), "--schema", (dir / "schema.json").string()}) == 3);
  CHECK(run({"prepare", "--data", (dir / "missing.csv").string(), "--schema", (dir / "schema.json").string()}) ==
        3);
}

TEST_CASE("scores emit one row per train example") {
  const auto dir = scratch("scores");
  const auto data = synth(dir);
  const auto a = dir / "a.csv", b = dir / "b.csv";
  const json report_probe = [&] {
    REQUIRE(run(cat(cat({"audit"}, data), {"--phi", "always", "--t", "1", "--out", (dir / "r.json").string()})) == 0);
    return cfd::report::read_json(dir / "r.json");
  }();
  const std::string test = std::to_string(report_probe["results"][0]["test_index"].get<std::size_t>());
  REQUIRE(run(cat(cat({"scores"}, data), {"--test", test, "--psi", "all", "--out", a.string()})) == 0);
  REQUIRE(run(cat(cat({"scores"}, data), {"--test", test, "--psi", "all", "--out", b.string()})) == 0);
  const std::string s = slurp(a);
  CHECK(s == slurp(b));
  // Header plus 30 train rows, all psi-included.
  CHECK(std::count(s.begin(), s.end(), '\n') == 31);
  CHECK(s.find(",0\n") == std::string::npos);
}

TEST_CASE("oracle with an empty test list writes an empty golden file") {
  const auto dir = scratch("oracle");
  const auto data = synth(dir);
  const auto out = dir / "gold.json";
  REQUIRE(run(cat(cat({"oracle"}, data), {"--tests", "", "--out", out.string()})) == 0);
  CHECK(cfd::report::read_json(out)["cases"].empty());

  REQUIRE(run(cat(cat({"oracle"}, data), {"--phi", "always", "--psi", "same_group", "--out", out.string()})) == 0);
  const auto gold = cfd::report::OracleReport::from_json(cfd::report::read_json(out));
  CHECK(gold.cases.size() == 10);
  for (const auto& c : gold.cases) CHECK(c.retrains <= c.n_psi);

  REQUIRE(run(cat(cat({"oracle"}, data), {"--phi", "always", "--cap", "2", "--out", out.string()})) == 0);
  const auto refused = cfd::report::OracleReport::from_json(cfd::report::read_json(out));
  bool any_refused = false;
  for (const auto& c : refused.cases) any_refused = any_refused || c.refused;
  CHECK(any_refused);
}

TEST_CASE("compare checks dataset hashes and writes overlap data") {
  const auto d1 = scratch("compare1");
  const auto d2 = scratch("compare2");
  const auto data1 = synth(d1, "3");
  const auto data2 = synth(d2, "4");
  const auto a = d1 / "a.json", b = d1 / "b.json", other = d2 / "o.json";
  REQUIRE(run(cat(cat({"audit"}, data1), {"--phi", "always", "--score", "combined", "--out", a.string()})) == 0);
  REQUIRE(run(cat(cat({"audit"}, data1), {"--phi", "always", "--score", "random", "--out", b.string()})) == 0);
  REQUIRE(run(cat(cat({"audit"}, data2), {"--phi", "always", "--out", other.string()})) == 0);

  const auto cmp = d1 / "cmp.json", csv = d1 / "cmp.csv";
  REQUIRE(run({"compare", a.string(), b.string(), "--labels", "ours,random", "--out", cmp.string(), "--csv",
               csv.string()}) == 0);
  const json j = cfd::report::read_json(cmp);
  std::size_t sum = 0;
  for (const auto& r : j["regions"]) sum += r["count"].get<std::size_t>();
  CHECK(sum == j["union"].get<std::size_t>());
  CHECK(fs::exists(csv));

  CHECK(run({"compare", a.string(), other.string()}) != 0);
}
