#include <gtest/gtest.h>

#include <sstream>
#include <sys/wait.h>

#include "kiln/cli.hpp"
#include "test_support.hpp"

namespace {

using namespace kiln;
using kiln::testing::TempDir;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::run_cli(args, {out, err});
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

class Cli : public ::testing::Test {
protected:
  TempDir dir;
  std::string catalog = (dir / "catalog").string();

  std::string write_spec(const Json& doc, const std::string& name = "spec.json") {
    write_file(dir / name, doc.dump(2));
    return (dir / name).string();
  }
  Json spec_doc(const std::string& out = "out") {
    Json doc = kiln::testing::small_spec_json(dir / out);
    doc["curate"] = true;
    return doc;
  }
};

TEST_F(Cli, ValidateOk) {
  const auto r = cli({"validate", write_spec(spec_doc())});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "OK\n");
}

TEST_F(Cli, ValidateErrorsListedOnStdout) {
  Json doc = spec_doc();
  doc["compute"]["minimal_vms"] = 9;
  doc["reliability"]["max_retries"] = -1;
  const auto r = cli({"validate", write_spec(doc)});
  EXPECT_EQ(r.code, 2);
  const auto l = lines(r.out);
  ASSERT_EQ(l.size(), 2u);
  EXPECT_NE(r.out.find("compute.minimal_vms: minimal_vms > desired_vms"), std::string::npos);
  EXPECT_NE(r.out.find("reliability.max_retries"), std::string::npos);
}

TEST_F(Cli, ValidateMissingFileAndBadJson) {
  EXPECT_EQ(cli({"validate", (dir / "absent.json").string()}).code, 3);
  write_file(dir / "bad.json", "{ not json");
  const auto r = cli({"validate", (dir / "bad.json").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(r.out.empty());
  EXPECT_FALSE(r.err.empty());
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"submit"}).code, 2);
  EXPECT_EQ(cli({"submit", "x.json", "--seed", "minus-one"}).code, 2);
  EXPECT_EQ(cli({"datasets"}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST_F(Cli, SubmitCuratesAndPlots) {
  const auto r = cli({"submit", write_spec(spec_doc()), "--catalog", catalog});
  EXPECT_EQ(r.code, 0) << r.err;
  const auto l = lines(r.out);
  ASSERT_EQ(l.size(), 1u);
  EXPECT_EQ(l[0].rfind("Complete ", 0), 0u);
  const auto report = Json::parse(read_file(dir / "out/report.json"));
  EXPECT_EQ(l[0], "Complete " + format_double(report["best_metric"].get<double>()));
  EXPECT_TRUE(fs::exists(dir / "catalog/unit/iter_0002/manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "catalog/unit/plots/cost_vs_iteration.svg"));

  const auto list = cli({"datasets", "list", "--catalog", catalog});
  EXPECT_EQ(list.code, 0);
  EXPECT_EQ(lines(list.out),
            (std::vector<std::string>{"unit/iter_0000", "unit/iter_0001", "unit/iter_0002"}));
  const auto search = cli({"datasets", "search", "iteration>0", "experiment=unit", "--catalog", catalog});
  EXPECT_EQ(lines(search.out), (std::vector<std::string>{"unit/iter_0001", "unit/iter_0002"}));
  // The parent-level --catalog spelling works too.
  EXPECT_EQ(cli({"datasets", "--catalog", catalog, "list"}).out, list.out);
}

TEST_F(Cli, SubmitSeedOverrideChangesResult) {
  Json a = spec_doc("a");
  Json b = spec_doc("b");
  a["curate"] = b["curate"] = false;
  const auto ra = cli({"submit", write_spec(a, "a.json")});
  const auto rb = cli({"submit", write_spec(b, "b.json"), "--seed", "7"});
  const auto rc = cli({"submit", write_spec(a, "a.json"), "--seed", "42"});
  EXPECT_EQ(ra.code, 0);
  EXPECT_EQ(rb.code, 0);
  EXPECT_NE(ra.out, rb.out);
  EXPECT_EQ(ra.out, rc.out);
}

TEST_F(Cli, SubmitFailedRunExitsOne) {
  Json doc = spec_doc();
  doc["faults"]["p_provision_fail"] = 1.0;
  const auto r = cli({"submit", write_spec(doc), "--catalog", catalog});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.out, "Failed null\n");
  EXPECT_NE(r.err.find("QuorumFailure"), std::string::npos);
}

TEST_F(Cli, SubmitInvalidSpecExitsTwo) {
  Json doc = spec_doc();
  doc["compute"]["desired_vms"] = "four";
  const auto r = cli({"submit", write_spec(doc)});
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(r.out.empty());
}

TEST_F(Cli, SubmitUnwritableCatalogExitsThree) {
  write_file(dir / "blocker", "x");
  const auto r = cli({"submit", write_spec(spec_doc()), "--catalog", (dir / "blocker/cat").string()});
  EXPECT_EQ(r.code, 3);
}

TEST_F(Cli, SweepReportsEachCombination) {
  Json doc = spec_doc();
  doc["name"] = "sw";
  doc["sweep"] = {{"payload.w", {0.0, 1e-3}}, {"faults.p_provision_fail", {0.0, 1.0}}};
  const auto r = cli({"sweep", write_spec(doc), "--catalog", catalog});
  EXPECT_EQ(r.code, 1);
  const auto l = lines(r.out);
  ASSERT_EQ(l.size(), 4u);
  EXPECT_EQ(l[0].rfind("0 Complete ", 0), 0u);
  EXPECT_EQ(l[1], "1 Failed null");
  EXPECT_EQ(l[3], "3 Failed null");
  EXPECT_TRUE(fs::exists(dir / "out/sweep_summary.json"));
  EXPECT_TRUE(fs::exists(dir / "catalog/sw_2/plots/cost_vs_iteration.csv"));

  doc["sweep"] = {{"payload.w", {0.0, 1e-3}}};
  // Re-curating into the same experiment names is a duplicate-dataset failure.
  const auto again = cli({"sweep", write_spec(doc), "--catalog", catalog});
  EXPECT_EQ(again.code, 1);
  EXPECT_NE(again.err.find("already exists"), std::string::npos);
  doc["curate"] = false;
  EXPECT_EQ(cli({"sweep", write_spec(doc)}).code, 0);
  doc["sweep"] = {{"payload.nothing", {1}}};
  EXPECT_EQ(cli({"sweep", write_spec(doc)}).code, 2);
}

TEST_F(Cli, DatasetsErrors) {
  EXPECT_EQ(cli({"datasets", "list", "--catalog", (dir / "nope").string()}).code, 3);
  fs::create_directories(catalog);
  EXPECT_EQ(cli({"datasets", "search", "best_cost!1", "--catalog", catalog}).code, 2);
  const auto empty = cli({"datasets", "search", "--catalog", catalog});
  EXPECT_EQ(empty.code, 0);
  EXPECT_TRUE(empty.out.empty());
}

int spawn(const std::string& command) {
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(Cli, InstalledBinaryExitCodes) {
  const std::string bin = KILN_BIN_PATH;
  const std::string demo = KILN_DEMO_DIR;
  const std::string quiet = " > " + (dir / "stdout").string() + " 2>/dev/null";
  EXPECT_EQ(spawn(bin + " validate " + demo + "/demo.json" + quiet), 0);
  EXPECT_EQ(read_file(dir / "stdout"), "OK\n");
  EXPECT_EQ(spawn(bin + " validate " + demo + "/sweep.json" + quiet), 2);
  EXPECT_EQ(spawn(bin + " validate " + (dir / "none.json").string() + quiet), 3);
  EXPECT_EQ(spawn(bin + " bogus" + quiet), 2);
}

}  // namespace
