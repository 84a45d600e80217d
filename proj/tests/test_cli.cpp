#include "seqopf/cli.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <sstream>

using namespace seqopf;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "seqopf");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

}  // namespace

TEST(Cli, PowerFlowTable) {
  const auto r = run_cli({"pf", "--feeder", "ieee13", "--scenario", "case2"});
  EXPECT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find("voltage profile: oracle"), std::string::npos);
  EXPECT_NE(r.out.find("650-632"), std::string::npos);
}

TEST(Cli, OpfJsonIsDeterministic) {
  const std::vector<std::string> args{"opf", "--feeder", "ieee13", "--scenario", "case2", "--format", "json"};
  const auto a = run_cli(args), b = run_cli(args);
  ASSERT_EQ(a.code, cli::kExitOk) << a.err;
  EXPECT_EQ(a.out, b.out);
  const auto j = nlohmann::json::parse(a.out);
  EXPECT_EQ(j["summary"]["status"], "solved");
  EXPECT_EQ(j["summary"]["formulation"], "symmetrical");
}

TEST(Cli, CsvProfile) {
  const auto r = run_cli({"opf", "--feeder", "synthetic6", "--format", "csv", "--formulation", "bfm"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_EQ(r.out.rfind("node,phase,vm_pu,va_deg\n", 0), 0u);
}

TEST(Cli, MissingFeederIsJsonError) {
  const auto r = run_cli({"opf", "--feeder", "no-such-feeder"});
  EXPECT_EQ(r.code, cli::kExitFailure);
  const auto j = nlohmann::json::parse(r.err);
  EXPECT_EQ(j["error"], "io");
}

TEST(Cli, ParseErrorCarriesLocation) {
  const std::string path = ::testing::TempDir() + "bad_feeder.yaml";
  {
    std::ofstream f(path);
    f << "schema_version: 1\nmeta:\n  name: x\n  s_base_kva: lots\n";
  }
  const auto r = run_cli({"pf", "--feeder", path});
  EXPECT_EQ(r.code, cli::kExitFailure);
  const auto j = nlohmann::json::parse(r.err);
  EXPECT_EQ(j["error"], "parse");
  EXPECT_EQ(j["line"], 4);
  EXPECT_EQ(j["field"], "meta.s_base_kva");
}

TEST(Cli, BadOptionValue) {
  const auto r = run_cli({"opf", "--feeder", "ieee13", "--objective", "fastest"});
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_NE(r.err.find("fastest"), std::string::npos) << r.err;
}
