// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

// End-to-end runs of the `ran` binary.

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>

#include "ran/io.hpp"

namespace ran {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("ran_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(RAN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::map<std::string, std::string> metrics(const fs::path& p) {
  std::map<std::string, std::string> m;
  std::istringstream in(read_file(p));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "metric,value");
  while (std::getline(in, line)) {
    const auto c = line.find(',');
    m[line.substr(0, c)] = line.substr(c + 1);
  }
  return m;
}

TEST(Cli, TrainWritesEverythingAndRepeatsExactly) {
  const auto a = scratch("train_a"), b = scratch("train_b");
  const std::string args = " train --benchmark runge --epochs 200 --seed 5 --out ";
  ASSERT_EQ(run(args + a.string()), 0);
  ASSERT_EQ(run(args + b.string()), 0);
  for (const char* f : {"manifest.json", "model.json", "metrics.csv", "train_log.csv", "train_report.json", "results.csv"})
    EXPECT_TRUE(fs::exists(a / f)) << f;
  EXPECT_EQ(read_file(a / "metrics.csv"), read_file(b / "metrics.csv"));
  EXPECT_EQ(read_file(a / "model.json"), read_file(b / "model.json"));
  EXPECT_EQ(read_file(a / "train_log.csv"), read_file(b / "train_log.csv"));

  const auto man = read_json(a / "manifest.json");
  EXPECT_EQ(man["seed"], 5);
  EXPECT_FALSE(man["version"].get<std::string>().empty());
  EXPECT_EQ(man["config"]["train"]["epochs"], 200);
  const auto m = metrics(a / "metrics.csv");
  EXPECT_EQ(m.at("params"), "11");
  EXPECT_EQ(m.at("diverged"), "0");
  EXPECT_TRUE(std::isfinite(std::stod(m.at("test_mse"))));
  EXPECT_EQ(std::get<AnovaModel>(load_model(a / "model.json")).num_params(), 11u);

  const auto c = scratch("train_c");
  ASSERT_EQ(run(" train --benchmark runge --epochs 200 --seed 6 --out " + c.string()), 0);
  EXPECT_NE(read_file(a / "model.json"), read_file(c / "model.json"));
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run("--version"), 0);
  EXPECT_EQ(run("train --bogus"), 2);
  EXPECT_EQ(run("train --benchmark nope --out " + scratch("x").string()), 2);
  EXPECT_EQ(run("train --benchmark runge --data d.csv --out " + scratch("x").string()), 2);
  EXPECT_EQ(run("train --benchmark runge --degrees 4 --out " + scratch("x").string()), 2);
  EXPECT_EQ(run("eval --model " + scratch("missing").string() + "/model.json --benchmark runge"), 2);

  const auto cfg = scratch("cfg") / "c.json";
  write_file_atomic(cfg, "{\"epoch\": 3}");
  EXPECT_EQ(run("train --benchmark runge --config " + cfg.string() + " --out " + scratch("x").string()), 2);

  const auto out = scratch("diverge");
  EXPECT_EQ(run("train --benchmark runge --epochs 5 --lr 1e200 --out " + out.string()), 3);
  EXPECT_EQ(metrics(out / "metrics.csv").at("diverged"), "1");
}

TEST(Cli, CsvDataEvalBoundInfluenceDiscover) {
  const auto dir = scratch("csv");
  fs::create_directories(dir);
  const auto data = dir / "d.csv";
  write_file_atomic(data, "x0,x1,y0\n0,0,1\n1,0,2\n0,1,3\n1,1,5\n0.5,0.5,2.5\n0.2,0.7,2.6\n");
  ASSERT_EQ(run("train --data " + data.string() + " --epochs 30 --out " + (dir / "fit").string()), 0);
  const auto model = (dir / "fit" / "model.json").string();

  ASSERT_EQ(run("eval --model " + model + " --data " + data.string() + " --out " + (dir / "eval").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "eval" / "metrics.csv"));

  ASSERT_EQ(run("bound --model " + model + " --radius 2 --out " + (dir / "bound").string()), 0);
  const auto lj = read_json(dir / "bound" / "lipschitz.json");
  EXPECT_EQ(lj["units"].size(), 2u);  // univariate units only
  EXPECT_GE(lj["min_margin"].get<double>(), 0.0);
  EXPECT_TRUE(fs::exists(dir / "bound" / "lipschitz_profile.csv"));

  ASSERT_EQ(run("influence --model " + model + " --data " + data.string() +
                " --query 0,1 --update 2,3 --out " + (dir / "inf").string()),
            0);
  const auto csv = read_file(dir / "inf" / "influence.csv");
  EXPECT_EQ(csv.rfind("t,x_u_index,x_o_index,channel,value\n", 0), 0u);
  EXPECT_NE(csv.find(",total,"), std::string::npos);
  EXPECT_NE(csv.find(",realized,"), std::string::npos);
  EXPECT_EQ(run("influence --model " + model + " --data " + data.string() + " --query 9 --update 0 --out " +
                (dir / "inf2").string()),
            2);

  ASSERT_EQ(run("discover --model " + model + " --data " + data.string() + " --out " + (dir / "disc").string()), 0);
  for (const char* f : {"formula.txt", "terms.json", "anova.csv", "report.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(dir / "disc" / f)) << f;
  EXPECT_NE(read_file(dir / "disc" / "formula.txt").find("x_0"), std::string::npos);

  write_file_atomic(dir / "bad.csv", "x0,y0\n1,oops\n");
  EXPECT_EQ(run("train --data " + (dir / "bad.csv").string() + " --out " + (dir / "bad").string()), 2);
}

TEST(Cli, DiscoverBenchmarkAndAblate) {
  const auto d = scratch("disc");
  ASSERT_EQ(run("discover --benchmark michaelis_menten --epochs 300 --out " + d.string()), 0);
  const auto rep = read_json(d / "report.json");
  EXPECT_TRUE(rep.contains("pruning"));
  EXPECT_FALSE(read_file(d / "formula.txt").empty());

  const auto a = scratch("ablate");
  ASSERT_EQ(run("ablate --benchmark needle --epochs 2 --seeds 2 --modes 'main;full' --out " + a.string()), 0);
  const auto table = read_file(a / "ablation.csv");
  EXPECT_EQ(table.rfind("mode,params,mean_test_mse,std_test_mse\nmain,33,", 0), 0u);
  EXPECT_NE(table.find("\nfull,111,"), std::string::npos);
  std::istringstream in(read_file(a / "results.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 4);
}

}  // namespace
}  // namespace ran
