// Copyright 2026-present the jointpq authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "test_util.hpp"

namespace {

using jointpq::testing::TempDir;

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  Cli() : dir_("cli") {}

  CliResult run(const std::string& args) {
    const auto out = dir_ / "stdout.txt";
    const auto err = dir_ / "stderr.txt";
    const std::string cmd = std::string(JOINTPQ_CLI_PATH) + " " + args + " >" +
                            out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  static std::string small() {
    return "--d 8 --J 8 --K 4 --D 2 --steps 40 --warm-steps 20 --batch 32 "
           "--blob-clusters 8 --blob-items 120 --blob-queries 40 "
           "--blob-train-pairs 4 --blob-eval-pairs 2 --nprobe 8 --offline-rounds 1";
  }

  void generate_and_train(const std::string& tag) {
    ASSERT_EQ(run("generate " + small() + " --out " + path("train.tsv") + " --eval-out " +
                  path("eval.tsv"))
                  .code,
              0);
    const CliResult r = run("train " + small() + " --data " + path("train.tsv") + " --index " +
                      path(tag + ".idx") + " --model " + path(tag + ".model") + " --log " +
                      path(tag + ".log"));
    ASSERT_EQ(r.code, 0) << r.err;
  }

  TempDir dir_;
};

TEST_F(Cli, TrainIsByteIdenticalAcrossRuns) {
  generate_and_train("a");
  generate_and_train("b");
  EXPECT_EQ(slurp(path("a.idx")), slurp(path("b.idx")));
  EXPECT_EQ(slurp(path("a.model")), slurp(path("b.model")));
  EXPECT_EQ(slurp(path("a.log")), slurp(path("b.log")));
  EXPECT_FALSE(slurp(path("a.idx")).empty());
}

TEST_F(Cli, SearchPrintsRankIdScore) {
  generate_and_train("s");
  const CliResult r = run("search --index " + path("s.idx") + " --model " + path("s.model") +
                    " --query-id q3 --top 5 --nprobe 8");
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  int rank = 0;
  const std::regex row(R"((\d+)\t(i\d+)\t(-?\d+\.\d{6}))");
  double last = 1e9;
  while (std::getline(lines, line)) {
    std::smatch m;
    ASSERT_TRUE(std::regex_match(line, m, row)) << line;
    EXPECT_EQ(std::stoi(m[1]), ++rank);
    const double score = std::stod(m[3]);
    EXPECT_LE(score, last);
    last = score;
  }
  EXPECT_EQ(rank, 5);

  const CliResult by_vector = run("search --index " + path("s.idx") +
                            " --vector 1,0,0,0,0,0,0,0 --top 3 --nprobe 2");
  ASSERT_EQ(by_vector.code, 0) << by_vector.err;
  EXPECT_EQ(std::count(by_vector.out.begin(), by_vector.out.end(), '\n'), 3);
}

TEST_F(Cli, SearchWarnsWhenTopExceedsItems) {
  generate_and_train("w");
  const CliResult r = run("search --index " + path("w.idx") + " --model " + path("w.model") +
                    " --query-id q0 --top 500 --nprobe 8");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 120);
}

TEST_F(Cli, ErrorsBecomeExitCodes) {
  generate_and_train("e");
  const CliResult unknown = run("search --index " + path("e.idx") + " --model " +
                          path("e.model") + " --query-id nobody");
  EXPECT_EQ(unknown.code, 9);
  EXPECT_NE(unknown.err.find("nobody"), std::string::npos);

  const CliResult big_nprobe = run("search --index " + path("e.idx") +
                             " --vector 1,0,0,0,0,0,0,0 --nprobe 9");
  EXPECT_EQ(big_nprobe.code, 2);

  const CliResult zero = run("search --index " + path("e.idx") + " --vector 0,0,0,0,0,0,0,0 --nprobe 1");
  EXPECT_EQ(zero.code, 3);

  const CliResult wrong_dim = run("search --index " + path("e.idx") + " --vector 1,2,3 --nprobe 1");
  EXPECT_EQ(wrong_dim.code, 1);

  std::ofstream(path("bad.idx")) << "not an index";
  EXPECT_EQ(run("search --index " + path("bad.idx") + " --vector 1").code, 4);
  EXPECT_EQ(run("train --data " + path("missing.tsv") + " --index " + path("x.idx")).code,
            5);
  std::ofstream(path("junk.tsv")) << "junk\n";
  EXPECT_EQ(run("train --data " + path("junk.tsv") + " --index " + path("x.idx")).code, 6);
  EXPECT_NE(run("train --set nope=1 --data " + path("train.tsv") + " --index " +
                path("x.idx"))
                .code,
            0);
}

TEST_F(Cli, EvaluateTextAndJson) {
  generate_and_train("v");
  const std::string base = "evaluate --index " + path("v.idx") + " --model " +
                           path("v.model") + " --eval-data " + path("eval.tsv") +
                           " --k 5,10 --nprobes 1,8";
  const CliResult text = run(base);
  ASSERT_EQ(text.code, 0) << text.err;
  EXPECT_NE(text.out.find("index.recall@10.nprobe8="), std::string::npos);
  const CliResult json = run(base + " --format json");
  ASSERT_EQ(json.code, 0) << json.err;
  const auto j = nlohmann::json::parse(json.out);
  EXPECT_EQ(j["rows"].size(), 4u);
  EXPECT_EQ(j["facts"]["queries_evaluated"], 40.0);
}

TEST_F(Cli, BuildIndexFromModel) {
  generate_and_train("m");
  ASSERT_EQ(run("build-index --model " + path("m.model") + " --index " + path("re.idx")).code,
            0);
  EXPECT_EQ(slurp(path("re.idx")), slurp(path("m.idx")));
  const CliResult offline = run("build-index --offline " + small() + " --model " + path("m.model") +
                          " --index " + path("off.idx"));
  ASSERT_EQ(offline.code, 0) << offline.err;
  EXPECT_NE(slurp(path("off.idx")), slurp(path("m.idx")));
}

TEST_F(Cli, CompareWithoutTimingsIsReproducible) {
  const std::string args = "compare " + small() + " --k 5 --nprobes 2 --no-timings";
  const CliResult a = run(args);
  const CliResult b = run(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("delta_recall@5_nprobe2="), std::string::npos);
  EXPECT_EQ(a.out.find("seconds"), std::string::npos);
  const CliResult timed = run("compare " + small() + " --k 5 --nprobes 2 --format json");
  ASSERT_EQ(timed.code, 0) << timed.err;
  EXPECT_TRUE(nlohmann::json::parse(timed.out)["timings"].contains("offline_build_seconds"));
}

TEST_F(Cli, NoRotationFlagKeepsIdentity) {
  ASSERT_EQ(run("generate " + small() + " --out " + path("t.tsv") + " --eval-out " +
                path("e.tsv"))
                .code,
            0);
  ASSERT_EQ(run("train " + small() + " --rotation-period 2 --no-rotation --data " +
                path("t.tsv") + " --index " + path("nr.idx"))
                .code,
            0);
  const std::string bytes = slurp(path("nr.idx"));
  // Rotation block follows the 28-byte header.
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 8; ++j) {
      float v;
      std::memcpy(&v, bytes.data() + 28 + 4 * (i * 8 + j), 4);
      EXPECT_EQ(v, i == j ? 1.0f : 0.0f);
    }
  }
}

}  // namespace
