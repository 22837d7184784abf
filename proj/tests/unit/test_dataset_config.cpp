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

#include <fstream>
#include <set>
#include <sstream>

#include "jointpq/config.hpp"
#include "jointpq/dataset.hpp"
#include "jointpq/error.hpp"
#include "test_util.hpp"

namespace jointpq {
namespace {

TEST(Vocabulary, FirstAppearanceOrder) {
  Vocabulary v;
  EXPECT_EQ(v.intern("b"), 0u);
  EXPECT_EQ(v.intern("a"), 1u);
  EXPECT_EQ(v.intern("b"), 0u);
  EXPECT_EQ(v.size(), 2u);
  EXPECT_EQ(v.id(1), "a");
  EXPECT_EQ(v.find("a"), 1u);
  EXPECT_FALSE(v.find("c").has_value());
}

TEST(ParsePairs, SkipsCommentsBlanksAndMalformedLines) {
  std::istringstream in(
      "# header\n"
      "q1\ti1\n"
      "\n"
      "q2\ti2\r\n"
      "no tab here\n"
      "a\tb\tc\n"
      "\ti3\n"
      "q1\t\n"
      "q1\ti2\n");
  const PairDataset d = parse_pairs(in);
  EXPECT_EQ(d.malformed_lines, 4u);
  ASSERT_EQ(d.pairs.size(), 3u);
  EXPECT_EQ(d.queries.ids(), (std::vector<std::string>{"q1", "q2"}));
  EXPECT_EQ(d.items.ids(), (std::vector<std::string>{"i1", "i2"}));
  EXPECT_EQ(d.pairs[2], (PositivePair{0, 1}));
}

TEST(ParsePairs, OverlongIdsAreMalformed) {
  std::istringstream in(std::string(kMaxIdBytes + 1, 'x') + "\ti\nq\t" +
                        std::string(kMaxIdBytes, 'y') + "\n");
  const PairDataset d = parse_pairs(in);
  EXPECT_EQ(d.malformed_lines, 1u);
  EXPECT_EQ(d.pairs.size(), 1u);
}

TEST(Ingest, FileErrors) {
  testing::TempDir dir("ingest");
  EXPECT_THROW(ingest(dir / "missing.tsv"), IoError);
  std::ofstream(dir / "bad.tsv") << "# nothing\njunk\n";
  EXPECT_THROW(ingest(dir / "bad.tsv"), IngestError);
  std::ofstream(dir / "empty.tsv").close();
  EXPECT_THROW(ingest(dir / "empty.tsv"), IngestError);
}

TEST(Ingest, WriteThenReadRoundTrip) {
  testing::TempDir dir("pairs_rt");
  std::istringstream in("q1\ti1\nq2\ti1\nq1\ti3\n");
  const PairDataset d = parse_pairs(in);
  write_pairs(d, dir / "p.tsv");
  const PairDataset back = ingest(dir / "p.tsv");
  EXPECT_EQ(back.pairs, d.pairs);
  EXPECT_EQ(back.items.ids(), d.items.ids());
}

BlobConfig small_blobs() {
  BlobConfig c;
  c.clusters = 7;
  c.items = 200;
  c.queries = 50;
  c.dim = 4;
  c.train_pairs_per_query = 6;
  c.eval_pairs_per_query = 3;
  return c;
}

std::size_t number(const std::string& id) { return std::stoul(id.substr(1)); }

TEST(Blobs, CoverageOrdinalsAndClusters) {
  const BlobData b = generate_blobs(small_blobs());
  ASSERT_EQ(b.train.items.size(), 200u);
  for (std::uint32_t i = 0; i < 200; ++i) EXPECT_EQ(b.train.items.id(i), "i" + std::to_string(i));
  for (const auto& p : b.train.pairs) {
    EXPECT_EQ(number(b.train.queries.id(p.query)) % 7, number(b.train.items.id(p.item)) % 7);
  }
  EXPECT_EQ(b.train.pairs.size(), 200u + 50u * 6u);
  EXPECT_EQ(b.item_vectors.rows(), 200u);
  EXPECT_EQ(b.query_vectors.rows(), b.train.queries.size());
  for (std::uint32_t q = 0; q < b.query_cluster.size(); ++q) {
    EXPECT_EQ(b.query_cluster[q], number(b.train.queries.id(q)) % 7);
  }
}

TEST(Blobs, EvalPairsAreSameClusterAndUnseen) {
  const BlobData b = generate_blobs(small_blobs());
  std::set<std::pair<std::string, std::string>> train;
  for (const auto& p : b.train.pairs) {
    train.insert({b.train.queries.id(p.query), b.train.items.id(p.item)});
  }
  EXPECT_EQ(b.eval.pairs.size(), 50u * 3u);
  for (const auto& p : b.eval.pairs) {
    const auto& q = b.eval.queries.id(p.query);
    const auto& i = b.eval.items.id(p.item);
    EXPECT_EQ(number(q) % 7, number(i) % 7);
    EXPECT_FALSE(train.contains({q, i}));
  }
}

TEST(Blobs, NoiseLeavesTheCluster) {
  BlobConfig c = small_blobs();
  c.noise = 1.0;
  const BlobData b = generate_blobs(c);
  std::size_t off = 0;
  for (std::size_t r = 200; r < b.train.pairs.size(); ++r) {
    const auto& p = b.train.pairs[r];
    off += number(b.train.queries.id(p.query)) % 7 != number(b.train.items.id(p.item)) % 7;
  }
  EXPECT_GT(off, 200u);
}

TEST(Blobs, DeterministicAndSeedSensitive) {
  const BlobData a = generate_blobs(small_blobs());
  const BlobData b = generate_blobs(small_blobs());
  EXPECT_EQ(a.train.pairs, b.train.pairs);
  EXPECT_EQ(a.eval.pairs, b.eval.pairs);
  EXPECT_EQ(a.item_vectors, b.item_vectors);
  BlobConfig c = small_blobs();
  c.seed = 2;
  EXPECT_NE(generate_blobs(c).train.pairs, a.train.pairs);
}

TEST(Blobs, ParameterErrors) {
  BlobConfig c = small_blobs();
  c.clusters = 0;
  EXPECT_THROW(generate_blobs(c), ParameterError);
  c = small_blobs();
  c.items = 3;
  EXPECT_THROW(generate_blobs(c), ParameterError);
  c = small_blobs();
  c.noise = 1.5;
  EXPECT_THROW(generate_blobs(c), ParameterError);
}

TEST(RunConfig, SetAndDump) {
  RunConfig c;
  c.set("J", "32");
  c.set(" lambda ", " 0.25");
  c.set("rotation", "off");
  c.set("k", "10,100");
  c.set("d", "16");
  EXPECT_EQ(c.train.shape.coarse, 32u);
  EXPECT_DOUBLE_EQ(c.train.reg_weight, 0.25);
  EXPECT_FALSE(c.train.rotation_enabled);
  EXPECT_EQ(c.ks, (std::vector<std::size_t>{10, 100}));
  EXPECT_EQ(c.blobs.dim, 16u);
  const auto lines = c.dump();
  EXPECT_NE(std::find(lines.begin(), lines.end(), "J=32"), lines.end());
  EXPECT_NE(std::find(lines.begin(), lines.end(), "k=10,100"), lines.end());
  EXPECT_EQ(lines.size(), RunConfig::keys().size());
}

TEST(RunConfig, DumpRoundTrips) {
  RunConfig c;
  c.set("margin", "0.123456789");
  c.set("blob-variance", "1e-3");
  c.set("seed", "77");
  RunConfig d;
  for (const auto& line : c.dump()) {
    const auto eq = line.find('=');
    d.set(line.substr(0, eq), line.substr(eq + 1));
  }
  EXPECT_EQ(d.dump(), c.dump());
  EXPECT_EQ(d.train.margin, 0.123456789);
  EXPECT_EQ(d.blobs.seed, 77u);
}

TEST(RunConfig, Errors) {
  RunConfig c;
  EXPECT_THROW(c.set("nope", "1"), ParameterError);
  EXPECT_THROW(c.set("J", "abc"), ParameterError);
  EXPECT_THROW(c.set("J", "12x"), ParameterError);
  EXPECT_THROW(c.set("J", ""), ParameterError);
  EXPECT_THROW(c.set("rotation", "maybe"), ParameterError);
  EXPECT_THROW(c.set("k", ""), ParameterError);
}

TEST(RunConfig, LoadFile) {
  testing::TempDir dir("cfg");
  std::ofstream(dir / "a.cfg") << "# comment\nJ = 64\n\nsteps=500  # trailing\n";
  RunConfig c;
  c.load_file(dir / "a.cfg");
  EXPECT_EQ(c.train.shape.coarse, 64u);
  EXPECT_EQ(c.train.total_steps, 500u);
  std::ofstream(dir / "b.cfg") << "J 64\n";
  EXPECT_THROW(c.load_file(dir / "b.cfg"), ParameterError);
  EXPECT_THROW(c.load_file(dir / "missing.cfg"), IoError);
}

TEST(RunConfig, OfflineMirrorsTraining) {
  RunConfig c;
  c.set("J", "8");
  c.set("rotation", "false");
  c.set("offline-rounds", "2");
  const OfflineBuildConfig o = c.offline();
  EXPECT_EQ(o.shape, c.train.shape);
  EXPECT_FALSE(o.use_rotation);
  EXPECT_EQ(o.rounds, 2u);
}

}  // namespace
}  // namespace jointpq
