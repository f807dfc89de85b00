#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "oracle.hpp"
#include "tabprem/relevance.hpp"
#include "test_support.hpp"

using namespace tabprem;

namespace {

EmbeddingTable toy_2d() {
  EmbeddingTable t(2);
  const double h = 1.0 / std::sqrt(2.0);
  t.insert("a", EmbeddingVector({1.0, 0.0}));
  t.insert("b", EmbeddingVector({0.0, 1.0}));
  t.insert("c", EmbeddingVector({h, h}));
  t.insert("z", EmbeddingVector({0.0, 0.0}));
  t.insert("alpha", EmbeddingVector({1.0, 0.0}));
  return t;
}

PremiseParagraph paragraph_of(const std::vector<std::string>& sentences, bool with_category = false) {
  PremiseParagraph p;
  if (with_category) p.sentences.push_back(RenderedRow{"Thing is a thing.", -1, StageTag::Category, {}});
  for (std::size_t i = 0; i < sentences.size(); ++i)
    p.sentences.push_back(RenderedRow{sentences[i], static_cast<int>(i), StageTag::Universal,
                                      "k" + std::to_string(i)});
  return p;
}

}  // namespace

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize("NYSE has fewer than 3,000 stocks listed."),
            (TokenSequence{"nyse", "has", "fewer", "than", "3,000", "stocks", "listed"}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(tokenize("U.S."), (TokenSequence{"u.s."}));
  EXPECT_EQ(tokenize("New York, U.S. (2011)."), (TokenSequence{"new", "york", "u.s.", "2011"}));
  EXPECT_EQ(tokenize("Founded in 1792."), (TokenSequence{"founded", "in", "1792"}));
  EXPECT_EQ(tokenize("André-Marie Ampère (1810)"), (TokenSequence{"andré-marie", "ampère", "1810"}));
  EXPECT_EQ(tokenize(" -- ; "), TokenSequence{});
}

TEST(ContentWords, Examples) {
  const auto& stops = default_stopwords();
  EXPECT_TRUE(stops.contains("has"));
  EXPECT_TRUE(stops.contains("than"));
  EXPECT_EQ(content_words(TokenSequence{"nyse", "has", "fewer", "than", "3,000", "stocks", "listed"}, stops),
            (TokenSequence{"nyse", "fewer", "3,000", "stocks", "listed"}));
  EXPECT_TRUE(content_words(TokenSequence{"the", "of", "and"}, stops).empty());
  TokenSequence seq{"the", "cat"};
  EXPECT_EQ(content_words(seq, StopWordSet{}), seq);
}

TEST(StopWords, ShippedFileMatchesCompiledList) {
  auto from_file = load_stopwords((std::filesystem::path(TABPREM_DATA_DIR) / "stopwords.txt").string());
  EXPECT_EQ(from_file.size(), default_stopwords().size());
  EXPECT_EQ(default_stopwords().size(), 318u);
}

TEST(RowScore, Examples) {
  auto emb = toy_2d();
  EXPECT_NEAR(row_score({"a"}, {"b", "c"}, emb).score, 0.70711, 1e-5);
  EXPECT_NEAR(row_score({"a"}, {"a", "b"}, emb).score, 1.0, 1e-12);
  EXPECT_NEAR(row_score({"a", "b"}, {"b"}, emb).score, 0.5, 1e-12);
}

TEST(RowScore, MissingVectorsAndZeroVectors) {
  auto emb = toy_2d();
  // OOV hypothesis words are left out of the mean
  EXPECT_NEAR(row_score({"a", "nope"}, {"c"}, emb).score, 0.70711, 1e-5);
  // a zero vector counts as missing on both sides
  EXPECT_NEAR(row_score({"a", "z"}, {"c", "z"}, emb).score, 0.70711, 1e-5);
  auto none = row_score({"nope"}, {"a"}, emb);
  EXPECT_TRUE(none.no_coverage);
  EXPECT_EQ(none.score, 0.0);
  auto empty_row = row_score({"a"}, {"zzz"}, emb);
  EXPECT_TRUE(empty_row.no_coverage);
  EXPECT_THROW(row_score({}, {"a"}, emb), EmptyHypothesis);
}

TEST(RankRows, EmptyHypothesis) {
  auto emb = toy_2d();
  auto p = paragraph_of({"a b."});
  EXPECT_THROW(rank_rows("the of and", p, emb, default_stopwords()), EmptyHypothesis);
  EXPECT_THROW(rank_rows("", p, emb, default_stopwords()), EmptyHypothesis);
}

TEST(RankRows, IdenticalSentenceRanksFirst) {
  auto emb = toy_2d();
  auto p = paragraph_of({"b b.", "a c.", "b."});
  auto r = rank_rows("a c", p, emb, default_stopwords());
  EXPECT_EQ(r.entries.front().row_index, 1u);
  EXPECT_NEAR(r.entries.front().score, 1.0, 1e-12);
}

TEST(RankRows, TiesGoToLowerRowIndex) {
  auto emb = toy_2d();
  auto p = paragraph_of({"b.", "c a.", "c a."});
  auto r = rank_rows("c", p, emb, default_stopwords());
  ASSERT_EQ(r.entries.size(), 3u);
  EXPECT_EQ(r.entries[0].row_index, 1u);
  EXPECT_EQ(r.entries[1].row_index, 2u);
  EXPECT_EQ(r.entries[0].score, r.entries[1].score);
  EXPECT_EQ(r.entries[2].row_index, 0u);
}

TEST(RankRows, CategorySentenceIsNotScored) {
  auto emb = toy_2d();
  auto p = paragraph_of({"b.", "alpha."}, true);
  p.sentences[0].sentence = "alpha alpha.";
  auto r = rank_rows("alpha", p, emb, default_stopwords(), "h1");
  EXPECT_EQ(r.hypothesis_id, "h1");
  ASSERT_EQ(r.entries.size(), 2u);
  EXPECT_EQ(r.entries[0].row_index, 1u);
}

TEST(RankRows, OracleEquivalenceOnRandomInstances) {
  std::mt19937_64 rng(20240601);
  for (int trial = 0; trial < 1000; ++trial) {
    auto in = oracle::make_instance(rng);
    auto got = rank_rows(in.hypothesis, in.paragraph, in.table, oracle::instance_stops());
    auto cmp = oracle::compare(in, got);
    ASSERT_TRUE(cmp.ok) << "trial " << trial << ": " << cmp.detail << " hyp=" << in.hypothesis;
  }
}

TEST(RankRows, ScoresWithinBounds) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    auto in = oracle::make_instance(rng);
    for (const auto& e : rank_rows(in.hypothesis, in.paragraph, in.table, oracle::instance_stops()).entries) {
      EXPECT_GE(e.score, -1.0);
      EXPECT_LE(e.score, 1.0);
    }
  }
}

TEST(RankRows, AppendingHypothesisWordNeverLowersScore) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    auto in = oracle::make_instance(rng);
    auto hyp = content_words(tokenize(in.hypothesis), oracle::instance_stops());
    for (std::size_t r = 0; r < in.paragraph.sentences.size(); ++r) {
      auto row = tokenize(in.paragraph.sentences[r].sentence);
      auto before = row_score(hyp, row, in.table);
      for (const auto& w : hyp) {
        auto extended = row;
        extended.push_back(w);
        auto after = row_score(hyp, extended, in.table);
        if (!before.no_coverage) EXPECT_GE(after.score, before.score - 1e-12);
      }
    }
  }
}

TEST(RankRows, PermutationEquivariance) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    auto in = oracle::make_instance(rng);
    const auto n = in.paragraph.sentences.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    // new position i holds old row perm[i]
    PremiseParagraph shuffled;
    for (std::size_t i = 0; i < n; ++i) {
      auto s = in.paragraph.sentences[perm[i]];
      s.source_index = static_cast<int>(i);
      shuffled.sentences.push_back(s);
    }
    auto a = rank_rows(in.hypothesis, in.paragraph, in.table, oracle::instance_stops());
    auto b = rank_rows(in.hypothesis, shuffled, in.table, oracle::instance_stops());
    std::vector<double> old_score(n), new_score(n);
    for (const auto& e : a.entries) old_score[e.row_index] = e.score;
    for (const auto& e : b.entries) new_score[e.row_index] = e.score;
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(new_score[i], old_score[perm[i]]);
    for (std::size_t i = 0; i + 1 < b.entries.size(); ++i) {
      const auto& x = b.entries[i];
      const auto& y = b.entries[i + 1];
      const auto bx = std::llround(x.score * 1e12), by = std::llround(y.score * 1e12);
      EXPECT_TRUE(bx > by || (bx == by && x.row_index < y.row_index));
    }
  }
}

TEST(SelectTopK, Sizes) {
  auto emb = toy_2d();
  auto p = paragraph_of({"alpha.", "b.", "c."}, true);
  auto r = rank_rows("alpha", p, emb, default_stopwords());
  auto four = select_top_k(r, p, SelectionConfig{4});
  EXPECT_EQ(four.row_count(), 3u);
  EXPECT_EQ(four.sentences.front().stage_tag, StageTag::Category);
  auto one = select_top_k(r, p, SelectionConfig{1});
  ASSERT_EQ(one.sentences.size(), 2u);
  EXPECT_EQ(one.sentences[1].sentence, "alpha.");
  EXPECT_THROW(select_top_k(r, p, SelectionConfig{0}), ConfigError);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    auto in = oracle::make_instance(rng);
    auto ranking = rank_rows(in.hypothesis, in.paragraph, in.table, oracle::instance_stops());
    for (std::size_t k = 1; k <= 7; ++k) {
      auto sel = select_top_k(ranking, in.paragraph, SelectionConfig{k});
      EXPECT_EQ(sel.row_count(), std::min(k, in.paragraph.sentences.size()));
      for (std::size_t i = 0; i < sel.sentences.size(); ++i)
        EXPECT_EQ(static_cast<std::size_t>(sel.sentences[i].source_index), ranking.entries[i].row_index);
    }
  }
}

TEST(SelectTopK, KOnePicksRankOne) {
  auto emb = toy_2d();
  auto p = paragraph_of({"b.", "b.", "b.", "b.", "b.", "alpha c."});
  auto r = rank_rows("alpha", p, emb, default_stopwords());
  auto sel = select_top_k(r, p, SelectionConfig{1});
  ASSERT_EQ(sel.sentences.size(), 1u);
  EXPECT_EQ(sel.sentences[0].source_index, 5);
}

TEST(ToyVectors, FluorineDiscoveryRowKeptWithFixtureVectors) {
  auto emb = load_vectors(test_data("toy_vectors.txt"));
  auto t = parse_table_file(test_data("fluorine.jsonl")).at(0);
  auto p = render_paragraph(t, seed_registry(), RenderMode::Bpr);
  auto r = rank_rows("Flourine was discovered in the 18th century.", p, emb, default_stopwords());
  auto sel = select_top_k(r, p, SelectionConfig{4});
  bool found = false;
  for (const auto& s : sel.sentences) found |= s.key == "Discovery";
  EXPECT_TRUE(found);
}
