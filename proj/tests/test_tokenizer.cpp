#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "aoa/tokenizer.hpp"

using namespace aoa;

namespace {

std::vector<std::string> strings(const TokenSeq& seq, const Vocab& vocab) {
  std::vector<std::string> out;
  for (int id : seq.ids) out.push_back(vocab.token(id));
  return out;
}

std::string without_space(std::string_view s) {
  std::string out;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  return out;
}

std::string random_text(std::mt19937& gen, std::size_t words) {
  static const std::vector<std::string> pool = {"ver", "rucous", "car", "cinoma", "@entity1", "@entity189",
                                                "xyz", "a", "XXXX", "q", "é", "lesion", ",", "."};
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1), parts(1, 3), gap(1, 3);
  std::string text;
  for (std::size_t w = 0; w < words; ++w) {
    if (w) text.append(gap(gen), w % 2 ? ' ' : '\t');
    const std::size_t n = parts(gen);
    for (std::size_t p = 0; p < n; ++p) text += pool[pick(gen)];
  }
  return text;
}

const Vocab& property_vocab() {
  static const Vocab v({"v", "e", "r", "u", "c", "o", "s", "a", "i", "n", "m", "l", "##e", "##r", "##u", "##c",
                        "##o", "##s", "##a", "##i", "##n", "##m", "ver", "##rucous", "car", "##cinoma", "lesion",
                        "@entity1", "##v", ","});
  return v;
}

}  // namespace

TEST(Vocab, SpecialsComeFirstAndIdsAreDense) {
  const Vocab v({"b", "a"});
  ASSERT_EQ(v.size(), 7u);
  EXPECT_EQ(v.token(v.pad()), "[PAD]");
  EXPECT_EQ(v.token(v.unk()), "[UNK]");
  EXPECT_EQ(v.token(v.cls()), "[CLS]");
  EXPECT_EQ(v.token(v.sep()), "[SEP]");
  EXPECT_EQ(v.token(v.mask()), "[MASK]");
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(*v.find(v.token(static_cast<int>(i))), static_cast<int>(i));
}

TEST(Vocab, RejectsDuplicatesAndEmptyTokens) {
  EXPECT_THROW(Vocab({"a", "a"}), VocabError);
  EXPECT_THROW(Vocab({"a", ""}), VocabError);
}

TEST(Vocab, SaveLoadRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "aoa_vocab_roundtrip.txt";
  const Vocab v({"ver", "##rucous", "@entity1", "é"});
  v.save(path.string());
  const Vocab back = Vocab::load(path.string());
  EXPECT_EQ(back, v);
  std::filesystem::remove(path);
}

TEST(BuildVocab, SmallCorpusInducesCharactersWordsAndSuffixes) {
  const std::vector<std::string> corpus = {"aa aa ab"};
  const Vocab v = build_vocab(corpus, 20, 1);
  for (const char* t : {"aa", "ab", "a", "b", "##a", "##b"}) EXPECT_TRUE(v.contains(t)) << t;
  for (const char* t : {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"}) EXPECT_TRUE(v.contains(t)) << t;
  EXPECT_EQ(v.size(), 11u);
}

TEST(BuildVocab, EmptyCorpusIsAnError) {
  const std::vector<std::string> corpus;
  EXPECT_THROW(build_vocab(corpus, 100, 1), VocabError);
}

TEST(BuildVocab, HighMinFreqLeavesCharactersOnly) {
  const std::vector<std::string> corpus = {"aa aa ab", "ba"};
  const Vocab v = build_vocab(corpus, 100, 50);
  EXPECT_FALSE(v.contains("aa"));
  EXPECT_FALSE(v.contains("ab"));
  EXPECT_TRUE(v.contains("a"));
  EXPECT_TRUE(v.contains("b"));
  for (const auto& t : v.tokens()) {
    const bool special = t.front() == '[';
    const bool single = t.size() == 1 || (t.rfind("##", 0) == 0 && t.size() == 3);
    EXPECT_TRUE(special || single) << t;
  }
}

TEST(BuildVocab, MaxSizeBelowCharacterCountIsAnError) {
  const std::vector<std::string> corpus = {"abcdef"};
  EXPECT_THROW(build_vocab(corpus, 10, 1), VocabError);
  EXPECT_NO_THROW(build_vocab(corpus, 11, 1));
}

TEST(BuildVocab, RespectsCapAndIsDeterministic) {
  const std::vector<std::string> corpus = {"the cat sat on the mat", "the dog sat", "@entity3 bit @entity12"};
  const Vocab a = build_vocab(corpus, 30, 1);
  const Vocab b = build_vocab(corpus, 30, 1);
  EXPECT_EQ(a, b);
  EXPECT_LE(a.size(), 30u);
  EXPECT_TRUE(a.contains("@entity3"));
  EXPECT_TRUE(a.contains("@entity12"));
  // "the" (3) and "sat" (2) outrank every singleton word.
  const Vocab big = build_vocab(corpus, 1000, 1);
  ASSERT_TRUE(big.contains("the"));
  ASSERT_TRUE(big.contains("sat"));
  EXPECT_LT(*big.find("the"), *big.find("sat"));
  EXPECT_LT(*big.find("sat"), *big.find("cat"));
  EXPECT_LT(*big.find("cat"), *big.find("dog"));
}

TEST(Wordpiece, WholeWordInVocabIsOneToken) {
  const Vocab v({"lesion", "l"});
  const TokenSeq seq = wordpiece_tokenize("lesion", v);
  EXPECT_EQ(strings(seq, v), std::vector<std::string>{"lesion"});
  EXPECT_EQ(seq.spans[0], (Span{0, 6}));
}

TEST(Wordpiece, GreedySplitUsesContinuationPrefix) {
  const Vocab v({"ver", "##rucous"});
  const TokenSeq seq = wordpiece_tokenize("verrucous", v);
  EXPECT_EQ(strings(seq, v), (std::vector<std::string>{"ver", "##rucous"}));
  EXPECT_EQ(seq.spans[0], (Span{0, 3}));
  EXPECT_EQ(seq.spans[1], (Span{3, 9}));
}

TEST(Wordpiece, LongestMatchWins) {
  const Vocab v({"v", "ve", "ver", "##r", "##ru", "##rucous", "##u", "##c", "##o", "##s"});
  EXPECT_EQ(strings(wordpiece_tokenize("verrucous", v), v), (std::vector<std::string>{"ver", "##rucous"}));
}

TEST(Wordpiece, UnmatchableWordBecomesSingleUnk) {
  const Vocab v({"ver", "##rucous"});
  EXPECT_EQ(strings(wordpiece_tokenize("verrucoZs", v), v), std::vector<std::string>{"[UNK]"});
  const TokenSeq seq = wordpiece_tokenize("ver zzz ver", v);
  EXPECT_EQ(strings(seq, v), (std::vector<std::string>{"ver", "[UNK]", "ver"}));
  EXPECT_EQ(seq.spans[1], (Span{4, 7}));
}

TEST(Wordpiece, OverlongWordBecomesUnk) {
  const Vocab v({"a", "##a"});
  EXPECT_EQ(strings(wordpiece_tokenize(std::string(kMaxWordChars, 'a'), v), v).size(), kMaxWordChars);
  EXPECT_EQ(strings(wordpiece_tokenize(std::string(kMaxWordChars + 1, 'a'), v), v),
            std::vector<std::string>{"[UNK]"});
}

TEST(Wordpiece, PlaceholderMapsToMask) {
  const Vocab v({"a"});
  EXPECT_EQ(strings(wordpiece_tokenize("a XXXX [MASK] a", v), v),
            (std::vector<std::string>{"a", "[MASK]", "[MASK]", "a"}));
}

TEST(Wordpiece, EntityMarkersAreAtomic) {
  const Vocab v({"@entity1", "@entity189", "(", ")"});
  const TokenSeq seq = wordpiece_tokenize("(@entity189) @entity1@entity189 @entity7", v);
  EXPECT_EQ(strings(seq, v),
            (std::vector<std::string>{"(", "@entity189", ")", "@entity1", "@entity189", "[UNK]"}));
}

TEST(Wordpiece, SegmentLabelIsCarried) {
  const Vocab v({"a"});
  const TokenSeq seq = wordpiece_tokenize("a a", v, Segment::Question);
  ASSERT_EQ(seq.segments.size(), 2u);
  for (Segment s : seq.segments) EXPECT_EQ(s, Segment::Question);
}

TEST(Wordpiece, EmptyAndBlankText) {
  const Vocab v({"a"});
  EXPECT_TRUE(wordpiece_tokenize("", v).empty());
  EXPECT_TRUE(wordpiece_tokenize(" \t\n ", v).empty());
}

TEST(DetectEntities, FindsMarkersWithSpans) {
  const std::string text = "seven @entity1 who had @entity189";
  const auto found = detect_entities(text);
  ASSERT_EQ(found.size(), 2u);
  EXPECT_EQ(found[0].id, "@entity1");
  EXPECT_EQ(found[1].id, "@entity189");
  EXPECT_EQ(text.substr(found[0].span.begin, found[0].span.end - found[0].span.begin), "@entity1");
  EXPECT_EQ(found[1].span, (Span{23, 33}));
}

TEST(DetectEntities, NoMarkers) {
  EXPECT_TRUE(detect_entities("no markers here, @entity without digits").empty());
}

TEST(DetectEntities, AdjacentMarkersAreSeparate) {
  const auto found = detect_entities("@entity1@entity2");
  ASSERT_EQ(found.size(), 2u);
  EXPECT_EQ(found[0], (EntityMention{"@entity1", {0, 8}}));
  EXPECT_EQ(found[1], (EntityMention{"@entity2", {8, 16}}));
}

TEST(DetectEntities, DigitsAreMaximal) {
  const auto found = detect_entities("x@entity1234y");
  ASSERT_EQ(found.size(), 1u);
  EXPECT_EQ(found[0].id, "@entity1234");
}

TEST(TokenizerProperty, ParallelListsAndOrderedSpans) {
  std::mt19937 gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::string text = random_text(gen, 1 + trial % 9);
    const TokenSeq seq = wordpiece_tokenize(text, property_vocab());
    ASSERT_EQ(seq.ids.size(), seq.segments.size());
    ASSERT_EQ(seq.ids.size(), seq.spans.size());
    for (std::size_t i = 0; i < seq.spans.size(); ++i) {
      EXPECT_LT(seq.spans[i].begin, seq.spans[i].end);
      if (i) {
        EXPECT_LE(seq.spans[i - 1].end, seq.spans[i].begin);
      }
    }
  }
}

TEST(TokenizerProperty, SpansReconstructNonWhitespaceText) {
  std::mt19937 gen(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::string text = random_text(gen, 1 + trial % 9);
    const TokenSeq seq = wordpiece_tokenize(text, property_vocab());
    std::string joined;
    for (const Span& s : seq.spans) joined += text.substr(s.begin, s.end - s.begin);
    EXPECT_EQ(joined, without_space(text)) << text;
  }
}

TEST(TokenizerProperty, WordsTokenizeIndependently) {
  std::mt19937 gen(13);
  const Vocab& v = property_vocab();
  for (int trial = 0; trial < 200; ++trial) {
    const std::string a = random_text(gen, 1), b = random_text(gen, 1);
    const TokenSeq joint = wordpiece_tokenize(a + " " + b, v);
    const TokenSeq left = wordpiece_tokenize(a, v), right = wordpiece_tokenize(b, v);
    std::vector<int> ids = left.ids;
    ids.insert(ids.end(), right.ids.begin(), right.ids.end());
    EXPECT_EQ(joint.ids, ids) << a << " | " << b;
  }
}

TEST(TokenizerProperty, MarkerTokenizesIdenticallyEverywhere) {
  std::mt19937 gen(14);
  const Vocab& v = property_vocab();
  const int marker = *v.find("@entity1");
  for (int trial = 0; trial < 100; ++trial) {
    const std::string text = random_text(gen, 6);
    const TokenSeq seq = wordpiece_tokenize(text, v);
    const auto mentions = detect_entities(text);
    std::size_t matched = 0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const std::string piece = text.substr(seq.spans[i].begin, seq.spans[i].end - seq.spans[i].begin);
      if (piece == "@entity1") {
        EXPECT_EQ(seq.ids[i], marker);
        ++matched;
      }
    }
    std::size_t expected = 0;
    for (const auto& m : mentions) expected += m.id == "@entity1";
    EXPECT_EQ(matched, expected) << text;
  }
}
