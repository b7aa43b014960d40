#pragma once

// Cloze samples, the BIOMRC-style JSON layout, the desk-scale synthetic
// generator, and batching. See docs/file_formats.md for the JSON layout.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "aoa/tokenizer.hpp"
#include "aoa/util.hpp"

namespace aoa {

struct Candidate {
  std::string id;
  std::vector<std::string> surfaces;
  bool operator==(const Candidate&) const = default;
};

struct ClozeSample {
  std::string id;
  std::string context;
  std::string question;
  std::vector<Candidate> candidates;  // order is the tie-break order
  std::string gold;

  std::optional<std::size_t> gold_index() const {
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (candidates[i].id == gold) return i;
    }
    return std::nullopt;
  }
  std::vector<std::string> candidate_ids() const {
    std::vector<std::string> out;
    for (const auto& c : candidates) out.push_back(c.id);
    return out;
  }
  bool operator==(const ClozeSample&) const = default;
};

struct DatasetSplit {
  std::string name;
  std::vector<ClozeSample> samples;

  std::size_t size() const { return samples.size(); }
  bool operator==(const DatasetSplit&) const = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t byte) : std::runtime_error(what), byte_(byte) {}
  std::size_t byte() const { return byte_; }

 private:
  std::size_t byte_;
};

class ValidationError : public std::runtime_error {
 public:
  ValidationError(const std::string& what, std::vector<std::size_t> indices)
      : std::runtime_error(what), indices_(std::move(indices)) {}
  const std::vector<std::size_t>& indices() const { return indices_; }

 private:
  std::vector<std::size_t> indices_;
};

inline std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

// Rewrites a "[MASK]" placeholder to "XXXX".
inline std::string normalize_placeholder(std::string question) {
  for (std::size_t pos = question.find(kMask); pos != std::string::npos; pos = question.find(kMask, pos)) {
    question.replace(pos, kMask.size(), kPlaceholder);
    pos += kPlaceholder.size();
  }
  return question;
}

struct ValidationOptions {
  std::size_t max_context_tokens = 2000;
  const Vocab* vocab = nullptr;  // exact token counts when set, word counts otherwise
};

// Invariant violations of one sample; empty when valid.
inline std::vector<std::string> validate_sample(const ClozeSample& s, const ValidationOptions& opt = {}) {
  std::vector<std::string> problems;
  const std::size_t placeholders = count_occurrences(s.question, kPlaceholder);
  if (placeholders != 1) {
    problems.push_back("question has " + std::to_string(placeholders) + " placeholders, expected 1");
  }
  if (s.candidates.size() < 2) problems.push_back("fewer than 2 candidates");
  for (std::size_t i = 0; i < s.candidates.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (s.candidates[i].id == s.candidates[j].id) problems.push_back("duplicate candidate " + s.candidates[i].id);
    }
  }
  if (!s.gold_index()) problems.push_back("gold " + s.gold + " is not a candidate");
  const auto mentions = detect_entities(s.context);
  for (const auto& c : s.candidates) {
    const bool found = std::any_of(mentions.begin(), mentions.end(), [&](const EntityMention& m) { return m.id == c.id; });
    if (!found) problems.push_back("candidate " + c.id + " does not occur in context");
  }
  const std::size_t length = opt.vocab ? wordpiece_tokenize(s.context, *opt.vocab).size()
                                       : detail::whitespace_words(s.context).size();
  if (length > opt.max_context_tokens) {
    problems.push_back("context has " + std::to_string(length) + " tokens, limit " +
                       std::to_string(opt.max_context_tokens));
  }
  return problems;
}

namespace detail {

using json = nlohmann::json;

// Parses "@entity1 :: ['patients', 'Patient']" (also "@entity1: [...]" or a
// bare marker) into a Candidate.
inline Candidate parse_entity_entry(std::string_view entry) {
  const auto mentions = detect_entities(entry);
  if (mentions.empty()) throw std::invalid_argument("entity entry without @entity marker: " + std::string(entry));
  Candidate c;
  c.id = mentions.front().id;
  std::size_t i = mentions.front().span.end;
  while (i < entry.size()) {
    const char q = entry[i];
    if (q != '\'' && q != '"') {
      ++i;
      continue;
    }
    std::string surface;
    ++i;
    while (i < entry.size() && entry[i] != q) {
      if (entry[i] == '\\' && i + 1 < entry.size()) ++i;
      surface += entry[i++];
    }
    ++i;
    c.surfaces.push_back(std::move(surface));
  }
  return c;
}

inline std::string format_entity_entry(const Candidate& c) {
  std::string out = c.id + " :: [";
  for (std::size_t i = 0; i < c.surfaces.size(); ++i) {
    if (i) out += ", ";
    const char q = c.surfaces[i].find('\'') == std::string::npos ? '\'' : '"';
    out += q;
    for (char ch : c.surfaces[i]) {
      if (ch == q || ch == '\\') out += '\\';
      out += ch;
    }
    out += q;
  }
  return out + "]";
}

inline std::string answer_id(const json& answer) {
  const auto s = answer.get<std::string>();
  const auto m = detect_entities(s);
  if (m.empty()) throw std::invalid_argument("answer without @entity marker: " + s);
  return m.front().id;
}

inline ClozeSample sample_from_record(const json& rec, std::size_t index) {
  ClozeSample s;
  s.id = rec.contains("id") ? rec["id"].get<std::string>() : std::to_string(index);
  s.context = rec.at("abstract").get<std::string>();
  s.question = normalize_placeholder(rec.at("title").get<std::string>());
  for (const auto& e : rec.at("entities")) s.candidates.push_back(parse_entity_entry(e.get<std::string>()));
  s.gold = answer_id(rec.at("answer"));
  return s;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace detail

// Parses the BIOMRC array layout or the one-record-per-line variant.
inline DatasetSplit parse_biomrc(std::string_view text, std::string name = "data",
                                 const ValidationOptions& opt = {}) {
  using detail::json;
  DatasetSplit split{std::move(name), {}};
  std::vector<json> records;
  json doc;
  bool whole_ok = true;
  std::size_t whole_error_byte = 0;
  std::string whole_error;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    whole_ok = false;
    whole_error_byte = e.byte;
    whole_error = e.what();
  }
  try {
    if (whole_ok && doc.is_object() && doc.contains("abstracts")) {
      const auto& abstracts = doc.at("abstracts");
      const auto& titles = doc.at("titles");
      const auto& entities = doc.at("entities_list");
      const auto& answers = doc.at("answers");
      const std::size_t n = abstracts.size();
      if (titles.size() != n || entities.size() != n || answers.size() != n) {
        throw ParseError("biomrc arrays have different lengths", 0);
      }
      for (std::size_t i = 0; i < n; ++i) {
        json rec{{"abstract", abstracts[i]}, {"title", titles[i]}, {"entities", entities[i]}, {"answer", answers[i]}};
        if (doc.contains("ids")) rec["id"] = doc["ids"].at(i);
        records.push_back(std::move(rec));
      }
    } else if (whole_ok && doc.is_object() && doc.contains("abstract")) {
      records.push_back(doc);
    } else if (whole_ok) {
      throw ParseError("unrecognized biomrc layout: expected an object with 'abstracts'", 0);
    } else {
      // One JSON object per line.
      std::size_t offset = 0;
      bool any = false;
      while (offset < text.size()) {
        std::size_t end = text.find('\n', offset);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view line = text.substr(offset, end - offset);
        if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
          try {
            records.push_back(json::parse(line));
            any = true;
          } catch (const json::parse_error& e) {
            if (!any) throw ParseError("parse error at byte " + std::to_string(whole_error_byte) + ": " + whole_error,
                                       whole_error_byte);
            throw ParseError("parse error at byte " + std::to_string(offset + e.byte - 1) + ": " + e.what(),
                             offset + e.byte - 1);
          }
        }
        offset = end + 1;
      }
      if (!any) {
        throw ParseError("parse error at byte " + std::to_string(whole_error_byte) + ": " + whole_error, whole_error_byte);
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed biomrc layout: ") + e.what(), 0);
  }

  std::vector<std::size_t> bad;
  std::string report;
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::vector<std::string> problems;
    try {
      split.samples.push_back(detail::sample_from_record(records[i], i));
      problems = validate_sample(split.samples.back(), opt);
    } catch (const std::exception& e) {
      problems.push_back(e.what());
    }
    if (!problems.empty()) {
      bad.push_back(i);
      for (const auto& p : problems) report += "\n  record " + std::to_string(i) + ": " + p;
    }
  }
  if (!bad.empty()) throw ValidationError(std::to_string(bad.size()) + " invalid record(s):" + report, bad);
  if (split.samples.empty()) throw ValidationError("dataset is empty", {});
  return split;
}

inline DatasetSplit load_biomrc(const std::string& path, std::string name = "data", const ValidationOptions& opt = {}) {
  const std::string text = detail::read_file(path);
  try {
    return parse_biomrc(text, std::move(name), opt);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.byte());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what(), e.indices());
  }
}

inline nlohmann::json to_biomrc_json(const DatasetSplit& split) {
  using detail::json;
  json abstracts = json::array(), titles = json::array(), entities = json::array(), answers = json::array(),
       ids = json::array();
  for (const auto& s : split.samples) {
    abstracts.push_back(s.context);
    titles.push_back(s.question);
    json ents = json::array();
    std::string answer = s.gold;
    for (const auto& c : s.candidates) {
      ents.push_back(detail::format_entity_entry(c));
      if (c.id == s.gold) answer = detail::format_entity_entry(c);
    }
    entities.push_back(std::move(ents));
    answers.push_back(answer);
    ids.push_back(s.id);
  }
  return {{"abstracts", abstracts}, {"titles", titles}, {"entities_list", entities}, {"answers", answers}, {"ids", ids}};
}

inline void save_biomrc(const DatasetSplit& split, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_biomrc_json(split).dump(1) << '\n';
}

// Synthetic desk-scale data. Each entity is bound corpus-wide to one topic
// word; in the context every entity mention directly follows its topic word,
// and in the question the gold entity's topic word directly precedes the
// placeholder.
struct SynthConfig {
  std::size_t n_samples = 100;
  std::size_t vocab_size = 200;
  std::size_t n_entities = 6;
  std::size_t context_len = 30;  // words
  std::uint64_t seed = 7;
};

struct SynthWorld {
  std::vector<std::string> topics;   // topics[k] belongs to entities[k]
  std::vector<std::string> fillers;
  std::vector<Candidate> entities;
};

namespace detail {

inline std::string capitalize(std::string w) {
  if (!w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

inline SynthWorld make_world(const SynthConfig& cfg, Rng& rng) {
  static constexpr std::string_view kOnsets = "bdfgklmnprstvz";
  static constexpr std::string_view kVowels = "aeiou";
  static constexpr std::string_view kHeads[] = {"carcinoma", "syndrome", "disease", "receptor", "protein", "lesion"};
  auto syllable = [&] {
    std::string s;
    s += kOnsets[rng.below(kOnsets.size())];
    s += kVowels[rng.below(kVowels.size())];
    return s;
  };
  std::set<std::string> seen;
  std::vector<std::string> words;
  while (words.size() < cfg.vocab_size) {
    std::string w;
    const std::size_t n = 2 + rng.below(2);
    for (std::size_t i = 0; i < n; ++i) w += syllable();
    if (seen.insert(w).second) words.push_back(w);
  }
  SynthWorld world;
  world.topics.assign(words.begin(), words.begin() + static_cast<std::ptrdiff_t>(cfg.n_entities));
  world.fillers.assign(words.begin() + static_cast<std::ptrdiff_t>(cfg.n_entities), words.end());
  std::set<std::size_t> numbers;
  while (numbers.size() < cfg.n_entities) numbers.insert(1 + rng.below(999));
  std::vector<std::size_t> ids(numbers.begin(), numbers.end());
  rng.shuffle(ids);
  for (std::size_t k = 0; k < cfg.n_entities; ++k) {
    std::string surface = syllable() + syllable() + syllable() + " " + std::string(kHeads[rng.below(std::size(kHeads))]);
    world.entities.push_back({"@entity" + std::to_string(ids[k]), {std::move(surface)}});
  }
  return world;
}

inline ClozeSample make_synthetic_sample(const SynthConfig& cfg, const SynthWorld& world, Rng& rng,
                                         std::size_t index) {
  const std::size_t k = 2 + rng.below(cfg.n_entities - 1);
  std::vector<std::size_t> pool(cfg.n_entities);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  rng.shuffle(pool);
  pool.resize(k);
  const std::size_t gold = rng.below(k);

  std::vector<std::size_t> mentions(k);
  std::size_t unit_words = 0;
  for (auto& m : mentions) {
    m = 1 + rng.below(2);
    unit_words += 2 * m;
  }
  if (unit_words > cfg.context_len) {
    std::fill(mentions.begin(), mentions.end(), 1);
    unit_words = 2 * k;
  }

  // Items: entity slot (index into pool) or -1 for a filler word.
  std::vector<long> items;
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t m = 0; m < mentions[c]; ++m) items.push_back(static_cast<long>(c));
  for (std::size_t f = 0; f < cfg.context_len - unit_words; ++f) items.push_back(-1);
  rng.shuffle(items);

  struct Word {
    std::string text;
    bool filler;
  };
  std::vector<Word> words;
  for (long item : items) {
    if (item < 0) {
      words.push_back({world.fillers[rng.below(world.fillers.size())], true});
    } else {
      const std::size_t e = pool[static_cast<std::size_t>(item)];
      words.push_back({world.topics[e], false});
      words.push_back({world.entities[e].id, false});
    }
  }

  // Sentence breaks go only before filler words, which are then capitalized.
  std::string context;
  std::size_t sentence_len = 0;
  std::size_t target = 6 + rng.below(5);
  for (std::size_t i = 0; i < words.size(); ++i) {
    std::string w = words[i].text;
    if (i == 0 && words[i].filler) w = capitalize(w);
    if (i > 0) {
      if (sentence_len >= target && words[i].filler) {
        context += ". ";
        w = capitalize(w);
        sentence_len = 0;
        target = 6 + rng.below(5);
      } else {
        context += ' ';
      }
    }
    context += w;
    ++sentence_len;
  }
  context += " .";

  std::string question;
  const std::size_t lead = 2 + rng.below(2), trail = 1 + rng.below(3);
  for (std::size_t i = 0; i < lead; ++i) {
    const auto& f = world.fillers[rng.below(world.fillers.size())];
    question += (i == 0 ? capitalize(f) : f) + " ";
  }
  question += world.topics[pool[gold]] + " " + std::string(kPlaceholder);
  for (std::size_t i = 0; i < trail; ++i) question += " " + world.fillers[rng.below(world.fillers.size())];
  question += " .";

  ClozeSample s;
  s.id = "synth-" + std::to_string(cfg.seed) + "-" + std::to_string(index);
  s.context = std::move(context);
  s.question = std::move(question);
  for (std::size_t c = 0; c < k; ++c) s.candidates.push_back(world.entities[pool[c]]);
  s.gold = world.entities[pool[gold]].id;
  return s;
}

inline void check_synth_config(const SynthConfig& cfg) {
  if (cfg.n_samples == 0) throw std::invalid_argument("synthetic: n_samples must be positive");
  if (cfg.n_entities < 2) throw std::invalid_argument("synthetic: n_entities must be at least 2");
  if (cfg.context_len < 2 * cfg.n_entities) {
    throw std::invalid_argument("synthetic: context_len must be at least 2 * n_entities");
  }
  if (cfg.vocab_size < cfg.n_entities + 4) {
    throw std::invalid_argument("synthetic: vocab_size must exceed n_entities by at least 4");
  }
  if (cfg.vocab_size > 20000) throw std::invalid_argument("synthetic: vocab_size above 20000 is not supported");
}

}  // namespace detail

inline SynthWorld synthetic_world(const SynthConfig& cfg) {
  detail::check_synth_config(cfg);
  Rng rng(cfg.seed);
  return detail::make_world(cfg, rng);
}

// Generates sum(sizes) samples from one stream and cuts them into
// consecutive splits, so every split shares the same entity/topic binding.
inline std::vector<DatasetSplit> generate_synthetic_splits(const SynthConfig& cfg,
                                                           const std::vector<std::pair<std::string, std::size_t>>& sizes) {
  SynthConfig total = cfg;
  total.n_samples = 0;
  for (const auto& [name, n] : sizes) {
    if (n == 0) throw std::invalid_argument("synthetic: split '" + name + "' is empty");
    total.n_samples += n;
  }
  detail::check_synth_config(total);
  Rng rng(cfg.seed);
  const SynthWorld world = detail::make_world(total, rng);
  std::vector<DatasetSplit> out;
  std::size_t index = 0;
  for (const auto& [name, n] : sizes) {
    DatasetSplit split{name, {}};
    for (std::size_t i = 0; i < n; ++i) split.samples.push_back(detail::make_synthetic_sample(total, world, rng, index++));
    out.push_back(std::move(split));
  }
  return out;
}

inline DatasetSplit generate_synthetic(const SynthConfig& cfg) {
  return std::move(generate_synthetic_splits(cfg, {{"synthetic", cfg.n_samples}}).front());
}

// Vocabulary over a split's contexts, questions and candidate surface forms.
inline Vocab build_vocab(const DatasetSplit& split, std::size_t max_size = 30000, std::size_t min_freq = 1) {
  std::vector<std::string> texts;
  for (const auto& s : split.samples) {
    texts.push_back(s.context);
    texts.push_back(s.question);
    for (const auto& c : s.candidates) texts.insert(texts.end(), c.surfaces.begin(), c.surfaces.end());
  }
  return build_vocab(std::span<const std::string>(texts), max_size, min_freq);
}

using Batches = std::vector<std::vector<std::size_t>>;

// Index batches over n samples; the last batch may be short.
inline Batches make_batches(std::size_t n, std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed = {}) {
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch_size must be at least 1");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    rng.shuffle(order);
  }
  Batches out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return out;
}

inline std::vector<std::vector<ClozeSample>> make_batches(const DatasetSplit& split, std::size_t batch_size,
                                                          std::optional<std::uint64_t> shuffle_seed = {}) {
  std::vector<std::vector<ClozeSample>> out;
  for (const auto& b : make_batches(split.size(), batch_size, shuffle_seed)) {
    auto& batch = out.emplace_back();
    for (std::size_t i : b) batch.push_back(split.samples[i]);
  }
  return out;
}

}  // namespace aoa
