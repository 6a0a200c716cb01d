#include "prescreen/corpus.hpp"

#include <algorithm>
#include <map>
#include <utility>

#include "prescreen/error.hpp"
#include "prescreen/jsonl.hpp"

namespace prescreen {

using jsonl::json;

std::optional<Modality> modality_from_string(std::string_view s) {
  if (s == "image") return Modality::Image;
  if (s == "text") return Modality::Text;
  return std::nullopt;
}

void Lexicon::add_word(std::string word, unsigned tags, std::string canonical) {
  LexiconEntry& e = entries_[std::move(word)];
  e.tags |= tags;
  if (!canonical.empty()) e.canonical = std::move(canonical);
}

void Lexicon::add_stopword(std::string word) {
  stopwords_.insert(std::move(word));
}

const LexiconEntry* Lexicon::find(const std::string& word) const {
  auto it = entries_.find(word);
  return it == entries_.end() ? nullptr : &it->second;
}

namespace {

unsigned parse_tags(const std::string& spec, const std::string& where) {
  unsigned tags = 0;
  std::size_t start = 0;
  while (start <= spec.size()) {
    std::size_t end = spec.find(',', start);
    if (end == std::string::npos) end = spec.size();
    std::string tag = spec.substr(start, end - start);
    if (tag == "NOUN") tags |= kNoun;
    else if (tag == "VERB") tags |= kVerb;
    else if (tag == "ADJ") tags |= kAdjective;
    else if (!tag.empty())
      fail(ErrorKind::ParseError, where + ": unknown tag \"" + tag + "\"");
    if (end == spec.size()) break;
    start = end + 1;
  }
  if (tags == 0) fail(ErrorKind::ParseError, where + ": no tags");
  return tags;
}

std::vector<std::string> split_tsv(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    std::size_t end = line.find('\t', start);
    if (end == std::string::npos) {
      cols.push_back(line.substr(start));
      return cols;
    }
    cols.push_back(line.substr(start, end - start));
    start = end + 1;
  }
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

Lexicon Lexicon::load(const std::string& lexicon_path,
                      const std::string& stopwords_path) {
  Lexicon lex;
  {
    auto in = jsonl::open_input(lexicon_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      line = strip_cr(line);
      if (line.empty() || line[0] == '#') continue;
      auto cols = split_tsv(line);
      std::string where = jsonl::where(lexicon_path, lineno);
      if (cols.size() < 2 || cols.size() > 3 || cols[0].empty())
        fail(ErrorKind::ParseError, where + ": want word<TAB>tags[<TAB>canonical]");
      lex.add_word(cols[0], parse_tags(cols[1], where),
                   cols.size() == 3 ? cols[2] : "");
    }
  }
  {
    auto in = jsonl::open_input(stopwords_path);
    std::string line;
    while (std::getline(in, line)) {
      line = strip_cr(line);
      if (!line.empty() && line[0] != '#') lex.add_stopword(line);
    }
  }
  return lex;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    bool in_word = c >= 0x80 || (c >= 'a' && c <= 'z') ||
                   (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
    if (in_word) {
      current.push_back(c >= 'A' && c <= 'Z' ? char(c - 'A' + 'a') : char(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::set<std::string> extract_keywords(std::string_view text,
                                       const Lexicon& lexicon, PosMode mode) {
  unsigned wanted = mode == PosMode::Noun ? kNoun : (kNoun | kVerb | kAdjective);
  std::set<std::string> keywords;
  for (std::string& token : tokenize(text)) {
    if (lexicon.is_stopword(token)) continue;
    const LexiconEntry* entry = lexicon.find(token);
    if (!entry || !(entry->tags & wanted)) continue;
    keywords.insert(entry->canonical.empty() ? std::move(token)
                                             : entry->canonical);
  }
  return keywords;
}

std::optional<std::uint32_t> Vocabulary::lookup(const std::string& keyword) const {
  auto it = ids.find(keyword);
  if (it == ids.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Vocabulary::fingerprint() const {
  // FNV-1a, with a separator byte after each keyword so boundaries count.
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ull;
  };
  for (const std::string& k : keywords) {
    for (unsigned char c : k) mix(c);
    mix('\n');
  }
  return h;
}

Vocabulary Vocabulary::from_keywords(std::vector<std::string> keywords,
                                     std::vector<std::uint64_t> image_df) {
  if (keywords.size() != image_df.size())
    fail(ErrorKind::InvariantBreach, "vocabulary keyword/df length mismatch");
  Vocabulary v;
  v.keywords = std::move(keywords);
  v.image_df = std::move(image_df);
  for (std::uint32_t i = 0; i < v.size(); ++i) {
    if (!v.ids.emplace(v.keywords[i], i).second)
      fail(ErrorKind::ParseError, "duplicate keyword \"" + v.keywords[i] + "\"");
  }
  return v;
}

namespace {

// image id -> union of canonical keywords over its captions
std::map<std::string, std::set<std::string>> keywords_per_image(
    std::span<const Caption> captions, const Lexicon& lexicon, PosMode mode) {
  std::map<std::string, std::set<std::string>> per_image;
  for (const Caption& c : captions) {
    auto kws = extract_keywords(c.text, lexicon, mode);
    per_image[c.image_id].merge(kws);
  }
  return per_image;
}

}  // namespace

Vocabulary build_vocabulary(std::span<const Caption> captions,
                            const Lexicon& lexicon, PosMode mode,
                            std::uint64_t min_images) {
  std::map<std::string, std::uint64_t> df;
  for (const auto& [image, kws] : keywords_per_image(captions, lexicon, mode))
    for (const std::string& k : kws) ++df[k];

  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (const auto& [keyword, count] : df)
    if (count >= min_images) kept.emplace_back(keyword, count);
  if (kept.empty())
    fail(ErrorKind::EmptyVocabulary,
         "no keyword reaches min_images=" + std::to_string(min_images));

  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> keywords;
  std::vector<std::uint64_t> image_df;
  keywords.reserve(kept.size());
  image_df.reserve(kept.size());
  for (auto& [keyword, count] : kept) {
    keywords.push_back(std::move(keyword));
    image_df.push_back(count);
  }
  return Vocabulary::from_keywords(std::move(keywords), std::move(image_df));
}

std::vector<AnnotationSet> build_annotations(
    std::span<const Caption> captions, const Vocabulary& vocabulary,
    const Lexicon& lexicon, PosMode mode,
    const std::set<std::string>* known_images) {
  std::map<std::string, std::set<std::uint32_t>> image_labels;
  std::map<std::string, std::string> text_image;
  for (const Caption& c : captions) {
    if (known_images && !known_images->count(c.image_id))
      fail(ErrorKind::OrphanText,
           "caption " + c.text_id + " names unknown image " + c.image_id);
    auto [it, inserted] = text_image.emplace(c.text_id, c.image_id);
    if (!inserted && it->second != c.image_id)
      fail(ErrorKind::ParseError,
           "text " + c.text_id + " is paired with two images");
    auto& labels = image_labels[c.image_id];
    for (const std::string& k : extract_keywords(c.text, lexicon, mode))
      if (auto id = vocabulary.lookup(k)) labels.insert(*id);
  }

  std::vector<AnnotationSet> out;
  out.reserve(image_labels.size() + text_image.size());
  for (const auto& [image, labels] : image_labels)
    out.push_back({image, Modality::Image, {labels.begin(), labels.end()}});
  for (const auto& [text, image] : text_image) {
    const auto& labels = image_labels.at(image);
    out.push_back({text, Modality::Text, {labels.begin(), labels.end()}});
  }
  return out;
}

std::vector<Caption> load_captions(const std::string& path) {
  std::vector<Caption> captions;
  jsonl::for_each(path, [&](const json& j, std::size_t lineno) {
    std::string where = jsonl::where(path, lineno);
    captions.push_back({jsonl::str_field(j, "text_id", where),
                        jsonl::str_field(j, "image_id", where),
                        jsonl::str_field(j, "text", where)});
  });
  return captions;
}

void save_vocabulary(const Vocabulary& vocabulary, const std::string& path) {
  auto out = jsonl::open_output(path);
  for (std::uint32_t i = 0; i < vocabulary.size(); ++i) {
    json j;
    j["label_id"] = i;
    j["keyword"] = vocabulary.keywords[i];
    j["image_df"] = vocabulary.image_df[i];
    out << j.dump() << '\n';
  }
}

Vocabulary load_vocabulary(const std::string& path) {
  std::vector<std::string> keywords;
  std::vector<std::uint64_t> image_df;
  jsonl::for_each(path, [&](const json& j, std::size_t lineno) {
    std::string where = jsonl::where(path, lineno);
    if (jsonl::uint_field(j, "label_id", where) != keywords.size())
      fail(ErrorKind::ParseError, where + ": label ids must run 0,1,2,...");
    keywords.push_back(jsonl::str_field(j, "keyword", where));
    image_df.push_back(jsonl::uint_field(j, "image_df", where));
  });
  if (keywords.empty())
    fail(ErrorKind::EmptyVocabulary, path + " holds no labels");
  return Vocabulary::from_keywords(std::move(keywords), std::move(image_df));
}

void save_annotations(std::span<const AnnotationSet> annotations,
                      const std::string& path) {
  auto out = jsonl::open_output(path);
  for (const AnnotationSet& a : annotations) {
    json j;
    j["sample_id"] = a.sample_id;
    j["modality"] = to_string(a.modality);
    j["labels"] = a.labels;
    out << j.dump() << '\n';
  }
}

std::vector<AnnotationSet> load_annotations(const std::string& path) {
  std::vector<AnnotationSet> annotations;
  jsonl::for_each(path, [&](const json& j, std::size_t lineno) {
    std::string where = jsonl::where(path, lineno);
    AnnotationSet a;
    a.sample_id = jsonl::str_field(j, "sample_id", where);
    auto modality = modality_from_string(jsonl::str_field(j, "modality", where));
    if (!modality)
      fail(ErrorKind::ParseError, where + ": modality must be image or text");
    a.modality = *modality;
    const json& labels = jsonl::field(j, "labels", where);
    if (!labels.is_array())
      fail(ErrorKind::ParseError, where + ": labels must be an array");
    for (const json& v : labels) {
      if (!v.is_number_unsigned())
        fail(ErrorKind::ParseError, where + ": labels must be non-negative ids");
      a.labels.push_back(v.get<std::uint32_t>());
    }
    std::sort(a.labels.begin(), a.labels.end());
    a.labels.erase(std::unique(a.labels.begin(), a.labels.end()),
                   a.labels.end());
    annotations.push_back(std::move(a));
  });
  return annotations;
}

}  // namespace prescreen
