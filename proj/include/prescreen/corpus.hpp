#ifndef PRESCREEN_CORPUS_HPP
#define PRESCREEN_CORPUS_HPP

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace prescreen {

enum class Modality : std::uint8_t { Image = 0, Text = 1 };

inline const char* to_string(Modality m) {
  return m == Modality::Image ? "image" : "text";
}
std::optional<Modality> modality_from_string(std::string_view s);

struct Caption {
  std::string text_id;
  std::string image_id;
  std::string text;
};

// POS tags a lexicon entry may carry, as a bitmask (a word can be
// ambiguous, e.g. noun and verb).
enum PosTag : unsigned { kNoun = 1u, kVerb = 2u, kAdjective = 4u };

// Which tags count as keywords.
enum class PosMode { Noun, NounVerbAdjective };

struct LexiconEntry {
  unsigned tags = 0;
  std::string canonical;  // empty: the word is its own canonical form
};

class Lexicon {
 public:
  void add_word(std::string word, unsigned tags, std::string canonical = "");
  void add_stopword(std::string word);

  bool is_stopword(const std::string& word) const {
    return stopwords_.count(word) != 0;
  }
  const LexiconEntry* find(const std::string& word) const;
  std::size_t size() const { return entries_.size(); }

  // lexicon: TSV (word, comma-joined tags, optional canonical form);
  // stopwords: one word per line.  '#' lines and blanks are skipped.
  static Lexicon load(const std::string& lexicon_path,
                      const std::string& stopwords_path);

 private:
  std::unordered_map<std::string, LexiconEntry> entries_;
  std::unordered_set<std::string> stopwords_;
};

// Lowercases ASCII letters and splits on ASCII non-alphanumerics.
// Bytes >= 0x80 are kept inside tokens untouched, so UTF-8 words pass
// through whole.
std::vector<std::string> tokenize(std::string_view text);

// Canonical keyword set of one caption: tokens that are in the lexicon,
// not stopwords, and tagged with a wanted POS.
std::set<std::string> extract_keywords(std::string_view text,
                                       const Lexicon& lexicon, PosMode mode);

struct Vocabulary {
  std::vector<std::string> keywords;       // label id -> keyword
  std::vector<std::uint64_t> image_df;     // label id -> image frequency
  std::unordered_map<std::string, std::uint32_t> ids;

  std::uint32_t size() const { return static_cast<std::uint32_t>(keywords.size()); }
  std::optional<std::uint32_t> lookup(const std::string& keyword) const;

  // FNV-1a over the ordered keyword list; stored in every artifact
  // derived from this vocabulary so stale combinations are rejected.
  std::uint64_t fingerprint() const;

  static Vocabulary from_keywords(std::vector<std::string> keywords,
                                  std::vector<std::uint64_t> image_df);
};

// Keywords that occur in at least min_images distinct images become
// labels, ordered by descending image frequency, ties lexicographic.
// Throws EmptyVocabulary if nothing survives.
Vocabulary build_vocabulary(std::span<const Caption> captions,
                            const Lexicon& lexicon, PosMode mode,
                            std::uint64_t min_images);

struct AnnotationSet {
  std::string sample_id;
  Modality modality = Modality::Image;
  std::vector<std::uint32_t> labels;  // sorted, unique
};

// Image labels: union of in-vocabulary keywords over the image's
// captions.  Text labels: the paired image's labels.  Output is images
// (sorted by id) then texts (sorted by id).  When known_images is given,
// a caption naming an image outside it throws OrphanText.
std::vector<AnnotationSet> build_annotations(
    std::span<const Caption> captions, const Vocabulary& vocabulary,
    const Lexicon& lexicon, PosMode mode,
    const std::set<std::string>* known_images = nullptr);

std::vector<Caption> load_captions(const std::string& path);

void save_vocabulary(const Vocabulary& vocabulary, const std::string& path);
Vocabulary load_vocabulary(const std::string& path);

void save_annotations(std::span<const AnnotationSet> annotations,
                      const std::string& path);
std::vector<AnnotationSet> load_annotations(const std::string& path);

}  // namespace prescreen

#endif  // PRESCREEN_CORPUS_HPP
