#ifndef PRESCREEN_INDEX_HPP
#define PRESCREEN_INDEX_HPP

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace prescreen {

using GalleryId = std::uint32_t;
using LabelId = std::uint32_t;

// Dense gallery: entry g holds the sorted unique label ids of gallery
// item g, for g in [0, entries.size()).
struct ForwardIndex {
  std::vector<std::vector<LabelId>> entries;

  GalleryId size() const { return static_cast<GalleryId>(entries.size()); }
};

struct IndexStats {
  std::uint64_t gallery_count = 0;
  std::uint64_t label_count = 0;
  std::uint64_t posting_entries = 0;
  std::uint64_t serialized_bytes = 0;
  std::map<std::size_t, std::size_t> posting_length_histogram;
};

class InvertedIndex {
 public:
  // Validates every entry: sorted, unique, ids below label_count.
  static InvertedIndex build(const ForwardIndex& forward,
                             std::size_t label_count,
                             std::uint64_t vocab_hash);

  std::size_t label_count() const { return postings_.size(); }
  GalleryId gallery_count() const { return gallery_count_; }
  std::uint64_t vocab_hash() const { return vocab_hash_; }

  std::span<const GalleryId> postings(LabelId label) const {
    return postings_[label];
  }

  ForwardIndex invert() const;

 private:
  std::vector<std::vector<GalleryId>> postings_;  // each ascending
  GalleryId gallery_count_ = 0;
  std::uint64_t vocab_hash_ = 0;

  friend InvertedIndex load_index(const std::string& path);
};

enum class Fallback { FullGallery, Empty };

struct ScreenResult {
  std::vector<GalleryId> retained;  // ascending, unique
  bool fallback_used = false;       // true iff the raw union was empty
};

// Union of the posting lists of the query labels.  Duplicate query
// labels are collapsed; ids at or above label_count match nothing.  On
// an empty union the fallback policy decides between the full gallery
// and an empty result, and fallback_used is set either way.
ScreenResult screen(const InvertedIndex& index,
                    std::span<const LabelId> query_labels, Fallback fallback);

IndexStats stats(const InvertedIndex& index);

void save_index(const InvertedIndex& index, const std::string& path);
InvertedIndex load_index(const std::string& path);

// Dense forward-index interchange: one {"gallery_id", "labels"} record
// per line; ids must be exactly 0..N-1 (any order in the file).
void save_forward(const ForwardIndex& forward, const std::string& path);
ForwardIndex load_forward(const std::string& path);

// Maps between external string sample ids and dense gallery ids.  Dense
// ids are assigned in ascending order of sample id.
struct IdMap {
  std::vector<std::string> names;  // gallery id -> sample id
  std::unordered_map<std::string, GalleryId> ids;

  static IdMap from_sorted_names(std::vector<std::string> sorted_names);
  GalleryId require(const std::string& name) const;
};

void save_id_map(const IdMap& map, const std::string& path);
IdMap load_id_map(const std::string& path);

}  // namespace prescreen

#endif  // PRESCREEN_INDEX_HPP
