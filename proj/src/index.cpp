#include "prescreen/index.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <numeric>

#include <zlib.h>

#include "prescreen/bytes.hpp"
#include "prescreen/error.hpp"
#include "prescreen/jsonl.hpp"

namespace prescreen {

using jsonl::json;

InvertedIndex InvertedIndex::build(const ForwardIndex& forward,
                                   std::size_t label_count,
                                   std::uint64_t vocab_hash) {
  InvertedIndex index;
  index.gallery_count_ = forward.size();
  index.vocab_hash_ = vocab_hash;
  index.postings_.resize(label_count);
  for (GalleryId g = 0; g < forward.size(); ++g) {
    const auto& labels = forward.entries[g];
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= label_count)
        fail(ErrorKind::InvalidLabel,
             "gallery " + std::to_string(g) + ": label id " +
                 std::to_string(labels[i]) + " out of range");
      if (i > 0 && labels[i] <= labels[i - 1])
        fail(ErrorKind::InvalidLabel,
             "gallery " + std::to_string(g) + ": labels must be sorted unique");
      index.postings_[labels[i]].push_back(g);
    }
  }
  return index;
}

ForwardIndex InvertedIndex::invert() const {
  ForwardIndex forward;
  forward.entries.resize(gallery_count_);
  for (LabelId l = 0; l < postings_.size(); ++l)
    for (GalleryId g : postings_[l]) forward.entries[g].push_back(l);
  return forward;
}

ScreenResult screen(const InvertedIndex& index,
                    std::span<const LabelId> query_labels, Fallback fallback) {
  // Dedupe the query labels; unknown ids select nothing.
  std::vector<LabelId> labels(query_labels.begin(), query_labels.end());
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());

  ScreenResult result;
  std::size_t touched = 0;
  for (LabelId l : labels)
    if (l < index.label_count()) touched += index.postings(l).size();
  result.retained.reserve(touched);
  for (LabelId l : labels) {
    if (l >= index.label_count()) continue;
    auto posting = index.postings(l);
    result.retained.insert(result.retained.end(), posting.begin(),
                           posting.end());
  }
  std::sort(result.retained.begin(), result.retained.end());
  result.retained.erase(
      std::unique(result.retained.begin(), result.retained.end()),
      result.retained.end());

  if (result.retained.empty()) {
    result.fallback_used = true;
    if (fallback == Fallback::FullGallery) {
      result.retained.resize(index.gallery_count());
      std::iota(result.retained.begin(), result.retained.end(), 0u);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// serialization: magic, version, vocab hash, N, label count, one block
// per label (id, length, first id absolute then ascending gaps, all
// varint), closed by a crc32 of everything before it.

namespace {

constexpr char kIndexMagic[4] = {'K', 'W', 'I', 'X'};
constexpr std::uint32_t kIndexVersion = 1;

bytes::Buffer serialize(const InvertedIndex& index) {
  bytes::Buffer buf;
  bytes::put_raw(buf, kIndexMagic, 4);
  bytes::put_u32(buf, kIndexVersion);
  bytes::put_u64(buf, index.vocab_hash());
  bytes::put_u64(buf, index.gallery_count());
  bytes::put_u64(buf, index.label_count());
  for (LabelId l = 0; l < index.label_count(); ++l) {
    auto posting = index.postings(l);
    bytes::put_u32(buf, l);
    bytes::put_u32(buf, static_cast<std::uint32_t>(posting.size()));
    GalleryId prev = 0;
    for (std::size_t i = 0; i < posting.size(); ++i) {
      bytes::put_uvarint(buf, i == 0 ? posting[0] : posting[i] - prev);
      prev = posting[i];
    }
  }
  std::uint32_t crc = static_cast<std::uint32_t>(
      crc32_z(crc32_z(0, nullptr, 0), buf.data(), buf.size()));
  bytes::put_u32(buf, crc);
  return buf;
}

}  // namespace

void save_index(const InvertedIndex& index, const std::string& path) {
  bytes::write_file(path, serialize(index));
}

InvertedIndex load_index(const std::string& path) {
  bytes::Buffer buf = bytes::read_file(path);
  if (buf.size() < 4) fail(ErrorKind::CorruptIndex, path + ": truncated");

  std::size_t body = buf.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + body, 4);
  std::uint32_t actual = static_cast<std::uint32_t>(
      crc32_z(crc32_z(0, nullptr, 0), buf.data(), body));
  if (stored != actual)
    fail(ErrorKind::CorruptIndex, path + ": checksum mismatch");

  bytes::Reader r(buf.data(), body, ErrorKind::CorruptIndex, path);
  char magic[4];
  r.get_raw(magic, 4);
  if (std::memcmp(magic, kIndexMagic, 4) != 0)
    fail(ErrorKind::CorruptIndex, path + ": bad magic");
  if (r.get_u32() != kIndexVersion)
    fail(ErrorKind::CorruptIndex, path + ": unsupported version");

  InvertedIndex index;
  index.vocab_hash_ = r.get_u64();
  std::uint64_t gallery_count = r.get_u64();
  std::uint64_t label_count = r.get_u64();
  if (gallery_count > std::numeric_limits<GalleryId>::max())
    fail(ErrorKind::CorruptIndex, path + ": gallery count overflows");
  index.gallery_count_ = static_cast<GalleryId>(gallery_count);
  index.postings_.resize(label_count);

  for (std::uint64_t l = 0; l < label_count; ++l) {
    if (r.get_u32() != l)
      fail(ErrorKind::CorruptIndex, path + ": label blocks out of order");
    std::uint32_t length = r.get_u32();
    auto& posting = index.postings_[l];
    posting.reserve(length);
    std::uint64_t prev = 0;
    for (std::uint32_t i = 0; i < length; ++i) {
      std::uint64_t gap = r.get_uvarint();
      if (i > 0 && gap == 0)
        fail(ErrorKind::CorruptIndex, path + ": ids must be ascending");
      std::uint64_t id = i == 0 ? gap : prev + gap;
      if (id >= gallery_count)
        fail(ErrorKind::CorruptIndex, path + ": gallery id out of range");
      posting.push_back(static_cast<GalleryId>(id));
      prev = id;
    }
  }
  r.expect_done();
  return index;
}

IndexStats stats(const InvertedIndex& index) {
  IndexStats s;
  s.gallery_count = index.gallery_count();
  s.label_count = index.label_count();
  for (LabelId l = 0; l < index.label_count(); ++l) {
    std::size_t len = index.postings(l).size();
    s.posting_entries += len;
    ++s.posting_length_histogram[len];
  }
  s.serialized_bytes = serialize(index).size();
  return s;
}

void save_forward(const ForwardIndex& forward, const std::string& path) {
  auto out = jsonl::open_output(path);
  for (GalleryId g = 0; g < forward.size(); ++g) {
    json j;
    j["gallery_id"] = g;
    j["labels"] = forward.entries[g];
    out << j.dump() << '\n';
  }
}

ForwardIndex load_forward(const std::string& path) {
  std::vector<std::pair<std::uint64_t, std::vector<LabelId>>> rows;
  jsonl::for_each(path, [&](const json& j, std::size_t lineno) {
    std::string where = jsonl::where(path, lineno);
    std::uint64_t g = jsonl::uint_field(j, "gallery_id", where);
    const json& labels = jsonl::field(j, "labels", where);
    if (!labels.is_array())
      fail(ErrorKind::ParseError, where + ": labels must be an array");
    std::vector<LabelId> ids;
    for (const json& v : labels) {
      if (!v.is_number_unsigned() ||
          v.get<std::uint64_t>() > std::numeric_limits<LabelId>::max())
        fail(ErrorKind::ParseError, where + ": bad label id");
      ids.push_back(v.get<LabelId>());
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    rows.emplace_back(g, std::move(ids));
  });

  ForwardIndex forward;
  forward.entries.resize(rows.size());
  std::vector<char> seen(rows.size(), 0);
  for (auto& [g, ids] : rows) {
    if (g >= rows.size() || seen[g])
      fail(ErrorKind::ParseError,
           path + ": gallery ids must be a permutation of 0.." +
               std::to_string(rows.size() ? rows.size() - 1 : 0));
    seen[g] = 1;
    forward.entries[g] = std::move(ids);
  }
  return forward;
}

IdMap IdMap::from_sorted_names(std::vector<std::string> sorted_names) {
  IdMap map;
  map.names = std::move(sorted_names);
  for (GalleryId g = 0; g < map.names.size(); ++g) {
    if (g > 0 && map.names[g] <= map.names[g - 1])
      fail(ErrorKind::ParseError,
           "duplicate or unsorted sample id " + map.names[g]);
    map.ids.emplace(map.names[g], g);
  }
  return map;
}

GalleryId IdMap::require(const std::string& name) const {
  auto it = ids.find(name);
  if (it == ids.end())
    fail(ErrorKind::MissingVector, "sample " + name + " is not in the gallery");
  return it->second;
}

void save_id_map(const IdMap& map, const std::string& path) {
  auto out = jsonl::open_output(path);
  for (GalleryId g = 0; g < map.names.size(); ++g) {
    json j;
    j["gallery_id"] = g;
    j["sample_id"] = map.names[g];
    out << j.dump() << '\n';
  }
}

IdMap load_id_map(const std::string& path) {
  std::vector<std::pair<std::uint64_t, std::string>> rows;
  jsonl::for_each(path, [&](const json& j, std::size_t lineno) {
    std::string where = jsonl::where(path, lineno);
    rows.emplace_back(jsonl::uint_field(j, "gallery_id", where),
                      jsonl::str_field(j, "sample_id", where));
  });
  std::vector<std::string> names(rows.size());
  std::vector<char> seen(rows.size(), 0);
  for (auto& [g, name] : rows) {
    if (g >= rows.size() || seen[g])
      fail(ErrorKind::ParseError, path + ": gallery ids must be a permutation");
    seen[g] = 1;
    names[g] = std::move(name);
  }
  return IdMap::from_sorted_names(std::move(names));
}

}  // namespace prescreen
