#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "prescreen/index.hpp"
#include "support/oracles.hpp"
#include "support/util.hpp"

using namespace prescreen;
using testsupport::expect_error;
using testsupport::oracle_screen;
using testsupport::slurp;
using testsupport::spit;
using testsupport::TempDir;

namespace {

std::vector<LabelId> ids(std::initializer_list<LabelId> xs) { return xs; }

ForwardIndex forward_of(std::vector<std::vector<LabelId>> entries) {
  ForwardIndex f;
  f.entries = std::move(entries);
  return f;
}

// g0 and g2 share label 0, g3 carries nothing.
InvertedIndex sample_index() {
  return InvertedIndex::build(
      forward_of({{0, 2}, {1}, {0, 1, 3}, {}}), 4, 7);
}

// Byte surgery helper: the serialized form ends in a crc32 of the body,
// so any patch has to refresh it to reach the checks behind the
// checksum.
std::string with_crc(std::string bytes) {
  std::size_t body = bytes.size() - 4;
  std::uint32_t crc = static_cast<std::uint32_t>(crc32_z(
      crc32_z(0, nullptr, 0),
      reinterpret_cast<const unsigned char*>(bytes.data()), body));
  std::memcpy(bytes.data() + body, &crc, 4);
  return bytes;
}

ForwardIndex random_forward(std::mt19937& rng, std::size_t n,
                            std::size_t label_count) {
  std::bernoulli_distribution has(0.25);
  ForwardIndex f;
  f.entries.resize(n);
  for (auto& labels : f.entries)
    for (LabelId l = 0; l < label_count; ++l)
      if (has(rng)) labels.push_back(l);
  return f;
}

}  // namespace

TEST_CASE("the inverted index mirrors the forward lists") {
  auto index = sample_index();
  CHECK(index.gallery_count() == 4);
  CHECK(index.label_count() == 4);
  CHECK(index.vocab_hash() == 7);
  CHECK(std::vector<GalleryId>(index.postings(0).begin(),
                               index.postings(0).end()) == ids({0, 2}));
  CHECK(std::vector<GalleryId>(index.postings(1).begin(),
                               index.postings(1).end()) == ids({1, 2}));
  CHECK(std::vector<GalleryId>(index.postings(2).begin(),
                               index.postings(2).end()) == ids({0}));
  CHECK(std::vector<GalleryId>(index.postings(3).begin(),
                               index.postings(3).end()) == ids({2}));

  auto back = index.invert();
  CHECK(back.entries ==
        forward_of({{0, 2}, {1}, {0, 1, 3}, {}}).entries);
}

TEST_CASE("building validates the forward lists") {
  expect_error([&] { InvertedIndex::build(forward_of({{2, 0}}), 4, 0); },
               ErrorKind::InvalidLabel);
  expect_error([&] { InvertedIndex::build(forward_of({{1, 1}}), 4, 0); },
               ErrorKind::InvalidLabel);
  expect_error([&] { InvertedIndex::build(forward_of({{4}}), 4, 0); },
               ErrorKind::InvalidLabel);

  // an empty gallery is legal, screening just falls back
  auto empty = InvertedIndex::build(forward_of({}), 3, 0);
  auto result = screen(empty, ids({0}), Fallback::FullGallery);
  CHECK(result.fallback_used);
  CHECK(result.retained.empty());
}

TEST_CASE("screening unions the matching posting lists") {
  auto index = sample_index();

  auto r = screen(index, ids({0}), Fallback::Empty);
  CHECK(r.retained == ids({0, 2}));
  CHECK_FALSE(r.fallback_used);

  CHECK(screen(index, ids({0, 3}), Fallback::Empty).retained == ids({0, 2}));
  CHECK(screen(index, ids({1, 2}), Fallback::Empty).retained ==
        ids({0, 1, 2}));
  CHECK(screen(index, ids({0, 0, 0}), Fallback::Empty).retained ==
        ids({0, 2}));

  // ids past the vocabulary match nothing
  CHECK(screen(index, ids({0, 99}), Fallback::Empty).retained == ids({0, 2}));

  auto missed = screen(index, ids({99}), Fallback::Empty);
  CHECK(missed.retained.empty());
  CHECK(missed.fallback_used);

  auto full = screen(index, ids({99}), Fallback::FullGallery);
  CHECK(full.retained == ids({0, 1, 2, 3}));
  CHECK(full.fallback_used);

  auto blank = screen(index, {}, Fallback::FullGallery);
  CHECK(blank.retained == ids({0, 1, 2, 3}));
  CHECK(blank.fallback_used);
}

TEST_CASE("screening matches a brute-force scan") {
  std::mt19937 rng(17);
  std::uniform_int_distribution<std::size_t> galleries(1, 60);
  std::uniform_int_distribution<std::size_t> labels(1, 12);
  std::uniform_int_distribution<std::size_t> query_len(0, 4);

  for (int trial = 0; trial < 300; ++trial) {
    std::size_t label_count = labels(rng);
    auto forward = random_forward(rng, galleries(rng), label_count);
    auto index = InvertedIndex::build(forward, label_count, 0);

    std::uniform_int_distribution<LabelId> pick(
        0, static_cast<LabelId>(label_count + 2));  // sometimes unknown
    std::vector<LabelId> query(query_len(rng));
    for (LabelId& q : query) q = pick(rng);

    std::vector<LabelId> known;
    for (LabelId q : query)
      if (q < label_count) known.push_back(q);

    auto result = screen(index, query, Fallback::Empty);
    auto expected = oracle_screen(forward.entries, known);
    CHECK(result.retained == expected);
    CHECK(result.fallback_used == expected.empty());
  }
}

TEST_CASE("adding query labels never shrinks the retained set") {
  std::mt19937 rng(29);
  std::uniform_int_distribution<std::size_t> galleries(1, 40);

  for (int trial = 0; trial < 100; ++trial) {
    std::size_t label_count = 8;
    auto forward = random_forward(rng, galleries(rng), label_count);
    auto index = InvertedIndex::build(forward, label_count, 0);

    std::uniform_int_distribution<LabelId> pick(0, 7);
    std::vector<LabelId> base(2), wider;
    for (LabelId& q : base) q = pick(rng);
    wider = base;
    wider.push_back(pick(rng));
    wider.push_back(pick(rng));

    auto small = screen(index, base, Fallback::Empty).retained;
    auto large = screen(index, wider, Fallback::Empty).retained;
    CHECK(std::includes(large.begin(), large.end(), small.begin(),
                        small.end()));
  }
}

TEST_CASE("indexes survive a byte round trip") {
  TempDir dir;
  auto index = sample_index();

  std::string first = dir.file("gallery.kwix");
  std::string second = dir.file("copy.kwix");
  save_index(index, first);
  auto loaded = load_index(first);
  CHECK(loaded.gallery_count() == index.gallery_count());
  CHECK(loaded.label_count() == index.label_count());
  CHECK(loaded.vocab_hash() == index.vocab_hash());
  CHECK(loaded.invert().entries == index.invert().entries);

  save_index(loaded, second);
  CHECK(slurp(first) == slurp(second));

  // labels with empty postings and a label-free gallery both round trip
  auto sparse = InvertedIndex::build(forward_of({{}, {5}}), 6, 1);
  save_index(sparse, first);
  CHECK(load_index(first).invert().entries == sparse.invert().entries);
}

TEST_CASE("corrupt index files are rejected") {
  TempDir dir;
  save_index(sample_index(), dir.file("gallery.kwix"));
  std::string good = slurp(dir.file("gallery.kwix"));

  auto reject = [&](const std::string& bytes) {
    std::string path = dir.file("bad.kwix");
    spit(path, bytes);
    expect_error([&] { load_index(path); }, ErrorKind::CorruptIndex);
  };

  reject("");                                // no room for a checksum
  reject(good.substr(0, good.size() - 1));   // truncated
  reject(good.substr(0, 20));                // header cut short

  std::string flipped = good;
  flipped[16] ^= 0x01;  // payload bit flip, checksum now stale
  reject(flipped);

  std::string magic = good;
  magic[0] ^= 0x40;
  reject(with_crc(magic));

  std::string version = good;
  version[4] = 9;
  reject(with_crc(version));

  // gallery count forced past 32 bits
  std::string overflow = good;
  std::uint64_t huge = 1ULL << 32;
  std::memcpy(overflow.data() + 16, &huge, 8);
  reject(with_crc(overflow));

  // label blocks must arrive as 0,1,2,..
  std::string disorder = good;
  disorder[32] = 1;
  reject(with_crc(disorder));

  // label 0 posts {0,2}: gap byte at 41; zero gap means a duplicate id
  std::string duplicate = good;
  duplicate[41] = 0;
  reject(with_crc(duplicate));

  // and a giant gap walks out of the gallery
  std::string runaway = good;
  runaway[41] = 0x7f;
  reject(with_crc(runaway));

  std::string trailing = good;
  trailing.insert(trailing.size() - 4, 1, '\0');
  reject(with_crc(trailing));

  expect_error([&] { load_index(dir.file("absent.kwix")); },
               ErrorKind::MissingFile);
}

TEST_CASE("stats summarize the postings") {
  TempDir dir;
  auto index = sample_index();
  auto s = stats(index);
  CHECK(s.gallery_count == 4);
  CHECK(s.label_count == 4);
  CHECK(s.posting_entries == 6);
  CHECK(s.posting_length_histogram ==
        std::map<std::size_t, std::size_t>{{1, 2}, {2, 2}});

  save_index(index, dir.file("gallery.kwix"));
  CHECK(s.serialized_bytes == slurp(dir.file("gallery.kwix")).size());
}

TEST_CASE("the dense forward interchange is strict about ids") {
  TempDir dir;
  std::string path = dir.file("forward.jsonl");
  auto forward = forward_of({{0, 2}, {}, {1}});

  save_forward(forward, path);
  CHECK(load_forward(path).entries == forward.entries);

  // rows may arrive in any order, labels get sorted and deduped
  spit(path,
       R"({"gallery_id":1,"labels":[3,1,1]})" "\n"
       R"({"gallery_id":0,"labels":[]})" "\n");
  auto shuffled = load_forward(path);
  CHECK(shuffled.entries == forward_of({{}, {1, 3}}).entries);

  spit(path,
       R"({"gallery_id":0,"labels":[]})" "\n"
       R"({"gallery_id":0,"labels":[]})" "\n");
  expect_error([&] { load_forward(path); }, ErrorKind::ParseError);

  spit(path,
       R"({"gallery_id":0,"labels":[]})" "\n"
       R"({"gallery_id":2,"labels":[]})" "\n");
  expect_error([&] { load_forward(path); }, ErrorKind::ParseError);

  spit(path, R"({"gallery_id":0,"labels":7})" "\n");
  expect_error([&] { load_forward(path); }, ErrorKind::ParseError);

  spit(path, R"({"gallery_id":0,"labels":[-3]})" "\n");
  expect_error([&] { load_forward(path); }, ErrorKind::ParseError);

  spit(path, R"({"gallery_id":0,"labels":[99999999999]})" "\n");
  expect_error([&] { load_forward(path); }, ErrorKind::ParseError);
}

TEST_CASE("string ids map to dense gallery ids and back") {
  TempDir dir;
  auto map = IdMap::from_sorted_names({"img-a", "img-b", "img-c"});
  CHECK(map.names.size() == 3);
  CHECK(map.require("img-a") == 0);
  CHECK(map.require("img-c") == 2);
  expect_error([&] { map.require("img-z"); }, ErrorKind::MissingVector);

  expect_error([&] { IdMap::from_sorted_names({"b", "a"}); },
               ErrorKind::ParseError);
  expect_error([&] { IdMap::from_sorted_names({"a", "a"}); },
               ErrorKind::ParseError);

  std::string path = dir.file("gallery.ids.jsonl");
  save_id_map(map, path);
  auto loaded = load_id_map(path);
  CHECK(loaded.names == map.names);
  CHECK(loaded.require("img-b") == 1);

  spit(path,
       R"({"gallery_id":0,"sample_id":"x"})" "\n"
       R"({"gallery_id":3,"sample_id":"y"})" "\n");
  expect_error([&] { load_id_map(path); }, ErrorKind::ParseError);
}
