#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "prescreen/pipeline.hpp"
#include "support/util.hpp"

using namespace prescreen;
using testsupport::expect_error;
using testsupport::slurp;
using testsupport::TempDir;

namespace {

doctest::Approx near(double x) { return doctest::Approx(x).epsilon(1e-12); }

using Rows = std::vector<std::vector<double>>;
using IdRows = std::vector<std::vector<GalleryId>>;

RetrievalTask task_of(IdRows ground_truth, GalleryId gallery_count) {
  RetrievalTask t;
  t.ground_truth = std::move(ground_truth);
  t.gallery_count = gallery_count;
  return t;
}

InvertedIndex index_of(std::vector<std::vector<LabelId>> gallery_labels,
                       std::size_t label_count) {
  ForwardIndex f;
  f.entries = std::move(gallery_labels);
  return InvertedIndex::build(f, label_count, 0);
}

// Four gallery vectors, three queries that each point at a distinct
// best match; g3 carries no labels so only fallbacks reach it.
struct SmallCase {
  Rows queries = {{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}};
  Rows gallery = {{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}, {0.5, 0.5}};
  InvertedIndex index = index_of({{0}, {1}, {0, 1}, {}}, 2);
  std::vector<std::vector<LabelId>> keywords = {{0}, {1}, {0, 1}};
  RetrievalTask task = task_of({{0}, {1}, {2}}, 4);
  InnerProductReranker reranker{queries, gallery};
};

RunOptions untimed() {
  RunOptions o;
  o.ks = {1, 2};
  o.timing_repeats = 0;
  o.keep_rank_lists = true;
  return o;
}

}  // namespace

TEST_CASE("keyword sources have stable names") {
  CHECK(std::string(to_string(KeywordSource::Predicted)) == "predicted");
  CHECK(std::string(to_string(KeywordSource::Merged)) == "merged");
  CHECK(keyword_source_from_string("extracted") == KeywordSource::Extracted);
  CHECK(keyword_source_from_string("ground_truth") ==
        KeywordSource::GroundTruth);
  CHECK_FALSE(keyword_source_from_string("psychic").has_value());
}

TEST_CASE("the inner-product reranker scores candidate subsets") {
  SmallCase c;
  std::vector<GalleryId> candidates = {0, 2, 3};
  std::vector<double> scores(3);
  c.reranker.score(0, candidates, scores);
  CHECK(scores == std::vector<double>{1.0, 1.0, 0.5});
  c.reranker.score(2, candidates, scores);
  CHECK(scores == std::vector<double>{1.0, 2.0, 1.0});

  expect_error([&] { c.reranker.score(7, candidates, scores); },
               ErrorKind::MissingVector);
  std::vector<GalleryId> outside = {4};
  std::vector<double> one(1);
  expect_error([&] { c.reranker.score(0, outside, one); },
               ErrorKind::MissingVector);
  std::vector<double> short_buffer(2);
  expect_error([&] { c.reranker.score(0, candidates, short_buffer); },
               ErrorKind::DimensionMismatch);

  expect_error([&] { InnerProductReranker r({}, c.gallery); },
               ErrorKind::DimensionMismatch);
  expect_error(
      [&] { InnerProductReranker r(Rows{{1.0}, {1.0, 2.0}}, c.gallery); },
      ErrorKind::DimensionMismatch);
  expect_error([&] { InnerProductReranker r(Rows{{1.0}}, c.gallery); },
               ErrorKind::DimensionMismatch);
  expect_error(
      [&] {
        InnerProductReranker r(Rows{{std::nan("")}}, Rows{{1.0}});
      },
      ErrorKind::DomainError);
}

TEST_CASE("a full pass reports the hand-computed metrics") {
  SmallCase c;
  auto result = run(c.task, c.index, c.keywords, c.reranker, untimed());
  const EvalReport& r = result.report;

  CHECK(r.query_count == 3);
  CHECK(r.fallback_count == 0);
  CHECK(r.r_at.at(1) == 100.0);
  CHECK(r.r_at.at(2) == 100.0);
  CHECK(r.r_sum == 200.0);
  CHECK(r.gt_recall == 100.0);
  CHECK(r.screening_rate == near(125.0 / 3.0));

  // timing disabled: the clock never ran
  CHECK(r.wall_times.total_s == 0.0);
  CHECK(r.speedup == 0.0);

  // ties resolve to the lower gallery id in both rankings
  CHECK(result.screened_ranking ==
        IdRows{{0, 2}, {1, 2}, {2, 0, 1}});
  CHECK(result.unscreened_ranking ==
        IdRows{{0, 2, 3, 1}, {1, 2, 3, 0}, {2, 0, 1, 3}});
}

TEST_CASE("screened-out targets count as misses") {
  SmallCase c;
  // q0 now asks for label 1, so its target g0 never reaches the reranker
  c.keywords[0] = {1};
  auto result = run(c.task, c.index, c.keywords, c.reranker, untimed());
  CHECK(result.report.r_at.at(1) == near(200.0 / 3.0));
  CHECK(result.report.gt_recall == near(200.0 / 3.0));
  // even a k covering the whole gallery cannot reach the lost target
  RunOptions wide = untimed();
  wide.ks = {4};
  CHECK(run(c.task, c.index, c.keywords, c.reranker, wide)
            .report.r_at.at(4) == near(200.0 / 3.0));
}

TEST_CASE("empty keyword sets follow the fallback policy") {
  SmallCase c;
  c.keywords[1] = {};

  auto full = run(c.task, c.index, c.keywords, c.reranker, untimed());
  CHECK(full.report.fallback_count == 1);
  CHECK(full.report.gt_recall == 100.0);
  CHECK(full.screened_ranking[1].size() == 4);

  RunOptions drop = untimed();
  drop.fallback = Fallback::Empty;
  auto empty = run(c.task, c.index, c.keywords, c.reranker, drop);
  CHECK(empty.report.fallback_count == 1);
  CHECK(empty.report.gt_recall == near(200.0 / 3.0));
  CHECK(empty.screened_ranking[1].empty());
}

TEST_CASE("runs validate their inputs") {
  SmallCase c;
  expect_error(
      [&] { run(task_of({{0}}, 4), c.index, c.keywords, c.reranker, untimed()); },
      ErrorKind::DimensionMismatch);  // keywords do not align

  expect_error(
      [&] {
        run(task_of({{0}, {1}, {2}}, 5), c.index, c.keywords, c.reranker,
            untimed());
      },
      ErrorKind::DimensionMismatch);  // index size disagrees

  RunOptions bad = untimed();
  bad.ks = {};
  expect_error([&] { run(c.task, c.index, c.keywords, c.reranker, bad); },
               ErrorKind::InvalidConfig);
  bad.ks = {0};
  expect_error([&] { run(c.task, c.index, c.keywords, c.reranker, bad); },
               ErrorKind::InvalidConfig);

  expect_error(
      [&] {
        run(task_of({{0}, {}, {2}}, 4), c.index, c.keywords, c.reranker,
            untimed());
      },
      ErrorKind::InvalidConfig);  // empty target set
  expect_error(
      [&] {
        run(task_of({{0}, {1}, {9}}, 4), c.index, c.keywords, c.reranker,
            untimed());
      },
      ErrorKind::InvalidConfig);  // target outside the gallery
  expect_error(
      [&] {
        run(task_of({{0}, {1, 1}, {2}}, 4), c.index, c.keywords, c.reranker,
            untimed());
      },
      ErrorKind::InvalidConfig);  // duplicate targets
}

TEST_CASE("timing runs fill the wall-time block") {
  SmallCase c;
  RunOptions timed = untimed();
  timed.timing_repeats = 3;
  auto result = run(c.task, c.index, c.keywords, c.reranker, timed);
  const WallTimes& w = result.report.wall_times;
  CHECK(w.screen_s > 0.0);
  CHECK(w.rerank_s > 0.0);
  CHECK(w.total_s == w.screen_s + w.rerank_s);
  CHECK(w.unscreened_baseline_s > 0.0);
  CHECK(result.report.speedup > 0.0);

  // metrics are independent of the timing pass
  auto untimed_result = run(c.task, c.index, c.keywords, c.reranker, untimed());
  CHECK(result.report.r_at == untimed_result.report.r_at);
  CHECK(result.report.gt_recall == untimed_result.report.gt_recall);
  CHECK(result.report.screening_rate == untimed_result.report.screening_rate);
}

TEST_CASE("standalone metrics match their definitions") {
  IdRows rankings = {{2, 0, 1}, {1}};
  IdRows targets = {{0}, {3}};
  CHECK(rank_at_k(rankings, targets, 1) == 0.0);
  CHECK(rank_at_k(rankings, targets, 2) == 50.0);
  CHECK(rank_at_k(rankings, targets, 3) == 50.0);
  expect_error([&] { rank_at_k(rankings, targets, 0); },
               ErrorKind::InvalidConfig);
  expect_error([&] { rank_at_k({}, {}, 1); }, ErrorKind::InvalidConfig);
  expect_error([&] { rank_at_k(rankings, IdRows{{0}}, 1); },
               ErrorKind::DimensionMismatch);

  IdRows retained = {{0, 2}, {1}};
  CHECK(recall_of_ground_truth(retained, IdRows{{0, 1}, {1}}) ==
        near(200.0 / 3.0));
  expect_error(
      [&] { recall_of_ground_truth(retained, IdRows{{}, {}}); },
      ErrorKind::InvalidConfig);
  expect_error(
      [&] { recall_of_ground_truth(retained, IdRows{{0}}); },
      ErrorKind::DimensionMismatch);
}

TEST_CASE("rank preservation flags demotions only") {
  // surviving target keeps its relative spot
  auto ok = rank_preservation_check(IdRows{{0, 2}}, IdRows{{2, 0, 1}},
                                    IdRows{{0, 1}});
  CHECK(ok.pairs_checked == 1);  // target 1 was screened out, skipped
  CHECK(ok.violations == 0);

  // screened list demotes the target: violation
  auto demoted = rank_preservation_check(IdRows{{2, 0}}, IdRows{{0, 2}},
                                         IdRows{{0}});
  CHECK(demoted.pairs_checked == 1);
  CHECK(demoted.violations == 1);

  // present after screening but absent from the baseline: violation
  auto absent = rank_preservation_check(IdRows{{0}}, IdRows{{1}},
                                        IdRows{{0}});
  CHECK(absent.violations == 1);

  expect_error(
      [&] { rank_preservation_check(IdRows{{0}}, IdRows{}, IdRows{{0}}); },
      ErrorKind::DimensionMismatch);
}

TEST_CASE("screening never demotes a surviving target") {
  std::mt19937 rng(43);
  std::uniform_int_distribution<std::size_t> gallery_size(2, 30);
  std::uniform_int_distribution<std::size_t> query_count(1, 8);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  std::bernoulli_distribution has_label(0.3);
  const std::size_t label_count = 6, dim = 4;

  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = gallery_size(rng), m = query_count(rng);
    Rows gallery(n, std::vector<double>(dim));
    Rows queries(m, std::vector<double>(dim));
    for (auto& row : gallery)
      for (double& x : row) x = coord(rng);
    for (auto& row : queries)
      for (double& x : row) x = coord(rng);

    std::vector<std::vector<LabelId>> gallery_labels(n), keywords(m);
    for (auto& labels : gallery_labels)
      for (LabelId l = 0; l < label_count; ++l)
        if (has_label(rng)) labels.push_back(l);
    for (auto& labels : keywords)
      for (LabelId l = 0; l < label_count; ++l)
        if (has_label(rng)) labels.push_back(l);

    IdRows truth(m);
    std::uniform_int_distribution<GalleryId> pick(
        0, static_cast<GalleryId>(n - 1));
    for (auto& targets : truth) {
      targets = {pick(rng)};
      GalleryId second = pick(rng);
      if (second != targets[0]) {
        targets.push_back(second);
        std::sort(targets.begin(), targets.end());
      }
    }

    ForwardIndex forward;
    forward.entries = gallery_labels;
    auto index = InvertedIndex::build(forward, label_count, 0);
    InnerProductReranker reranker(queries, gallery);
    auto task = task_of(truth, static_cast<GalleryId>(n));

    RunOptions options = untimed();
    options.fallback =
        trial % 2 ? Fallback::FullGallery : Fallback::Empty;
    auto result = run(task, index, keywords, reranker, options);

    auto preserved = rank_preservation_check(
        result.screened_ranking, result.unscreened_ranking, truth);
    CHECK(preserved.violations == 0);

    // the reported R@k and recall agree with the kept rank lists
    for (unsigned k : options.ks)
      CHECK(result.report.r_at.at(k) ==
            near(rank_at_k(result.screened_ranking, truth, k)));
    IdRows sorted_retained = result.screened_ranking;
    for (auto& row : sorted_retained) std::sort(row.begin(), row.end());
    CHECK(result.report.gt_recall ==
          near(recall_of_ground_truth(sorted_retained, truth)));
  }
}

TEST_CASE("the parameter sweep grows recall along both axes") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> coord(0.0, 1.0);
  std::uniform_int_distribution<int> eighth(0, 8);
  const std::size_t images = 4, texts = 8, labels = 5, dim = 3;

  SweepInputs inputs;
  inputs.label_count = labels;
  inputs.vocab_hash = 123;
  auto fill = [&](Rows& probs, Rows& vectors, std::size_t n) {
    probs.assign(n, std::vector<double>(labels));
    vectors.assign(n, std::vector<double>(dim));
    for (auto& row : probs)
      for (double& p : row) p = eighth(rng) / 8.0;  // ties on purpose
    for (auto& row : vectors)
      for (double& x : row) x = coord(rng);
  };
  fill(inputs.image_probs, inputs.image_vectors, images);
  fill(inputs.text_probs, inputs.text_vectors, texts);

  IdRows image_targets(images), text_targets(texts);
  for (GalleryId i = 0; i < images; ++i) {
    image_targets[i] = {2 * i, 2 * i + 1};
    text_targets[2 * i] = {i};
    text_targets[2 * i + 1] = {i};
  }
  inputs.image_to_text = task_of(image_targets, texts);
  inputs.text_to_image = task_of(text_targets, images);

  std::vector<std::uint32_t> r_image = {1, 2, 3, 5};
  std::vector<std::uint32_t> r_text = {1, 2, 4};
  RunOptions options;
  options.ks = {5};  // the grid still reports R@1
  options.timing_repeats = 0;
  // a full-gallery fallback would hand small grids a free perfect
  // recall, hiding the monotone growth this case is about
  options.fallback = Fallback::Empty;

  auto rows = sweep(inputs, r_image, r_text, options);
  REQUIRE(rows.size() == r_image.size() * r_text.size());

  // rows come out r_image-major in the given order
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].r_image == r_image[i / r_text.size()]);
    CHECK(rows[i].r_text == r_text[i % r_text.size()]);
  }

  auto at = [&](std::size_t i, std::size_t t) {
    return rows[i * r_text.size() + t];
  };
  for (std::size_t i = 0; i < r_image.size(); ++i)
    for (std::size_t t = 0; t + 1 < r_text.size(); ++t)
      CHECK(at(i, t).recall <= at(i, t + 1).recall + 1e-9);
  for (std::size_t t = 0; t < r_text.size(); ++t)
    for (std::size_t i = 0; i + 1 < r_image.size(); ++i)
      CHECK(at(i, t).recall <= at(i + 1, t).recall + 1e-9);

  for (const auto& row : rows) {
    CHECK(row.r1_image_to_text >= 0.0);
    CHECK(row.r1_image_to_text <= 100.0);
    CHECK(row.r1_text_to_image >= 0.0);
    CHECK(row.r1_text_to_image <= 100.0);
    CHECK(row.speedup == 0.0);  // timing disabled
  }

  expect_error([&] { sweep(inputs, {}, r_text, options); },
               ErrorKind::InvalidConfig);
  std::vector<std::uint32_t> zero = {0};
  expect_error([&] { sweep(inputs, r_image, zero, options); },
               ErrorKind::InvalidConfig);
  auto broken = inputs;
  broken.label_count = 0;
  expect_error([&] { sweep(broken, r_image, r_text, options); },
               ErrorKind::EmptyVocabulary);
  broken = inputs;
  broken.text_probs.pop_back();
  expect_error([&] { sweep(broken, r_image, r_text, options); },
               ErrorKind::DimensionMismatch);
}

TEST_CASE("sweep rows print as a fixed-width csv") {
  TempDir dir;
  SweepRow a{5, 3, 90.0, 85.5, 99.25, 2.5};
  SweepRow b{10, 3, 92.0, 86.0, 100.0, 1.75};
  std::string path = dir.file("sweep.csv");
  write_sweep_csv(std::vector<SweepRow>{a, b}, path);
  CHECK(slurp(path) ==
        "R_I,R_T,R@1_TR,R@1_IR,Recall,Speedup\n"
        "5,3,90.000000,85.500000,99.250000,2.500000\n"
        "10,3,92.000000,86.000000,100.000000,1.750000\n");
}
