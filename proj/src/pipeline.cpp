#include "prescreen/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "prescreen/classifier.hpp"
#include "prescreen/error.hpp"
#include "prescreen/jsonl.hpp"

namespace prescreen {

const char* to_string(KeywordSource source) {
  switch (source) {
    case KeywordSource::Predicted:   return "predicted";
    case KeywordSource::Extracted:   return "extracted";
    case KeywordSource::Merged:      return "merged";
    case KeywordSource::GroundTruth: return "ground_truth";
  }
  return "unknown";
}

std::optional<KeywordSource> keyword_source_from_string(std::string_view s) {
  if (s == "predicted") return KeywordSource::Predicted;
  if (s == "extracted") return KeywordSource::Extracted;
  if (s == "merged") return KeywordSource::Merged;
  if (s == "ground_truth") return KeywordSource::GroundTruth;
  return std::nullopt;
}

InnerProductReranker::InnerProductReranker(
    std::span<const std::vector<double>> query_vectors,
    std::span<const std::vector<double>> gallery_vectors) {
  query_rows_ = query_vectors.size();
  gallery_rows_ = gallery_vectors.size();
  dim_ = query_vectors.empty() ? 0 : query_vectors.front().size();
  if (dim_ == 0)
    fail(ErrorKind::DimensionMismatch, "reranker needs non-empty queries");

  auto flatten = [this](std::span<const std::vector<double>> rows,
                        std::vector<double>& out, const char* side) {
    out.reserve(rows.size() * dim_);
    for (const auto& row : rows) {
      if (row.size() != dim_)
        fail(ErrorKind::DimensionMismatch,
             std::string(side) + " vectors disagree on dimension");
      for (double v : row) {
        if (!std::isfinite(v))
          fail(ErrorKind::DomainError,
               std::string(side) + " vector holds a non-finite value");
        out.push_back(v);
      }
    }
  };
  flatten(query_vectors, queries_, "query");
  flatten(gallery_vectors, gallery_, "gallery");
}

void InnerProductReranker::score(std::size_t q,
                                 std::span<const GalleryId> candidates,
                                 std::span<double> scores) const {
  if (q >= query_rows_)
    fail(ErrorKind::MissingVector, "query " + std::to_string(q) + " has no vector");
  if (scores.size() != candidates.size())
    fail(ErrorKind::DimensionMismatch, "score buffer does not fit candidates");
  const double* qv = queries_.data() + q * dim_;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i] >= gallery_rows_)
      fail(ErrorKind::MissingVector,
           "gallery " + std::to_string(candidates[i]) + " has no vector");
    const double* gv = gallery_.data() + candidates[i] * dim_;
    double dot = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) dot += qv[j] * gv[j];
    scores[i] = dot;
  }
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void validate_task(const RetrievalTask& task) {
  if (task.gallery_count == 0)
    fail(ErrorKind::InvalidConfig, "task has an empty gallery");
  for (std::size_t q = 0; q < task.ground_truth.size(); ++q) {
    const auto& targets = task.ground_truth[q];
    if (targets.empty())
      fail(ErrorKind::InvalidConfig,
           "query " + std::to_string(q) + " has no targets");
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (targets[i] >= task.gallery_count)
        fail(ErrorKind::InvalidConfig,
             "query " + std::to_string(q) + ": target out of gallery range");
      if (i > 0 && targets[i] <= targets[i - 1])
        fail(ErrorKind::InvalidConfig,
             "query " + std::to_string(q) + ": targets must be sorted unique");
    }
  }
}

// 1-based rank of candidate `target` (at position ti) among the scored
// candidates: better score wins, ties go to the lower gallery id.
std::size_t rank_of(std::span<const GalleryId> candidates,
                    std::span<const double> scores, std::size_t ti) {
  double st = scores[ti];
  GalleryId t = candidates[ti];
  std::size_t ahead = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (scores[i] > st || (scores[i] == st && candidates[i] < t)) ++ahead;
  return ahead + 1;
}

std::vector<GalleryId> order_by_score(std::span<const GalleryId> candidates,
                                      std::span<const double> scores) {
  std::vector<std::size_t> idx(candidates.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return candidates[a] < candidates[b];
  });
  std::vector<GalleryId> out(candidates.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = candidates[idx[i]];
  return out;
}

}  // namespace

RunResult run(const RetrievalTask& task, const InvertedIndex& index,
              std::span<const std::vector<LabelId>> query_keywords,
              const Reranker& reranker, const RunOptions& options) {
  validate_task(task);
  if (index.gallery_count() != task.gallery_count)
    fail(ErrorKind::DimensionMismatch, "index gallery size does not match task");
  if (reranker.gallery_count() != task.gallery_count)
    fail(ErrorKind::DimensionMismatch, "reranker gallery size does not match task");
  if (query_keywords.size() != task.query_count())
    fail(ErrorKind::DimensionMismatch, "keywords do not align with queries");
  if (options.ks.empty())
    fail(ErrorKind::InvalidConfig, "need at least one k for R@k");

  std::vector<unsigned> ks = options.ks;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.front() == 0) fail(ErrorKind::InvalidConfig, "k must be at least 1");

  std::size_t query_count = task.query_count();
  GalleryId gallery_count = task.gallery_count;

  RunResult result;
  EvalReport& report = result.report;
  report.query_count = query_count;
  for (unsigned k : ks) report.r_at[k] = 0.0;

  std::vector<GalleryId> everything(gallery_count);
  std::iota(everything.begin(), everything.end(), 0u);
  std::vector<double> scores(gallery_count);

  std::uint64_t total_pairs = 0, retained_pairs = 0;
  double screened_away = 0.0;
  std::vector<std::uint64_t> hits(ks.size(), 0);

  for (std::size_t q = 0; q < query_count; ++q) {
    ScreenResult sr = screen(index, query_keywords[q], options.fallback);
    report.fallback_count += sr.fallback_used ? 1 : 0;
    const auto& retained = sr.retained;
    screened_away +=
        1.0 - static_cast<double>(retained.size()) / gallery_count;

    std::span<double> retained_scores(scores.data(), retained.size());
    reranker.score(q, retained, retained_scores);

    std::size_t best_rank = 0;  // 0: no target survived
    for (GalleryId t : task.ground_truth[q]) {
      ++total_pairs;
      auto it = std::lower_bound(retained.begin(), retained.end(), t);
      if (it == retained.end() || *it != t) continue;  // screened out
      ++retained_pairs;
      std::size_t rank = rank_of(
          retained, retained_scores,
          static_cast<std::size_t>(it - retained.begin()));
      if (best_rank == 0 || rank < best_rank) best_rank = rank;
    }
    if (best_rank > 0)
      for (std::size_t i = 0; i < ks.size(); ++i)
        if (best_rank <= ks[i]) ++hits[i];

    if (options.keep_rank_lists) {
      result.screened_ranking.push_back(
          order_by_score(retained, retained_scores));
      std::span<double> all_scores(scores.data(), gallery_count);
      reranker.score(q, everything, all_scores);
      result.unscreened_ranking.push_back(
          order_by_score(everything, all_scores));
    }
  }

  if (query_count > 0) {
    for (std::size_t i = 0; i < ks.size(); ++i) {
      double pct = 100.0 * static_cast<double>(hits[i]) /
                   static_cast<double>(query_count);
      report.r_at[ks[i]] = pct;
      report.r_sum += pct;
    }
    report.gt_recall = 100.0 * static_cast<double>(retained_pairs) /
                       static_cast<double>(total_pairs);
    report.screening_rate = 100.0 * screened_away /
                            static_cast<double>(query_count);
  }

  if (options.timing_repeats > 0 && query_count > 0) {
    std::vector<double> screen_times, rerank_times, unscreened_times;
    for (unsigned rep = 0; rep < options.timing_repeats; ++rep) {
      double screen_acc = 0.0, rerank_acc = 0.0;
      for (std::size_t q = 0; q < query_count; ++q) {
        auto t0 = Clock::now();
        ScreenResult sr = screen(index, query_keywords[q], options.fallback);
        screen_acc += seconds_since(t0);

        std::span<double> out(scores.data(), sr.retained.size());
        auto t1 = Clock::now();
        reranker.score(q, sr.retained, out);
        rerank_acc += seconds_since(t1);
      }
      screen_times.push_back(screen_acc);
      rerank_times.push_back(rerank_acc);

      auto t2 = Clock::now();
      for (std::size_t q = 0; q < query_count; ++q)
        reranker.score(q, everything,
                       std::span<double>(scores.data(), gallery_count));
      unscreened_times.push_back(seconds_since(t2));
    }
    WallTimes& w = report.wall_times;
    w.screen_s = median(screen_times);
    w.rerank_s = median(rerank_times);
    w.total_s = w.screen_s + w.rerank_s;
    w.unscreened_baseline_s = median(unscreened_times);
    report.speedup = w.unscreened_baseline_s / std::max(w.total_s, 1e-12);
  }
  return result;
}

double recall_of_ground_truth(
    std::span<const std::vector<GalleryId>> retained,
    std::span<const std::vector<GalleryId>> targets) {
  if (retained.size() != targets.size())
    fail(ErrorKind::DimensionMismatch, "retained sets do not align with targets");
  std::uint64_t total = 0, kept = 0;
  for (std::size_t q = 0; q < targets.size(); ++q) {
    for (GalleryId t : targets[q]) {
      ++total;
      kept += std::binary_search(retained[q].begin(), retained[q].end(), t);
    }
  }
  if (total == 0) fail(ErrorKind::InvalidConfig, "no ground-truth pairs");
  return 100.0 * static_cast<double>(kept) / static_cast<double>(total);
}

double rank_at_k(std::span<const std::vector<GalleryId>> rankings,
                 std::span<const std::vector<GalleryId>> targets, unsigned k) {
  if (rankings.size() != targets.size())
    fail(ErrorKind::DimensionMismatch, "rankings do not align with targets");
  if (rankings.empty()) fail(ErrorKind::InvalidConfig, "no queries");
  if (k == 0) fail(ErrorKind::InvalidConfig, "k must be at least 1");
  std::uint64_t hit = 0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const auto& ranking = rankings[q];
    std::size_t top = std::min<std::size_t>(k, ranking.size());
    for (std::size_t i = 0; i < top; ++i) {
      if (std::binary_search(targets[q].begin(), targets[q].end(),
                             ranking[i])) {
        ++hit;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(hit) /
         static_cast<double>(rankings.size());
}

PreservationReport rank_preservation_check(
    std::span<const std::vector<GalleryId>> screened_ranking,
    std::span<const std::vector<GalleryId>> unscreened_ranking,
    std::span<const std::vector<GalleryId>> targets) {
  if (screened_ranking.size() != targets.size() ||
      unscreened_ranking.size() != targets.size())
    fail(ErrorKind::DimensionMismatch, "rankings do not align with targets");

  auto position = [](const std::vector<GalleryId>& ranking, GalleryId id)
      -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < ranking.size(); ++i)
      if (ranking[i] == id) return i;
    return std::nullopt;
  };

  PreservationReport report;
  for (std::size_t q = 0; q < targets.size(); ++q) {
    for (GalleryId t : targets[q]) {
      auto pos_screened = position(screened_ranking[q], t);
      if (!pos_screened) continue;  // screened out, nothing to preserve
      ++report.pairs_checked;
      auto pos_unscreened = position(unscreened_ranking[q], t);
      if (!pos_unscreened || *pos_screened > *pos_unscreened)
        ++report.violations;
    }
  }
  return report;
}

namespace {

std::vector<std::vector<LabelId>> keyword_sets(
    std::span<const std::vector<double>> probs, std::uint32_t r) {
  std::vector<std::vector<LabelId>> out;
  out.reserve(probs.size());
  for (const auto& p : probs) {
    auto ids = top_r_labels(p, r);
    std::sort(ids.begin(), ids.end());
    out.push_back(std::move(ids));
  }
  return out;
}

ForwardIndex to_forward(const std::vector<std::vector<LabelId>>& keywords) {
  ForwardIndex f;
  f.entries = keywords;
  return f;
}

}  // namespace

std::vector<SweepRow> sweep(const SweepInputs& inputs,
                            std::span<const std::uint32_t> r_image_values,
                            std::span<const std::uint32_t> r_text_values,
                            const RunOptions& options) {
  if (inputs.label_count == 0)
    fail(ErrorKind::EmptyVocabulary, "sweep needs a label space");
  if (r_image_values.empty() || r_text_values.empty())
    fail(ErrorKind::InvalidConfig, "sweep needs at least one value per axis");
  auto check_probs = [&](std::span<const std::vector<double>> probs,
                         const char* side) {
    for (const auto& p : probs)
      if (p.size() != inputs.label_count)
        fail(ErrorKind::DimensionMismatch,
             std::string(side) + " probabilities do not match label count");
  };
  check_probs(inputs.image_probs, "image");
  check_probs(inputs.text_probs, "text");
  if (inputs.image_to_text.query_count() != inputs.image_probs.size() ||
      inputs.text_to_image.query_count() != inputs.text_probs.size() ||
      inputs.image_to_text.gallery_count != inputs.text_probs.size() ||
      inputs.text_to_image.gallery_count != inputs.image_probs.size())
    fail(ErrorKind::DimensionMismatch, "sweep tasks do not match sample counts");

  InnerProductReranker image_to_text_rr(inputs.image_vectors,
                                        inputs.text_vectors);
  InnerProductReranker text_to_image_rr(inputs.text_vectors,
                                        inputs.image_vectors);

  // Gallery-side artifacts only depend on one radius; cache per value.
  std::map<std::uint32_t, std::pair<std::vector<std::vector<LabelId>>,
                                    InvertedIndex>> text_side, image_side;
  for (std::uint32_t r_t : r_text_values) {
    if (r_t == 0) fail(ErrorKind::InvalidConfig, "r_text must be at least 1");
    if (text_side.count(r_t)) continue;
    auto kw = keyword_sets(inputs.text_probs, r_t);
    auto idx = InvertedIndex::build(to_forward(kw), inputs.label_count,
                                    inputs.vocab_hash);
    text_side.emplace(r_t, std::make_pair(std::move(kw), std::move(idx)));
  }
  for (std::uint32_t r_i : r_image_values) {
    if (r_i == 0) fail(ErrorKind::InvalidConfig, "r_image must be at least 1");
    if (image_side.count(r_i)) continue;
    auto kw = keyword_sets(inputs.image_probs, r_i);
    auto idx = InvertedIndex::build(to_forward(kw), inputs.label_count,
                                    inputs.vocab_hash);
    image_side.emplace(r_i, std::make_pair(std::move(kw), std::move(idx)));
  }

  RunOptions opts = options;  // the grid reports R@1, so make sure it exists
  if (std::find(opts.ks.begin(), opts.ks.end(), 1u) == opts.ks.end())
    opts.ks.push_back(1);

  std::vector<SweepRow> rows;
  for (std::uint32_t r_i : r_image_values) {
    const auto& [image_kw, image_idx] = image_side.at(r_i);
    for (std::uint32_t r_t : r_text_values) {
      const auto& [text_kw, text_idx] = text_side.at(r_t);

      RunResult tr = run(inputs.image_to_text, text_idx, image_kw,
                         image_to_text_rr, opts);
      RunResult ir = run(inputs.text_to_image, image_idx, text_kw,
                         text_to_image_rr, opts);

      SweepRow row;
      row.r_image = r_i;
      row.r_text = r_t;
      row.r1_image_to_text = tr.report.r_at.at(1);
      row.r1_text_to_image = ir.report.r_at.at(1);
      row.recall = 0.5 * (tr.report.gt_recall + ir.report.gt_recall);
      row.speedup = 0.5 * (tr.report.speedup + ir.report.speedup);
      rows.push_back(row);
    }
  }
  return rows;
}

void write_sweep_csv(std::span<const SweepRow> rows, const std::string& path) {
  auto out = jsonl::open_output(path);
  out << "R_I,R_T,R@1_TR,R@1_IR,Recall,Speedup\n";
  char line[160];
  for (const SweepRow& row : rows) {
    std::snprintf(line, sizeof(line), "%u,%u,%.6f,%.6f,%.6f,%.6f\n",
                  row.r_image, row.r_text, row.r1_image_to_text,
                  row.r1_text_to_image, row.recall, row.speedup);
    out << line;
  }
}

}  // namespace prescreen
