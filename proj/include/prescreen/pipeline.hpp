#ifndef PRESCREEN_PIPELINE_HPP
#define PRESCREEN_PIPELINE_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prescreen/index.hpp"

namespace prescreen {

// Where query/gallery keywords come from.  Images only support
// predicted and ground_truth; texts support all four.
enum class KeywordSource { Predicted, Extracted, Merged, GroundTruth };

const char* to_string(KeywordSource source);
std::optional<KeywordSource> keyword_source_from_string(std::string_view s);

// One retrieval direction.  Query q is an index into the caller's
// aligned keyword/feature arrays; targets are dense gallery ids, sorted
// unique and non-empty per query.
struct RetrievalTask {
  std::vector<std::vector<GalleryId>> ground_truth;
  GalleryId gallery_count = 0;

  std::size_t query_count() const { return ground_truth.size(); }
};

class Reranker {
 public:
  virtual ~Reranker() = default;
  virtual GalleryId gallery_count() const = 0;
  // scores[i] = similarity of query q to candidates[i]; scores.size()
  // must equal candidates.size().
  virtual void score(std::size_t q, std::span<const GalleryId> candidates,
                     std::span<double> scores) const = 0;
};

// Dense inner product over flattened row-major copies of the vectors.
class InnerProductReranker final : public Reranker {
 public:
  InnerProductReranker(std::span<const std::vector<double>> query_vectors,
                       std::span<const std::vector<double>> gallery_vectors);

  GalleryId gallery_count() const override {
    return static_cast<GalleryId>(gallery_rows_);
  }
  void score(std::size_t q, std::span<const GalleryId> candidates,
             std::span<double> scores) const override;

 private:
  std::size_t dim_ = 0;
  std::size_t query_rows_ = 0;
  std::size_t gallery_rows_ = 0;
  std::vector<double> queries_;
  std::vector<double> gallery_;
};

struct WallTimes {
  double screen_s = 0.0;
  double rerank_s = 0.0;
  double total_s = 0.0;                 // screen_s + rerank_s
  double unscreened_baseline_s = 0.0;   // rerank over the full gallery
};

struct EvalReport {
  std::map<unsigned, double> r_at;  // k -> percent of queries hit
  double r_sum = 0.0;               // sum of r_at over the requested ks
  double gt_recall = 0.0;           // percent of (query,target) pairs retained
  double screening_rate = 0.0;      // mean percent of gallery screened out
  double speedup = 0.0;             // unscreened baseline / screened total
  std::uint64_t fallback_count = 0;
  std::uint64_t query_count = 0;
  WallTimes wall_times;
};

struct RunOptions {
  std::vector<unsigned> ks = {1, 5};
  Fallback fallback = Fallback::FullGallery;
  // Timed sections run this many times and the median wins; 0 skips
  // timing entirely (speedup and wall times stay 0).
  unsigned timing_repeats = 3;
  bool keep_rank_lists = false;
};

struct RunResult {
  EvalReport report;
  // Only filled under keep_rank_lists: per query, gallery ids by
  // descending score, ties by ascending id.  The screened ranking holds
  // the retained set only, the unscreened one the whole gallery.
  std::vector<std::vector<GalleryId>> screened_ranking;
  std::vector<std::vector<GalleryId>> unscreened_ranking;
};

// Full two-stage pass: screen each query's keywords through the index,
// rerank the retained set, collect metrics, then time the screened and
// unscreened pipelines separately.  query_keywords aligns with task
// queries; single-threaded throughout.
RunResult run(const RetrievalTask& task, const InvertedIndex& index,
              std::span<const std::vector<LabelId>> query_keywords,
              const Reranker& reranker, const RunOptions& options);

// Percent of (query,target) pairs whose target survived screening.
double recall_of_ground_truth(
    std::span<const std::vector<GalleryId>> retained,
    std::span<const std::vector<GalleryId>> targets);

// Percent of queries with at least one target ranked within the top k.
// A target absent from a ranking counts as a miss.
double rank_at_k(std::span<const std::vector<GalleryId>> rankings,
                 std::span<const std::vector<GalleryId>> targets, unsigned k);

struct PreservationReport {
  std::uint64_t pairs_checked = 0;
  std::uint64_t violations = 0;
};

// Screening must never move a surviving target below its unscreened
// position.  Targets that were screened out are skipped.
PreservationReport rank_preservation_check(
    std::span<const std::vector<GalleryId>> screened_ranking,
    std::span<const std::vector<GalleryId>> unscreened_ranking,
    std::span<const std::vector<GalleryId>> targets);

// Inputs for the R_I x R_T grid.  Dense sample order is shared between
// probabilities and vectors per modality; both directions use every
// sample of the query side as a query.
struct SweepInputs {
  std::vector<std::vector<double>> image_probs;
  std::vector<std::vector<double>> text_probs;
  std::vector<std::vector<double>> image_vectors;
  std::vector<std::vector<double>> text_vectors;
  RetrievalTask image_to_text;  // queries: images, gallery: texts
  RetrievalTask text_to_image;  // queries: texts, gallery: images
  std::size_t label_count = 0;
  std::uint64_t vocab_hash = 0;
};

struct SweepRow {
  std::uint32_t r_image = 0;
  std::uint32_t r_text = 0;
  double r1_image_to_text = 0.0;
  double r1_text_to_image = 0.0;
  double recall = 0.0;   // mean gt_recall over both directions
  double speedup = 0.0;  // mean speedup over both directions
};

std::vector<SweepRow> sweep(const SweepInputs& inputs,
                            std::span<const std::uint32_t> r_image_values,
                            std::span<const std::uint32_t> r_text_values,
                            const RunOptions& options);

// Header R_I,R_T,R@1_TR,R@1_IR,Recall,Speedup; TR is image-to-text.
void write_sweep_csv(std::span<const SweepRow> rows, const std::string& path);

}  // namespace prescreen

#endif  // PRESCREEN_PIPELINE_HPP
