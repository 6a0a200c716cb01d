#ifndef PRESCREEN_CLASSIFIER_HPP
#define PRESCREEN_CLASSIFIER_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prescreen/corpus.hpp"

namespace prescreen {

struct FeatureRecord {
  std::string sample_id;
  Modality modality = Modality::Image;
  std::vector<double> vector;
};

// Asymmetric loss shape: alpha_plus focuses the positive term,
// alpha_minus the negative term, and probabilities at or below delta
// contribute nothing for negatives (value and gradient both zero).
struct AslParams {
  double alpha_plus = 0.0;
  double alpha_minus = 3.0;
  double delta = 0.05;
};

struct LossValue {
  double loss = 0.0;
  std::vector<double> grad;  // dL/dp per label
};

// positives: sorted unique label ids with y=1; everything else is y=0.
// Probabilities are clamped to [1e-7, 1-1e-7] before the logs; a NaN or
// infinity before clamping throws DomainError.
LossValue asl_loss(std::span<const double> probs,
                   std::span<const std::uint32_t> positives,
                   const AslParams& params);

// Plain binary cross-entropy over the same layout, written out directly
// rather than through asl_loss so the two can cross-check each other.
LossValue bce_loss(std::span<const double> probs,
                   std::span<const std::uint32_t> positives);

struct ClassifierModel {
  Modality modality = Modality::Image;
  std::size_t label_count = 0;
  std::size_t dim = 0;
  std::vector<double> weights;  // label_count x dim, row-major
  std::vector<double> bias;     // label_count
  std::uint64_t vocab_hash = 0;

  double& weight(std::size_t label, std::size_t j) {
    return weights[label * dim + j];
  }
  double weight(std::size_t label, std::size_t j) const {
    return weights[label * dim + j];
  }
};

// Per-label sigmoid(Wx + b).
std::vector<double> forward(const ClassifierModel& model,
                            std::span<const double> x);

enum class LossKind { Asl, Bce };

struct TrainConfig {
  LossKind loss = LossKind::Asl;
  AslParams asl;
  double learning_rate = 0.1;
  std::uint32_t epochs = 10;
  std::uint32_t batch_size = 128;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
};

struct TrainResult {
  ClassifierModel model;
  std::vector<double> epoch_losses;  // mean per-sample loss per epoch
};

// Mini-batch gradient descent, single-threaded and fully determined by
// the seed: weights start uniform in ±1/sqrt(dim), biases at zero, and
// the sample order is reshuffled every epoch with the same engine.
TrainResult train(std::span<const FeatureRecord> features,
                  std::span<const AnnotationSet> annotations,
                  const TrainConfig& config, Modality modality,
                  std::size_t label_count, std::uint64_t vocab_hash);

struct KeywordPrediction {
  std::string sample_id;
  std::vector<double> probabilities;
  std::vector<std::uint32_t> top_r;  // descending probability
};

// Highest-probability label ids, ties broken by ascending id.  Returns
// min(r, label_count) ids.
std::vector<std::uint32_t> top_r_labels(std::span<const double> probs,
                                        std::uint32_t r);

KeywordPrediction predict_topr(const ClassifierModel& model,
                               const FeatureRecord& record, std::uint32_t r);

// Macro mAP in [0,1]: per-label average precision over samples ranked by
// that label's probability (ties by ascending sample index), averaged
// over labels that have at least one positive.  Throws NoPositives when
// no label does.
double mean_average_precision(
    std::span<const std::vector<double>> probabilities,
    std::span<const std::vector<std::uint32_t>> positives);

// Feature files: line-delimited JSON or the flat binary layout; load
// sniffs the magic.  Records must agree on dimension and modality stays
// per-record.
std::vector<FeatureRecord> load_features(const std::string& path);
void save_features_json(std::span<const FeatureRecord> records,
                        const std::string& path);
void save_features_binary(std::span<const FeatureRecord> records,
                          const std::string& path);

void save_model(const ClassifierModel& model, const std::string& path);
ClassifierModel load_model(const std::string& path);

}  // namespace prescreen

#endif  // PRESCREEN_CLASSIFIER_HPP
