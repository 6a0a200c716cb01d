#include "prescreen/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <unordered_map>

#include "prescreen/bytes.hpp"
#include "prescreen/error.hpp"
#include "prescreen/jsonl.hpp"

namespace prescreen {

using jsonl::json;

namespace {

constexpr double kProbEps = 1e-7;

double clamp_prob(double p, std::size_t i) {
  if (!std::isfinite(p))
    fail(ErrorKind::DomainError,
         "non-finite probability at label " + std::to_string(i));
  return std::clamp(p, kProbEps, 1.0 - kProbEps);
}

void check_positives(std::span<const std::uint32_t> positives,
                     std::size_t label_count) {
  std::uint32_t prev = 0;
  bool first = true;
  for (std::uint32_t id : positives) {
    if (id >= label_count)
      fail(ErrorKind::InvalidLabel,
           "label id " + std::to_string(id) + " out of range");
    if (!first && id <= prev)
      fail(ErrorKind::InvalidLabel, "positive ids must be sorted and unique");
    prev = id;
    first = false;
  }
}

void check_asl_params(const AslParams& p) {
  if (!(p.alpha_plus >= 0.0) || !(p.alpha_minus >= 0.0) ||
      !(p.delta >= 0.0) || !(p.delta < 1.0))
    fail(ErrorKind::DomainError,
         "need alpha_plus >= 0, alpha_minus >= 0, 0 <= delta < 1");
}

}  // namespace

LossValue asl_loss(std::span<const double> probs,
                   std::span<const std::uint32_t> positives,
                   const AslParams& params) {
  check_asl_params(params);
  check_positives(positives, probs.size());

  LossValue out;
  out.grad.assign(probs.size(), 0.0);
  std::size_t next_pos = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double p = clamp_prob(probs[i], i);
    bool positive = next_pos < positives.size() && positives[next_pos] == i;
    if (positive) ++next_pos;

    if (positive) {
      double a = params.alpha_plus;
      double w = std::pow(1.0 - p, a);
      out.loss += -w * std::log(p);
      double dw = a == 0.0 ? 0.0 : a * std::pow(1.0 - p, a - 1.0) * std::log(p);
      out.grad[i] = dw - w / p;
    } else {
      double shifted = std::max(p - params.delta, 0.0);
      if (shifted <= 0.0) continue;  // dead zone: no value, no gradient
      double b = params.alpha_minus;
      double w = std::pow(shifted, b);
      double log_neg = std::log1p(-shifted);
      out.loss += -w * log_neg;
      double dw = b == 0.0 ? 0.0 : b * std::pow(shifted, b - 1.0) * log_neg;
      out.grad[i] = -dw + w / (1.0 - shifted);
    }
  }
  return out;
}

LossValue bce_loss(std::span<const double> probs,
                   std::span<const std::uint32_t> positives) {
  check_positives(positives, probs.size());
  LossValue out;
  out.grad.assign(probs.size(), 0.0);
  std::size_t next_pos = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double p = clamp_prob(probs[i], i);
    bool positive = next_pos < positives.size() && positives[next_pos] == i;
    if (positive) {
      ++next_pos;
      out.loss += -std::log(p);
      out.grad[i] = -1.0 / p;
    } else {
      out.loss += -std::log1p(-p);
      out.grad[i] = 1.0 / (1.0 - p);
    }
  }
  return out;
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

std::vector<double> forward(const ClassifierModel& model,
                            std::span<const double> x) {
  if (x.size() != model.dim)
    fail(ErrorKind::DimensionMismatch,
         "input has " + std::to_string(x.size()) + " features, model wants " +
             std::to_string(model.dim));
  std::vector<double> probs(model.label_count);
  for (std::size_t l = 0; l < model.label_count; ++l) {
    const double* row = model.weights.data() + l * model.dim;
    double z = model.bias[l];
    for (std::size_t j = 0; j < model.dim; ++j) z += row[j] * x[j];
    probs[l] = sigmoid(z);
  }
  return probs;
}

TrainResult train(std::span<const FeatureRecord> features,
                  std::span<const AnnotationSet> annotations,
                  const TrainConfig& config, Modality modality,
                  std::size_t label_count, std::uint64_t vocab_hash) {
  if (label_count == 0)
    fail(ErrorKind::EmptyVocabulary, "cannot train with zero labels");
  if (config.batch_size == 0)
    fail(ErrorKind::InvalidConfig, "batch_size must be at least 1");
  if (!(config.learning_rate > 0.0))
    fail(ErrorKind::InvalidConfig, "learning_rate must be positive");
  if (config.loss == LossKind::Asl) check_asl_params(config.asl);

  std::unordered_map<std::string, const std::vector<std::uint32_t>*> truth;
  for (const AnnotationSet& a : annotations) {
    if (a.modality != modality) continue;
    for (std::uint32_t id : a.labels)
      if (id >= label_count)
        fail(ErrorKind::InvalidLabel, a.sample_id + ": label id " +
                                          std::to_string(id) + " out of range");
    if (!truth.emplace(a.sample_id, &a.labels).second)
      fail(ErrorKind::JoinError, "duplicate annotation for " + a.sample_id);
  }

  if (features.empty())
    fail(ErrorKind::JoinError, "no training samples");
  std::size_t dim = features.front().vector.size();
  if (dim == 0) fail(ErrorKind::DimensionMismatch, "zero-dimensional features");

  std::vector<const std::vector<std::uint32_t>*> labels(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const FeatureRecord& r = features[i];
    if (r.modality != modality)
      fail(ErrorKind::JoinError,
           r.sample_id + ": feature modality does not match training modality");
    if (r.vector.size() != dim)
      fail(ErrorKind::DimensionMismatch,
           r.sample_id + ": expected " + std::to_string(dim) + " features");
    for (double v : r.vector)
      if (!std::isfinite(v))
        fail(ErrorKind::DomainError, r.sample_id + ": non-finite feature");
    auto it = truth.find(r.sample_id);
    if (it == truth.end())
      fail(ErrorKind::JoinError, "no annotation for sample " + r.sample_id);
    labels[i] = it->second;
  }

  TrainResult result;
  ClassifierModel& model = result.model;
  model.modality = modality;
  model.label_count = label_count;
  model.dim = dim;
  model.vocab_hash = vocab_hash;
  model.bias.assign(label_count, 0.0);
  model.weights.resize(label_count * dim);

  std::mt19937 rng(static_cast<std::mt19937::result_type>(config.seed));
  double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (double& w : model.weights) w = uniform(rng);

  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<double> grad_w(label_count * dim);
  std::vector<double> grad_b(label_count);

  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;

    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      std::size_t stop = std::min(order.size(),
                                  start + static_cast<std::size_t>(config.batch_size));
      std::fill(grad_w.begin(), grad_w.end(), 0.0);
      std::fill(grad_b.begin(), grad_b.end(), 0.0);

      for (std::size_t k = start; k < stop; ++k) {
        const FeatureRecord& r = features[order[k]];
        std::vector<double> probs = forward(model, r.vector);
        for (double p : probs)
          if (!std::isfinite(p))
            fail(ErrorKind::DivergenceError,
                 "probabilities diverged at epoch " + std::to_string(epoch));
        LossValue lv = config.loss == LossKind::Asl
                           ? asl_loss(probs, *labels[order[k]], config.asl)
                           : bce_loss(probs, *labels[order[k]]);
        epoch_loss += lv.loss;
        for (std::size_t l = 0; l < label_count; ++l) {
          double dz = lv.grad[l] * probs[l] * (1.0 - probs[l]);
          if (dz == 0.0) continue;
          double* gw = grad_w.data() + l * dim;
          const double* x = r.vector.data();
          for (std::size_t j = 0; j < dim; ++j) gw[j] += dz * x[j];
          grad_b[l] += dz;
        }
      }

      double scale = config.learning_rate / static_cast<double>(stop - start);
      for (std::size_t i = 0; i < model.weights.size(); ++i) {
        model.weights[i] -= scale * grad_w[i];
        if (config.weight_decay > 0.0)
          model.weights[i] -=
              config.learning_rate * config.weight_decay * model.weights[i];
      }
      for (std::size_t l = 0; l < label_count; ++l)
        model.bias[l] -= scale * grad_b[l];
    }

    epoch_loss /= static_cast<double>(features.size());
    if (!std::isfinite(epoch_loss))
      fail(ErrorKind::DivergenceError,
           "loss diverged at epoch " + std::to_string(epoch));
    result.epoch_losses.push_back(epoch_loss);
  }
  return result;
}

std::vector<std::uint32_t> top_r_labels(std::span<const double> probs,
                                        std::uint32_t r) {
  std::vector<std::uint32_t> ids(probs.size());
  std::iota(ids.begin(), ids.end(), 0u);
  std::size_t keep = std::min<std::size_t>(r, ids.size());
  auto better = [&probs](std::uint32_t a, std::uint32_t b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return a < b;
  };
  std::partial_sort(ids.begin(), ids.begin() + keep, ids.end(), better);
  ids.resize(keep);
  return ids;
}

KeywordPrediction predict_topr(const ClassifierModel& model,
                               const FeatureRecord& record, std::uint32_t r) {
  if (record.modality != model.modality)
    fail(ErrorKind::JoinError,
         record.sample_id + ": feature modality does not match model");
  if (r == 0) fail(ErrorKind::InvalidConfig, "r must be at least 1");
  KeywordPrediction out;
  out.sample_id = record.sample_id;
  out.probabilities = forward(model, record.vector);
  out.top_r = top_r_labels(out.probabilities, r);
  return out;
}

double mean_average_precision(
    std::span<const std::vector<double>> probabilities,
    std::span<const std::vector<std::uint32_t>> positives) {
  if (probabilities.size() != positives.size())
    fail(ErrorKind::DimensionMismatch,
         "probabilities and positives must align");
  if (probabilities.empty()) fail(ErrorKind::NoPositives, "no samples");
  std::size_t label_count = probabilities.front().size();
  for (const auto& p : probabilities)
    if (p.size() != label_count)
      fail(ErrorKind::DimensionMismatch, "ragged probability rows");
  for (const auto& pos : positives)
    check_positives(pos, label_count);

  std::size_t n = probabilities.size();
  std::vector<char> relevant(n);
  std::vector<std::size_t> order(n);

  double ap_sum = 0.0;
  std::size_t labels_with_positives = 0;
  for (std::size_t l = 0; l < label_count; ++l) {
    std::size_t total_pos = 0;
    for (std::size_t s = 0; s < n; ++s) {
      relevant[s] = std::binary_search(positives[s].begin(),
                                       positives[s].end(),
                                       static_cast<std::uint32_t>(l));
      total_pos += relevant[s];
    }
    if (total_pos == 0) continue;
    ++labels_with_positives;

    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      double pa = probabilities[a][l], pb = probabilities[b][l];
      if (pa != pb) return pa > pb;
      return a < b;
    });

    double hits = 0.0, ap = 0.0;
    for (std::size_t rank = 0; rank < n; ++rank) {
      if (!relevant[order[rank]]) continue;
      hits += 1.0;
      ap += hits / static_cast<double>(rank + 1);
    }
    ap_sum += ap / static_cast<double>(total_pos);
  }

  if (labels_with_positives == 0)
    fail(ErrorKind::NoPositives, "no label has a positive sample");
  return ap_sum / static_cast<double>(labels_with_positives);
}

// ---------------------------------------------------------------------------
// serialization

namespace {

constexpr char kModelMagic[4] = {'K', 'W', 'M', 'D'};
constexpr char kFeatureMagic[4] = {'K', 'W', 'F', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

void save_model(const ClassifierModel& model, const std::string& path) {
  bytes::Buffer buf;
  bytes::put_raw(buf, kModelMagic, 4);
  bytes::put_u32(buf, kFormatVersion);
  bytes::put_u8(buf, static_cast<std::uint8_t>(model.modality));
  bytes::put_u64(buf, model.label_count);
  bytes::put_u64(buf, model.dim);
  bytes::put_u64(buf, model.vocab_hash);
  for (double w : model.weights) bytes::put_f64(buf, w);
  for (double b : model.bias) bytes::put_f64(buf, b);
  bytes::write_file(path, buf);
}

ClassifierModel load_model(const std::string& path) {
  bytes::Buffer buf = bytes::read_file(path);
  bytes::Reader r(buf.data(), buf.size(), ErrorKind::CorruptModel, path);

  char magic[4];
  r.get_raw(magic, 4);
  if (std::memcmp(magic, kModelMagic, 4) != 0)
    fail(ErrorKind::CorruptModel, path + ": bad magic");
  if (r.get_u32() != kFormatVersion)
    fail(ErrorKind::CorruptModel, path + ": unsupported version");

  ClassifierModel model;
  std::uint8_t modality = r.get_u8();
  if (modality > 1) fail(ErrorKind::CorruptModel, path + ": bad modality");
  model.modality = static_cast<Modality>(modality);
  model.label_count = r.get_u64();
  model.dim = r.get_u64();
  model.vocab_hash = r.get_u64();
  if (model.label_count == 0 || model.dim == 0)
    fail(ErrorKind::CorruptModel, path + ": empty shape");
  if (r.remaining() != 8 * (model.label_count * model.dim + model.label_count))
    fail(ErrorKind::CorruptModel, path + ": size does not match shape");

  model.weights.resize(model.label_count * model.dim);
  for (double& w : model.weights) w = r.get_f64();
  model.bias.resize(model.label_count);
  for (double& b : model.bias) b = r.get_f64();
  for (double w : model.weights)
    if (!std::isfinite(w))
      fail(ErrorKind::CorruptModel, path + ": non-finite weight");
  for (double b : model.bias)
    if (!std::isfinite(b))
      fail(ErrorKind::CorruptModel, path + ": non-finite bias");
  return model;
}

namespace {

std::vector<FeatureRecord> load_features_binary(const std::string& path,
                                                const bytes::Buffer& buf) {
  bytes::Reader r(buf.data(), buf.size(), ErrorKind::ParseError, path);
  char magic[4];
  r.get_raw(magic, 4);
  if (r.get_u32() != kFormatVersion)
    fail(ErrorKind::ParseError, path + ": unsupported version");
  std::uint8_t modality = r.get_u8();
  if (modality > 1) fail(ErrorKind::ParseError, path + ": bad modality");
  std::uint64_t dim = r.get_u64();
  std::uint64_t count = r.get_u64();
  if (dim == 0) fail(ErrorKind::ParseError, path + ": zero dimension");

  std::vector<FeatureRecord> records;
  records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    FeatureRecord rec;
    rec.modality = static_cast<Modality>(modality);
    std::uint32_t id_len = r.get_u32();
    rec.sample_id.resize(id_len);
    r.get_raw(rec.sample_id.data(), id_len);
    rec.vector.resize(dim);
    for (double& v : rec.vector) {
      v = r.get_f64();
      if (!std::isfinite(v))
        fail(ErrorKind::ParseError, path + ": non-finite feature value");
    }
    records.push_back(std::move(rec));
  }
  r.expect_done();
  return records;
}

std::vector<FeatureRecord> load_features_json(const std::string& path) {
  std::vector<FeatureRecord> records;
  std::size_t dim = 0;
  jsonl::for_each(path, [&](const json& j, std::size_t lineno) {
    std::string where = jsonl::where(path, lineno);
    FeatureRecord rec;
    rec.sample_id = jsonl::str_field(j, "sample_id", where);
    auto modality = modality_from_string(jsonl::str_field(j, "modality", where));
    if (!modality)
      fail(ErrorKind::ParseError, where + ": modality must be image or text");
    rec.modality = *modality;
    const json& vec = jsonl::field(j, "vector", where);
    if (!vec.is_array() || vec.empty())
      fail(ErrorKind::ParseError, where + ": vector must be a non-empty array");
    rec.vector.reserve(vec.size());
    for (const json& v : vec) {
      if (!v.is_number())
        fail(ErrorKind::ParseError, where + ": vector entries must be numbers");
      rec.vector.push_back(v.get<double>());
    }
    if (records.empty()) dim = rec.vector.size();
    else if (rec.vector.size() != dim)
      fail(ErrorKind::DimensionMismatch,
           where + ": expected " + std::to_string(dim) + " values");
    records.push_back(std::move(rec));
  });
  return records;
}

}  // namespace

std::vector<FeatureRecord> load_features(const std::string& path) {
  {
    auto in = jsonl::open_input(path, /*binary=*/true);
    char magic[4] = {0, 0, 0, 0};
    in.read(magic, 4);
    if (in.gcount() == 4 && std::memcmp(magic, kFeatureMagic, 4) == 0)
      return load_features_binary(path, bytes::read_file(path));
  }
  return load_features_json(path);
}

void save_features_json(std::span<const FeatureRecord> records,
                        const std::string& path) {
  auto out = jsonl::open_output(path);
  for (const FeatureRecord& rec : records) {
    json j;
    j["sample_id"] = rec.sample_id;
    j["modality"] = to_string(rec.modality);
    j["vector"] = rec.vector;
    out << j.dump() << '\n';
  }
}

void save_features_binary(std::span<const FeatureRecord> records,
                          const std::string& path) {
  if (records.empty())
    fail(ErrorKind::InvalidConfig, "refusing to write empty feature file");
  std::size_t dim = records.front().vector.size();
  Modality modality = records.front().modality;
  for (const FeatureRecord& rec : records) {
    if (rec.vector.size() != dim)
      fail(ErrorKind::DimensionMismatch, rec.sample_id + ": ragged features");
    if (rec.modality != modality)
      fail(ErrorKind::JoinError, rec.sample_id + ": mixed modalities");
  }

  bytes::Buffer buf;
  bytes::put_raw(buf, kFeatureMagic, 4);
  bytes::put_u32(buf, kFormatVersion);
  bytes::put_u8(buf, static_cast<std::uint8_t>(modality));
  bytes::put_u64(buf, dim);
  bytes::put_u64(buf, records.size());
  for (const FeatureRecord& rec : records) {
    bytes::put_u32(buf, static_cast<std::uint32_t>(rec.sample_id.size()));
    bytes::put_raw(buf, rec.sample_id.data(), rec.sample_id.size());
    for (double v : rec.vector) bytes::put_f64(buf, v);
  }
  bytes::write_file(path, buf);
}

}  // namespace prescreen
