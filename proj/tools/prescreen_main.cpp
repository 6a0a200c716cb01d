#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "config.hpp"
#include "prescreen/classifier.hpp"
#include "prescreen/corpus.hpp"
#include "prescreen/error.hpp"
#include "prescreen/index.hpp"
#include "prescreen/jsonl.hpp"
#include "prescreen/pipeline.hpp"

namespace prescreen::cli {
namespace {

using jsonl::json;

void log_line(const std::string& message) {
  std::fprintf(stderr, "[prescreen] %s\n", message.c_str());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Modality config_modality(const Config& cfg) {
  return *modality_from_string(
      cfg.choice("classifier.modality", {"image", "text"}));
}

PosMode config_pos_mode(const Config& cfg) {
  return cfg.choice("corpus.pos_mode", {"noun", "nva"}) == "noun"
             ? PosMode::Noun
             : PosMode::NounVerbAdjective;
}

Fallback config_fallback(const Config& cfg) {
  return cfg.choice("screening.fallback", {"full_gallery", "empty"}) ==
                 "full_gallery"
             ? Fallback::FullGallery
             : Fallback::Empty;
}

// ---------------------------------------------------------------------------
// shared file shapes

// {"sample_id", "labels": [ids]} per line, returned sorted by sample id.
struct KeywordFile {
  std::vector<std::string> ids;
  std::vector<std::vector<LabelId>> labels;
};

KeywordFile from_keyword_map(std::map<std::string, std::vector<LabelId>> rows) {
  KeywordFile out;
  out.ids.reserve(rows.size());
  out.labels.reserve(rows.size());
  for (auto& [id, labels] : rows) {
    out.ids.push_back(id);
    out.labels.push_back(std::move(labels));
  }
  return out;
}

KeywordFile load_keyword_file(const std::string& path) {
  std::map<std::string, std::vector<LabelId>> rows;
  jsonl::for_each(path, [&](const json& j, std::size_t lineno) {
    std::string where = jsonl::where(path, lineno);
    std::string id = jsonl::str_field(j, "sample_id", where);
    const json& labels = jsonl::field(j, "labels", where);
    if (!labels.is_array())
      fail(ErrorKind::ParseError, where + ": labels must be an array");
    std::vector<LabelId> ids;
    for (const json& v : labels) {
      if (!v.is_number_unsigned() || v.get<std::uint64_t>() > 0xffffffffull)
        fail(ErrorKind::ParseError, where + ": bad label id");
      ids.push_back(v.get<LabelId>());
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (!rows.emplace(id, std::move(ids)).second)
      fail(ErrorKind::ParseError, where + ": duplicate sample id " + id);
  });
  return from_keyword_map(std::move(rows));
}

void save_keyword_file(const KeywordFile& file, const std::string& path) {
  auto out = jsonl::open_output(path);
  for (std::size_t i = 0; i < file.ids.size(); ++i) {
    json j;
    j["sample_id"] = file.ids[i];
    j["labels"] = file.labels[i];
    out << j.dump() << '\n';
  }
}

// {"query_id", "targets": [sample ids]} per line, sorted by query id.
struct GroundTruthFile {
  std::vector<std::string> query_ids;
  std::vector<std::vector<std::string>> targets;
};

GroundTruthFile load_ground_truth(const std::string& path) {
  std::map<std::string, std::vector<std::string>> rows;
  jsonl::for_each(path, [&](const json& j, std::size_t lineno) {
    std::string where = jsonl::where(path, lineno);
    std::string id = jsonl::str_field(j, "query_id", where);
    const json& targets = jsonl::field(j, "targets", where);
    if (!targets.is_array() || targets.empty())
      fail(ErrorKind::ParseError,
           where + ": targets must be a non-empty array");
    std::vector<std::string> names;
    for (const json& v : targets) {
      if (!v.is_string())
        fail(ErrorKind::ParseError, where + ": targets must be sample ids");
      names.push_back(v.get<std::string>());
    }
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    if (!rows.emplace(id, std::move(names)).second)
      fail(ErrorKind::ParseError, where + ": duplicate query id " + id);
  });
  GroundTruthFile out;
  for (auto& [id, names] : rows) {
    out.query_ids.push_back(id);
    out.targets.push_back(std::move(names));
  }
  return out;
}

std::vector<FeatureRecord> filter_modality(std::vector<FeatureRecord> records,
                                           Modality modality) {
  std::vector<FeatureRecord> kept;
  for (FeatureRecord& r : records)
    if (r.modality == modality) kept.push_back(std::move(r));
  return kept;
}

using FeatureMap = std::map<std::string, const FeatureRecord*>;

FeatureMap feature_map(std::span<const FeatureRecord> records,
                       const std::string& path) {
  FeatureMap map;
  for (const FeatureRecord& r : records)
    if (!map.emplace(r.sample_id, &r).second)
      fail(ErrorKind::ParseError,
           path + ": duplicate sample id " + r.sample_id);
  return map;
}

TrainConfig train_config(const Config& cfg) {
  TrainConfig tc;
  tc.loss = cfg.choice("classifier.loss", {"asl", "bce"}) == "asl"
                ? LossKind::Asl
                : LossKind::Bce;
  tc.asl.alpha_plus = cfg.real("classifier.alpha_plus", 0.0, 1e6);
  tc.asl.alpha_minus = cfg.real("classifier.alpha_minus", 0.0, 1e6);
  tc.asl.delta = cfg.real("classifier.delta", 0.0, 1.0);
  if (tc.asl.delta >= 1.0)
    fail(ErrorKind::InvalidConfig, "classifier.delta must be below 1");
  tc.learning_rate = cfg.real("classifier.lr", 0.0, 1e9);
  if (tc.learning_rate <= 0.0)
    fail(ErrorKind::InvalidConfig, "classifier.lr must be positive");
  tc.epochs = static_cast<std::uint32_t>(cfg.uint("classifier.epochs"));
  tc.batch_size = static_cast<std::uint32_t>(cfg.uint("classifier.batch_size", 1));
  tc.seed = cfg.uint("classifier.seed");
  tc.weight_decay = cfg.real("classifier.weight_decay", 0.0, 1e9);
  return tc;
}

json report_to_json(const EvalReport& report) {
  json r_at = json::object();
  for (const auto& [k, pct] : report.r_at) r_at[std::to_string(k)] = pct;
  json walls;
  walls["screen"] = report.wall_times.screen_s;
  walls["rerank"] = report.wall_times.rerank_s;
  walls["total"] = report.wall_times.total_s;
  walls["unscreened_baseline"] = report.wall_times.unscreened_baseline_s;
  json j;
  j["r_at"] = r_at;
  j["r_sum"] = report.r_sum;
  j["gt_recall"] = report.gt_recall;
  j["screening_rate"] = report.screening_rate;
  j["speedup"] = report.speedup;
  j["fallback_count"] = report.fallback_count;
  j["query_count"] = report.query_count;
  j["wall_times"] = walls;
  return j;
}

// ---------------------------------------------------------------------------
// commands

json cmd_build_vocab(const Config& cfg) {
  auto captions = load_captions(cfg.path("paths.captions"));
  auto lexicon = Lexicon::load(cfg.path("paths.lexicon"),
                               cfg.path("paths.stopwords"));
  PosMode mode = config_pos_mode(cfg);
  std::uint64_t min_images = cfg.uint("corpus.min_images", 1);

  Vocabulary vocab = build_vocabulary(captions, lexicon, mode, min_images);
  save_vocabulary(vocab, cfg.path("paths.vocabulary"));

  auto annotations = build_annotations(captions, vocab, lexicon, mode);
  save_annotations(annotations, cfg.path("paths.annotations"));

  std::uint64_t images = 0, texts = 0, empties = 0;
  for (const AnnotationSet& a : annotations) {
    (a.modality == Modality::Image ? images : texts) += 1;
    empties += a.labels.empty() ? 1 : 0;
  }
  auto dfs = vocab.image_df;
  std::sort(dfs.begin(), dfs.end());
  auto percentile = [&dfs](double q) {
    std::size_t rank = static_cast<std::size_t>(
        std::max(1.0, std::ceil(q * static_cast<double>(dfs.size()))));
    return dfs[rank - 1];
  };
  json df;
  df["min"] = dfs.front();
  df["p50"] = percentile(0.50);
  df["p90"] = percentile(0.90);
  df["max"] = dfs.back();

  json j;
  j["command"] = "build-vocab";
  j["label_count"] = vocab.size();
  j["image_count"] = images;
  j["text_count"] = texts;
  j["empty_annotations"] = empties;
  j["image_df"] = df;
  j["vocab_hash"] = hex64(vocab.fingerprint());
  j["vocabulary"] = cfg.path("paths.vocabulary");
  j["annotations"] = cfg.path("paths.annotations");
  return j;
}

json cmd_train(const Config& cfg) {
  Modality modality = config_modality(cfg);
  Vocabulary vocab = load_vocabulary(cfg.path("paths.vocabulary"));
  auto features =
      filter_modality(load_features(cfg.path("paths.features")), modality);
  auto annotations = load_annotations(cfg.path("paths.annotations"));
  TrainConfig tc = train_config(cfg);

  TrainResult result = train(features, annotations, tc, modality, vocab.size(),
                             vocab.fingerprint());
  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e)
    log_line("epoch " + std::to_string(e + 1) + "/" +
             std::to_string(result.epoch_losses.size()) + " loss " +
             std::to_string(result.epoch_losses[e]));
  save_model(result.model, cfg.path("paths.model"));

  json j;
  j["command"] = "train";
  j["modality"] = to_string(modality);
  j["samples"] = features.size();
  j["label_count"] = result.model.label_count;
  j["dim"] = result.model.dim;
  j["epochs"] = tc.epochs;
  j["final_loss"] =
      result.epoch_losses.empty() ? 0.0 : result.epoch_losses.back();
  j["epoch_losses"] = result.epoch_losses;
  j["vocab_hash"] = hex64(result.model.vocab_hash);
  j["model"] = cfg.path("paths.model");
  return j;
}

json cmd_predict(const Config& cfg) {
  Modality modality = config_modality(cfg);
  KeywordSource source;
  if (modality == Modality::Image) {
    source = *keyword_source_from_string(cfg.choice(
        "screening.keyword_source_image", {"predicted", "ground_truth"}));
  } else {
    source = *keyword_source_from_string(
        cfg.choice("screening.keyword_source_text",
                   {"predicted", "extracted", "merged", "ground_truth"}));
  }
  bool uses_model =
      source == KeywordSource::Predicted || source == KeywordSource::Merged;
  bool uses_captions =
      source == KeywordSource::Extracted || source == KeywordSource::Merged;

  std::map<std::string, std::vector<LabelId>> keywords;
  std::optional<double> map_value;
  std::uint64_t r = 0;

  if (uses_model) {
    r = cfg.uint(modality == Modality::Image ? "screening.r_image"
                                             : "screening.r_text",
                 1);
    Vocabulary vocab = load_vocabulary(cfg.path("paths.vocabulary"));
    ClassifierModel model = load_model(cfg.path("paths.model"));
    if (model.modality != modality)
      fail(ErrorKind::InvalidConfig,
           std::string("model is for ") + to_string(model.modality) +
               " but classifier.modality is " + to_string(modality));
    if (model.vocab_hash != vocab.fingerprint())
      fail(ErrorKind::VocabMismatch,
           "model was trained against a different vocabulary");
    auto features =
        filter_modality(load_features(cfg.path("paths.features")), modality);
    if (features.empty())
      fail(ErrorKind::JoinError,
           std::string("no ") + to_string(modality) + " features in " +
               cfg.path("paths.features"));

    std::vector<std::vector<double>> probs;
    std::vector<std::vector<LabelId>> positives;
    bool want_map = cfg.is_set("paths.annotations");
    std::map<std::string, std::vector<LabelId>> truth;
    if (want_map) {
      for (AnnotationSet& a :
           load_annotations(cfg.path("paths.annotations"))) {
        if (a.modality != modality) continue;
        truth.emplace(a.sample_id, std::move(a.labels));
      }
    }
    for (const FeatureRecord& rec : features) {
      KeywordPrediction pred =
          predict_topr(model, rec, static_cast<std::uint32_t>(r));
      std::vector<LabelId> ids = pred.top_r;
      std::sort(ids.begin(), ids.end());
      if (!keywords.emplace(rec.sample_id, std::move(ids)).second)
        fail(ErrorKind::ParseError,
             cfg.path("paths.features") + ": duplicate sample id " +
                 rec.sample_id);
      if (want_map) {
        auto it = truth.find(rec.sample_id);
        if (it == truth.end())
          fail(ErrorKind::JoinError, "no annotation for sample " + rec.sample_id);
        probs.push_back(std::move(pred.probabilities));
        positives.push_back(it->second);
      }
    }
    if (want_map) map_value = mean_average_precision(probs, positives);
  }

  if (uses_captions) {
    Vocabulary vocab = load_vocabulary(cfg.path("paths.vocabulary"));
    Lexicon lexicon = Lexicon::load(cfg.path("paths.lexicon"),
                                    cfg.path("paths.stopwords"));
    PosMode mode = config_pos_mode(cfg);
    std::map<std::string, std::set<LabelId>> extracted;
    for (const Caption& c : load_captions(cfg.path("paths.captions"))) {
      auto& ids = extracted[c.text_id];
      for (const std::string& k : extract_keywords(c.text, lexicon, mode))
        if (auto id = vocab.lookup(k)) ids.insert(*id);
    }
    if (source == KeywordSource::Extracted) {
      for (auto& [id, ids] : extracted)
        keywords.emplace(id, std::vector<LabelId>(ids.begin(), ids.end()));
    } else {  // merged: union onto the predicted sample set
      for (auto& [id, ids] : keywords) {
        auto it = extracted.find(id);
        if (it == extracted.end())
          fail(ErrorKind::MissingVector, "no caption for sample " + id);
        std::vector<LabelId> merged(it->second.begin(), it->second.end());
        merged.insert(merged.end(), ids.begin(), ids.end());
        std::sort(merged.begin(), merged.end());
        merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
        ids = std::move(merged);
      }
    }
  }

  if (source == KeywordSource::GroundTruth) {
    for (AnnotationSet& a : load_annotations(cfg.path("paths.annotations"))) {
      if (a.modality != modality) continue;
      keywords.emplace(a.sample_id, std::move(a.labels));
    }
    if (keywords.empty())
      fail(ErrorKind::JoinError,
           std::string("no ") + to_string(modality) + " annotations in " +
               cfg.path("paths.annotations"));
  }

  std::uint64_t label_total = 0;
  for (const auto& [id, ids] : keywords) label_total += ids.size();
  KeywordFile file = from_keyword_map(std::move(keywords));
  save_keyword_file(file, cfg.path("paths.keywords"));

  json j;
  j["command"] = "predict";
  j["modality"] = to_string(modality);
  j["source"] = to_string(source);
  j["samples"] = file.ids.size();
  if (uses_model) j["r"] = r;
  if (map_value) j["map"] = *map_value;
  j["mean_keywords"] =
      file.ids.empty()
          ? 0.0
          : static_cast<double>(label_total) / static_cast<double>(file.ids.size());
  j["keywords"] = cfg.path("paths.keywords");
  return j;
}

json cmd_index(const Config& cfg) {
  Vocabulary vocab = load_vocabulary(cfg.path("paths.vocabulary"));
  KeywordFile gallery = load_keyword_file(cfg.path("paths.keywords"));
  if (gallery.ids.empty())
    fail(ErrorKind::JoinError,
         cfg.path("paths.keywords") + " holds no samples");

  IdMap ids = IdMap::from_sorted_names(gallery.ids);
  ForwardIndex forward;
  forward.entries = std::move(gallery.labels);
  InvertedIndex index =
      InvertedIndex::build(forward, vocab.size(), vocab.fingerprint());

  const std::string index_path = cfg.path("paths.index");
  save_index(index, index_path);
  save_id_map(ids, index_path + ".ids.jsonl");

  IndexStats s = stats(index);
  json histogram = json::object();
  for (const auto& [length, labels] : s.posting_length_histogram)
    histogram[std::to_string(length)] = labels;

  json j;
  j["command"] = "index";
  j["gallery_count"] = s.gallery_count;
  j["label_count"] = s.label_count;
  j["posting_entries"] = s.posting_entries;
  j["serialized_bytes"] = s.serialized_bytes;
  j["posting_length_histogram"] = histogram;
  j["vocab_hash"] = hex64(index.vocab_hash());
  j["index"] = index_path;
  return j;
}

// Loads index + sidecar and enforces the vocabulary fingerprint chain.
std::pair<InvertedIndex, IdMap> load_index_checked(const Config& cfg) {
  const std::string index_path = cfg.path("paths.index");
  InvertedIndex index = load_index(index_path);
  IdMap ids = load_id_map(index_path + ".ids.jsonl");
  if (ids.names.size() != index.gallery_count())
    fail(ErrorKind::CorruptIndex,
         index_path + ".ids.jsonl does not match the index gallery");
  Vocabulary vocab = load_vocabulary(cfg.path("paths.vocabulary"));
  if (vocab.fingerprint() != index.vocab_hash())
    fail(ErrorKind::VocabMismatch,
         "index was built against a different vocabulary");
  return {std::move(index), std::move(ids)};
}

json cmd_screen(const Config& cfg) {
  auto [index, ids] = load_index_checked(cfg);
  KeywordFile queries = load_keyword_file(cfg.path("paths.queries"));
  Fallback fallback = config_fallback(cfg);

  auto out = jsonl::open_output(cfg.path("paths.screen_out"));
  double screened_away = 0.0;
  std::uint64_t fallbacks = 0;
  for (std::size_t q = 0; q < queries.ids.size(); ++q) {
    ScreenResult result = screen(index, queries.labels[q], fallback);
    fallbacks += result.fallback_used ? 1 : 0;
    if (index.gallery_count() > 0)
      screened_away += 1.0 - static_cast<double>(result.retained.size()) /
                                 static_cast<double>(index.gallery_count());
    json names = json::array();
    for (GalleryId g : result.retained) names.push_back(ids.names[g]);
    json j;
    j["query_id"] = queries.ids[q];
    j["fallback_used"] = result.fallback_used;
    j["retained"] = names;
    out << j.dump() << '\n';
  }

  json j;
  j["command"] = "screen";
  j["queries"] = queries.ids.size();
  j["mean_screening_rate"] =
      queries.ids.empty() ? 0.0
                          : 100.0 * screened_away /
                                static_cast<double>(queries.ids.size());
  j["fallback_count"] = fallbacks;
  j["output"] = cfg.path("paths.screen_out");
  return j;
}

json cmd_evaluate(const Config& cfg) {
  auto [index, ids] = load_index_checked(cfg);
  KeywordFile query_file = load_keyword_file(cfg.path("paths.queries"));
  GroundTruthFile gt = load_ground_truth(cfg.path("paths.ground_truth"));

  auto query_features = load_features(cfg.path("paths.query_features"));
  auto gallery_features = load_features(cfg.path("paths.gallery_features"));
  FeatureMap query_map =
      feature_map(query_features, cfg.path("paths.query_features"));
  FeatureMap gallery_map =
      feature_map(gallery_features, cfg.path("paths.gallery_features"));

  std::map<std::string, std::vector<LabelId>> query_keywords_by_id;
  for (std::size_t i = 0; i < query_file.ids.size(); ++i)
    query_keywords_by_id.emplace(query_file.ids[i],
                                 std::move(query_file.labels[i]));

  RetrievalTask task;
  task.gallery_count = index.gallery_count();
  std::vector<std::vector<LabelId>> query_keywords;
  std::vector<std::vector<double>> query_vectors;
  for (std::size_t q = 0; q < gt.query_ids.size(); ++q) {
    const std::string& id = gt.query_ids[q];
    auto kw = query_keywords_by_id.find(id);
    if (kw == query_keywords_by_id.end())
      fail(ErrorKind::MissingVector, "no keywords for query " + id);
    query_keywords.push_back(kw->second);
    auto fv = query_map.find(id);
    if (fv == query_map.end())
      fail(ErrorKind::MissingVector, "no feature vector for query " + id);
    query_vectors.push_back(fv->second->vector);

    std::vector<GalleryId> targets;
    for (const std::string& name : gt.targets[q])
      targets.push_back(ids.require(name));
    std::sort(targets.begin(), targets.end());
    task.ground_truth.push_back(std::move(targets));
  }

  std::vector<std::vector<double>> gallery_vectors;
  gallery_vectors.reserve(ids.names.size());
  for (const std::string& name : ids.names) {
    auto fv = gallery_map.find(name);
    if (fv == gallery_map.end())
      fail(ErrorKind::MissingVector, "no feature vector for gallery " + name);
    gallery_vectors.push_back(fv->second->vector);
  }

  InnerProductReranker reranker(query_vectors, gallery_vectors);
  RunOptions options;
  options.fallback = config_fallback(cfg);
  options.timing_repeats =
      static_cast<unsigned>(cfg.uint("timing.repeats"));
  auto ks = cfg.uint_list("eval.ks", 1);
  options.ks.assign(ks.begin(), ks.end());

  RunResult result = run(task, index, query_keywords, reranker, options);

  json report = report_to_json(result.report);
  {
    auto out = jsonl::open_output(cfg.path("paths.report"));
    out << report.dump(2) << '\n';
  }

  json j;
  j["command"] = "evaluate";
  j["report"] = report;
  j["report_path"] = cfg.path("paths.report");
  return j;
}

json cmd_sweep(const Config& cfg) {
  Vocabulary vocab = load_vocabulary(cfg.path("paths.vocabulary"));

  SweepInputs inputs;
  inputs.label_count = vocab.size();
  inputs.vocab_hash = vocab.fingerprint();

  struct Side {
    std::vector<std::string> names;
    std::map<std::string, GalleryId> dense;
  };
  auto load_side = [&](const char* features_key, const char* model_key,
                       Modality modality,
                       std::vector<std::vector<double>>& probs,
                       std::vector<std::vector<double>>& vectors) {
    auto features =
        filter_modality(load_features(cfg.path(features_key)), modality);
    if (features.empty())
      fail(ErrorKind::JoinError, std::string("no ") + to_string(modality) +
                                     " features in " + cfg.path(features_key));
    std::sort(features.begin(), features.end(),
              [](const FeatureRecord& a, const FeatureRecord& b) {
                return a.sample_id < b.sample_id;
              });
    ClassifierModel model = load_model(cfg.path(model_key));
    if (model.modality != modality)
      fail(ErrorKind::InvalidConfig,
           cfg.path(model_key) + std::string(" is not a ") +
               to_string(modality) + " model");
    if (model.vocab_hash != vocab.fingerprint())
      fail(ErrorKind::VocabMismatch,
           cfg.path(model_key) + " was trained against a different vocabulary");
    Side side;
    for (const FeatureRecord& rec : features) {
      if (!side.dense.emplace(rec.sample_id,
                              static_cast<GalleryId>(side.names.size()))
               .second)
        fail(ErrorKind::ParseError,
             cfg.path(features_key) + ": duplicate sample id " + rec.sample_id);
      side.names.push_back(rec.sample_id);
      probs.push_back(forward(model, rec.vector));
      vectors.push_back(rec.vector);
    }
    return side;
  };

  Side images = load_side("paths.features_image", "paths.model_image",
                          Modality::Image, inputs.image_probs,
                          inputs.image_vectors);
  Side texts = load_side("paths.features_text", "paths.model_text",
                         Modality::Text, inputs.text_probs,
                         inputs.text_vectors);

  auto load_task = [](const char* what, const GroundTruthFile& gt,
                      const Side& queries, const Side& gallery) {
    if (gt.query_ids.size() != queries.names.size())
      fail(ErrorKind::InvalidConfig,
           std::string(what) + " must cover every query-side sample exactly once");
    RetrievalTask task;
    task.gallery_count = static_cast<GalleryId>(gallery.names.size());
    task.ground_truth.resize(queries.names.size());
    for (std::size_t q = 0; q < gt.query_ids.size(); ++q) {
      auto qit = queries.dense.find(gt.query_ids[q]);
      if (qit == queries.dense.end())
        fail(ErrorKind::MissingVector,
             std::string(what) + ": no feature vector for query " +
                 gt.query_ids[q]);
      std::vector<GalleryId> targets;
      for (const std::string& name : gt.targets[q]) {
        auto git = gallery.dense.find(name);
        if (git == gallery.dense.end())
          fail(ErrorKind::MissingVector,
               std::string(what) + ": target " + name + " is not in the gallery");
        targets.push_back(git->second);
      }
      std::sort(targets.begin(), targets.end());
      task.ground_truth[qit->second] = std::move(targets);
    }
    return task;
  };

  inputs.image_to_text =
      load_task("ground_truth_tr",
                load_ground_truth(cfg.path("paths.ground_truth_tr")), images,
                texts);
  inputs.text_to_image =
      load_task("ground_truth_ir",
                load_ground_truth(cfg.path("paths.ground_truth_ir")), texts,
                images);

  RunOptions options;
  options.ks = {1};
  options.fallback = config_fallback(cfg);
  options.timing_repeats = static_cast<unsigned>(cfg.uint("timing.repeats"));

  auto r_image_values = cfg.uint_list("sweep.r_image_values", 1);
  auto r_text_values = cfg.uint_list("sweep.r_text_values", 1);
  std::vector<SweepRow> rows =
      sweep(inputs, r_image_values, r_text_values, options);
  write_sweep_csv(rows, cfg.path("paths.sweep_csv"));

  json out_rows = json::array();
  for (const SweepRow& row : rows) {
    json r;
    r["r_image"] = row.r_image;
    r["r_text"] = row.r_text;
    r["r1_tr"] = row.r1_image_to_text;
    r["r1_ir"] = row.r1_text_to_image;
    r["recall"] = row.recall;
    r["speedup"] = row.speedup;
    out_rows.push_back(r);
  }
  json j;
  j["command"] = "sweep";
  j["rows"] = out_rows;
  j["csv"] = cfg.path("paths.sweep_csv");
  return j;
}

int run_main(int argc, char** argv) {
  CLI::App app{"two-stage cross-modal retrieval: keyword screening, then rerank"};
  app.require_subcommand(1);

  std::map<std::string, std::string> overrides;
  std::string config_path;
  json (*selected)(const Config&) = nullptr;

  struct SubDef {
    const char* name;
    const char* help;
    json (*fn)(const Config&);
  };
  static const SubDef defs[] = {
      {"build-vocab", "derive the keyword vocabulary and annotations from captions",
       cmd_build_vocab},
      {"train", "fit a keyword classifier for one modality", cmd_train},
      {"predict", "materialize keyword sets for one modality", cmd_predict},
      {"index", "build the inverted index over gallery keyword sets", cmd_index},
      {"screen", "screen query keyword sets against an index", cmd_screen},
      {"evaluate", "run one retrieval direction end to end", cmd_evaluate},
      {"sweep", "grid over keyword radii and write a CSV", cmd_sweep},
  };

  for (const SubDef& def : defs) {
    CLI::App* sub = app.add_subcommand(def.name, def.help);
    sub->add_option("--config", config_path, "key=value config file");
    for (const KeySpec& spec : Config::keys()) {
      sub->add_option_function<std::string>(
          std::string("--") + spec.name,
          [&overrides, key = std::string(spec.name)](const std::string& v) {
            overrides[key] = v;
          },
          spec.help);
    }
    sub->callback([&selected, fn = def.fn]() { selected = fn; });
  }

  auto emit_error = [](const char* kind, const std::string& message, int code) {
    json inner;
    inner["kind"] = kind;
    inner["message"] = message;
    inner["exit_code"] = code;
    json j;
    j["error"] = inner;
    std::cout << j.dump() << std::endl;
    std::fprintf(stderr, "prescreen: %s: %s\n", kind, message.c_str());
    return code;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    return emit_error("InvalidConfig", e.what(), 2);
  }

  try {
    Config cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    cfg.apply_env();
    for (const auto& [key, value] : overrides) cfg.set(key, value);
    json summary = selected(cfg);
    std::cout << summary.dump() << std::endl;
    return 0;
  } catch (const Error& e) {
    return emit_error(e.kind_name(), e.what(), exit_code(e.kind()));
  } catch (const std::exception& e) {
    return emit_error("InvariantBreach",
                      std::string("unexpected failure: ") + e.what(), 4);
  }
}

}  // namespace
}  // namespace prescreen::cli

int main(int argc, char** argv) { return prescreen::cli::run_main(argc, argv); }
