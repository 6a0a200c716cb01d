#include "config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>

#include "prescreen/error.hpp"

namespace prescreen::cli {

const std::vector<KeySpec>& Config::keys() {
  static const std::vector<KeySpec> specs = {
      {"paths.captions", "", "captions, one JSON object per line"},
      {"paths.lexicon", "", "lexicon TSV: word, tags, optional canonical form"},
      {"paths.stopwords", "", "stopword list, one word per line"},
      {"paths.vocabulary", "", "vocabulary file (build-vocab writes, rest read)"},
      {"paths.annotations", "", "annotation file (build-vocab writes)"},
      {"paths.features", "", "feature vectors for train/predict"},
      {"paths.model", "", "classifier model file"},
      {"paths.keywords", "", "keyword sets written by predict"},
      {"paths.index", "", "inverted index (sidecar: <index>.ids.jsonl)"},
      {"paths.queries", "", "query keyword sets for screen/evaluate"},
      {"paths.screen_out", "", "screening results written by screen"},
      {"paths.ground_truth", "", "query targets for evaluate"},
      {"paths.query_features", "", "query-side vectors for evaluate"},
      {"paths.gallery_features", "", "gallery-side vectors for evaluate"},
      {"paths.report", "", "evaluation report destination"},
      {"paths.features_image", "", "image vectors for sweep"},
      {"paths.features_text", "", "text vectors for sweep"},
      {"paths.model_image", "", "image classifier for sweep"},
      {"paths.model_text", "", "text classifier for sweep"},
      {"paths.ground_truth_tr", "", "image-to-text targets for sweep"},
      {"paths.ground_truth_ir", "", "text-to-image targets for sweep"},
      {"paths.sweep_csv", "", "grid results CSV written by sweep"},
      {"corpus.pos_mode", "noun", "keyword POS filter: noun or nva"},
      {"corpus.min_images", "1", "keep keywords seen in at least this many images"},
      {"classifier.modality", "image", "which modality to train or predict"},
      {"classifier.loss", "asl", "training loss: asl or bce"},
      {"classifier.alpha_plus", "0", "positive focusing exponent"},
      {"classifier.alpha_minus", "3", "negative focusing exponent"},
      {"classifier.delta", "0.05", "probability shift; negatives below it drop out"},
      {"classifier.lr", "0.1", "learning rate"},
      {"classifier.epochs", "10", "training epochs"},
      {"classifier.batch_size", "128", "mini-batch size"},
      {"classifier.seed", "0", "RNG seed (PRESCREEN_SEED overrides)"},
      {"classifier.weight_decay", "0", "L2 penalty on weights"},
      {"screening.r_image", "15", "keywords kept per image"},
      {"screening.r_text", "3", "keywords kept per text"},
      {"screening.keyword_source_image", "predicted",
       "image keywords: predicted or ground_truth"},
      {"screening.keyword_source_text", "predicted",
       "text keywords: predicted, extracted, merged or ground_truth"},
      {"screening.fallback", "full_gallery",
       "empty screening result: full_gallery or empty"},
      {"eval.ks", "1,5", "comma-separated ks for R@k"},
      {"sweep.r_image_values", "5,10,15,20,25,30", "image-radius grid"},
      {"sweep.r_text_values", "3", "text-radius grid"},
      {"timing.repeats", "3", "timing repetitions, median wins; 0 disables"},
  };
  return specs;
}

Config::Config() {
  for (const KeySpec& spec : keys()) values_[spec.name] = spec.preset;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::MissingFile, "cannot open config " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::InvalidConfig,
           path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    if (!values_.count(key))
      fail(ErrorKind::InvalidConfig,
           path + ":" + std::to_string(lineno) + ": unknown key \"" + key + "\"");
    values_[key] = std::move(value);
  }
}

void Config::set(const std::string& key, std::string value) {
  auto it = values_.find(key);
  if (it == values_.end())
    fail(ErrorKind::InvalidConfig, "unknown key \"" + key + "\"");
  it->second = std::move(value);
}

void Config::apply_env() {
  if (const char* seed = std::getenv("PRESCREEN_SEED")) {
    std::string value = trim(seed);
    if (value.empty())
      fail(ErrorKind::InvalidConfig, "PRESCREEN_SEED is empty");
    values_["classifier.seed"] = value;
    uint("classifier.seed");  // reject garbage right away
  }
}

const std::string& Config::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end())
    fail(ErrorKind::InvalidConfig, "unknown key \"" + key + "\"");
  return it->second;
}

bool Config::is_set(const std::string& key) const { return !raw(key).empty(); }

std::string Config::path(const std::string& key) const {
  const std::string& value = raw(key);
  if (value.empty())
    fail(ErrorKind::InvalidConfig, key + " must be set for this command");
  return value;
}

std::string Config::choice(const std::string& key,
                           const std::vector<std::string>& allowed) const {
  const std::string& value = raw(key);
  for (const std::string& candidate : allowed)
    if (value == candidate) return value;
  std::string expected;
  for (const std::string& candidate : allowed) {
    if (!expected.empty()) expected += ", ";
    expected += candidate;
  }
  fail(ErrorKind::InvalidConfig,
       key + " must be one of: " + expected + " (got \"" + value + "\")");
}

std::uint64_t Config::uint(const std::string& key,
                           std::uint64_t min_value) const {
  const std::string& value = raw(key);
  errno = 0;
  char* end = nullptr;
  unsigned long long parsed = std::strtoull(value.c_str(), &end, 10);
  if (value.empty() || *end != '\0' || errno == ERANGE ||
      value.find('-') != std::string::npos)
    fail(ErrorKind::InvalidConfig,
         key + " must be a non-negative integer (got \"" + value + "\")");
  if (parsed < min_value)
    fail(ErrorKind::InvalidConfig,
         key + " must be at least " + std::to_string(min_value));
  return parsed;
}

double Config::real(const std::string& key, double min_value,
                    double max_value) const {
  const std::string& value = raw(key);
  errno = 0;
  char* end = nullptr;
  double parsed = std::strtod(value.c_str(), &end);
  if (value.empty() || *end != '\0' || errno == ERANGE)
    fail(ErrorKind::InvalidConfig,
         key + " must be a number (got \"" + value + "\")");
  if (!(parsed >= min_value) || !(parsed <= max_value))
    fail(ErrorKind::InvalidConfig,
         key + " must lie in [" + std::to_string(min_value) + ", " +
             std::to_string(max_value) + "]");
  return parsed;
}

std::vector<std::uint32_t> Config::uint_list(const std::string& key,
                                             std::uint32_t min_value) const {
  const std::string& value = raw(key);
  std::vector<std::uint32_t> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    std::size_t end = value.find(',', start);
    if (end == std::string::npos) end = value.size();
    std::string item = trim(value.substr(start, end - start));
    errno = 0;
    char* stop = nullptr;
    unsigned long long parsed = std::strtoull(item.c_str(), &stop, 10);
    if (item.empty() || *stop != '\0' || errno == ERANGE ||
        parsed > 0xffffffffull || parsed < min_value)
      fail(ErrorKind::InvalidConfig,
           key + " must be a comma-separated list of integers >= " +
               std::to_string(min_value) + " (got \"" + value + "\")");
    out.push_back(static_cast<std::uint32_t>(parsed));
    if (end == value.size()) break;
    start = end + 1;
  }
  if (out.empty())
    fail(ErrorKind::InvalidConfig, key + " must not be empty");
  return out;
}

}  // namespace prescreen::cli
