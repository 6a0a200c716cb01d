#ifndef PRESCREEN_TESTS_ORACLES_HPP
#define PRESCREEN_TESTS_ORACLES_HPP

// Brute-force reference implementations the tests check the library
// against.  These deliberately avoid the library's own code paths:
// screening is re-done by scanning every gallery entry, average
// precision by sorting explicit (score, index) pairs, and gradients by
// central differences.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <vector>

namespace testsupport {

// Union of galleries whose label set intersects the query, by scanning
// the forward lists directly.  Returns ascending unique gallery ids.
inline std::vector<std::uint32_t> oracle_screen(
    const std::vector<std::vector<std::uint32_t>>& gallery_labels,
    const std::vector<std::uint32_t>& query_labels) {
  std::set<std::uint32_t> query(query_labels.begin(), query_labels.end());
  std::vector<std::uint32_t> out;
  for (std::uint32_t g = 0; g < gallery_labels.size(); ++g) {
    for (std::uint32_t label : gallery_labels[g]) {
      if (query.count(label)) {
        out.push_back(g);
        break;
      }
    }
  }
  return out;
}

// Average precision for one label: samples ranked by descending score,
// ties by ascending sample index, precision averaged at each relevant
// hit.  nullopt when nothing is relevant.
inline std::optional<double> oracle_average_precision(
    const std::vector<double>& scores, const std::vector<bool>& relevant) {
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores[a] > scores[b];
                   });
  double hits = 0.0, sum = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (relevant[order[rank]]) {
      hits += 1.0;
      sum += hits / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0.0) return std::nullopt;
  return sum / hits;
}

// Macro mean over labels that have at least one positive sample.
inline std::optional<double> oracle_map(
    const std::vector<std::vector<double>>& probabilities,
    const std::vector<std::vector<std::uint32_t>>& positives) {
  if (probabilities.empty()) return std::nullopt;
  std::size_t label_count = probabilities.front().size();
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t label = 0; label < label_count; ++label) {
    std::vector<double> scores;
    std::vector<bool> relevant;
    for (std::size_t s = 0; s < probabilities.size(); ++s) {
      scores.push_back(probabilities[s][label]);
      relevant.push_back(std::binary_search(positives[s].begin(),
                                            positives[s].end(),
                                            static_cast<std::uint32_t>(label)));
    }
    if (auto ap = oracle_average_precision(scores, relevant)) {
      sum += *ap;
      ++counted;
    }
  }
  if (counted == 0) return std::nullopt;
  return sum / static_cast<double>(counted);
}

// Central-difference derivative of a scalar loss in one coordinate.
template <class LossFn>
double fd_gradient(LossFn&& loss_of, std::vector<double> probs, std::size_t i,
                   double h) {
  double p = probs[i];
  probs[i] = p + h;
  double up = loss_of(probs);
  probs[i] = p - h;
  double down = loss_of(probs);
  return (up - down) / (2.0 * h);
}

}  // namespace testsupport

#endif  // PRESCREEN_TESTS_ORACLES_HPP
