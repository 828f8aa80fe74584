#include "xeroalign/metrics.hpp"

#include <algorithm>

#include "xeroalign/errors.hpp"

namespace xeroalign {
namespace {

template <typename T>
double exact_fraction(std::span<const T> preds, std::span<const T> golds) {
  if (preds.size() != golds.size()) {
    throw InputError("accuracy: " + std::to_string(preds.size()) + " predictions for " +
                     std::to_string(golds.size()) + " gold labels");
  }
  if (golds.empty()) throw InputError("accuracy: no examples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) hits += preds[i] == golds[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(golds.size());
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double accuracy(std::span<const int> preds, std::span<const int> golds) { return exact_fraction(preds, golds); }

double accuracy(std::span<const std::string> preds, std::span<const std::string> golds) {
  return exact_fraction(preds, golds);
}

std::vector<Span> bio_spans(std::span<const std::string> tags) {
  std::vector<Span> spans;
  bool open = false;
  Span current;
  auto close = [&](std::size_t at) {
    if (open) {
      current.end = at;
      spans.push_back(current);
    }
    open = false;
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto& tag = tags[i];
    const bool labelled = tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-';
    if (!labelled) {
      close(i);
      continue;
    }
    const std::string type = tag.substr(2);
    if (tag[0] == 'I' && open && current.type == type) continue;
    close(i);
    current = {type, i, i};
    open = true;
  }
  close(tags.size());
  return spans;
}

PRF span_f1(const std::vector<std::vector<std::string>>& gold, const std::vector<std::vector<std::string>>& pred) {
  if (gold.size() != pred.size()) {
    throw InputError("span_f1: " + std::to_string(pred.size()) + " predicted sequences for " +
                     std::to_string(gold.size()) + " gold sequences");
  }
  PRF r;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != pred[i].size()) {
      throw InputError("span_f1: sequence " + std::to_string(i) + " has " + std::to_string(pred[i].size()) +
                       " predicted tags for " + std::to_string(gold[i].size()) + " gold tags");
    }
    auto g = bio_spans(gold[i]);
    auto p = bio_spans(pred[i]);
    std::sort(g.begin(), g.end());
    std::sort(p.begin(), p.end());
    std::vector<Span> common;
    std::set_intersection(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(common));
    r.matched += common.size();
    r.gold += g.size();
    r.predicted += p.size();
  }
  r.precision = ratio(r.matched, r.predicted);
  r.recall = ratio(r.matched, r.gold);
  r.f1 = r.precision + r.recall == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

}  // namespace xeroalign
