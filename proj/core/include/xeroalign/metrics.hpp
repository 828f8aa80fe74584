#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace xeroalign {

struct Span {
  std::string type;
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive

  friend auto operator<=>(const Span&, const Span&) = default;
};

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t matched = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
};

// Exact-match fraction. Throws InputError on length mismatch or empty input.
double accuracy(std::span<const int> preds, std::span<const int> golds);
double accuracy(std::span<const std::string> preds, std::span<const std::string> golds);

// Lenient decoding: an I-X that does not continue an X span opens a new one.
// Malformed tags are treated as O.
std::vector<Span> bio_spans(std::span<const std::string> tags);

// Micro-averaged exact (type, start, end) matching; 0/0 is reported as 0.
PRF span_f1(const std::vector<std::vector<std::string>>& gold, const std::vector<std::vector<std::string>>& pred);

}  // namespace xeroalign
