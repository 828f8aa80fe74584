#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace xeroalign {

enum class TrainMode {
  kTarget,
  kZeroShot,
  kTranslateTrain,
  kXeroAlign,
  kSeqAlignFirst,
  kSeqTaskFirst,
  kUnlabeledEval,
};

std::string to_string(TrainMode mode);
// Throws ConfigError listing the accepted names.
TrainMode parse_mode(std::string_view name);
const std::vector<TrainMode>& all_modes();

bool is_alignment_mode(TrainMode mode);
bool is_sequential_mode(TrainMode mode);
// Only these modes may read target-language labels during training.
bool reads_target_labels(TrainMode mode);

}  // namespace xeroalign
