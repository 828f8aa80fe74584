#include "xeroalign/modes.hpp"

#include "xeroalign/errors.hpp"

namespace xeroalign {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kTarget: return "target";
    case TrainMode::kZeroShot: return "zero_shot";
    case TrainMode::kTranslateTrain: return "translate_train";
    case TrainMode::kXeroAlign: return "xeroalign";
    case TrainMode::kSeqAlignFirst: return "xeroalign_seq_align_first";
    case TrainMode::kSeqTaskFirst: return "xeroalign_seq_task_first";
    case TrainMode::kUnlabeledEval: return "xeroalign_unlabeled_eval";
  }
  return "?";
}

const std::vector<TrainMode>& all_modes() {
  static const std::vector<TrainMode> modes{TrainMode::kTarget,        TrainMode::kZeroShot,
                                            TrainMode::kTranslateTrain, TrainMode::kXeroAlign,
                                            TrainMode::kSeqAlignFirst,  TrainMode::kSeqTaskFirst,
                                            TrainMode::kUnlabeledEval};
  return modes;
}

TrainMode parse_mode(std::string_view name) {
  std::string names;
  for (auto m : all_modes()) {
    if (to_string(m) == name) return m;
    names += (names.empty() ? "" : ", ") + to_string(m);
  }
  throw ConfigError("unknown mode '" + std::string(name) + "' (expected one of: " + names + ")");
}

bool is_alignment_mode(TrainMode mode) {
  return mode == TrainMode::kXeroAlign || is_sequential_mode(mode) || mode == TrainMode::kUnlabeledEval;
}

bool is_sequential_mode(TrainMode mode) {
  return mode == TrainMode::kSeqAlignFirst || mode == TrainMode::kSeqTaskFirst;
}

bool reads_target_labels(TrainMode mode) { return mode == TrainMode::kTarget || mode == TrainMode::kTranslateTrain; }

}  // namespace xeroalign
