#include <map>
#include <utility>

#include "dentatlas/atlas.hpp"

namespace dentatlas {

LabelTransferResult assign_labels(const LabelGrid& warped_atlas, const LabelGrid& subject_labels) {
  if (!(warped_atlas.geometry() == subject_labels.geometry())) {
    throw Error(ErrorKind::kInvalidArgument, "warped atlas and subject labels differ in geometry");
  }
  std::map<std::uint16_t, std::uint64_t> subject_size, atlas_size;
  std::map<std::pair<std::uint16_t, std::uint16_t>, std::uint64_t> overlap;
  for (std::size_t n = 0; n < subject_labels.size(); ++n) {
    const std::uint16_t s = subject_labels[n], a = warped_atlas[n];
    if (s != 0) ++subject_size[s];
    if (a != 0) ++atlas_size[a];
    if (s != 0 && a != 0) ++overlap[{s, a}];
  }
  LabelTransferResult result;
  std::size_t successes = 0;
  for (const auto& [tooth, size] : subject_size) {
    ToothAssignment t;
    t.truth = tooth;
    for (auto it = overlap.lower_bound({tooth, 0}); it != overlap.end() && it->first.first == tooth; ++it) {
      const std::uint16_t label = it->first.second;
      const double d = dice_from_counts({size, atlas_size[label], it->second});
      if (d > t.dice) {
        t.dice = d;
        t.assigned = label;
      }
    }
    t.success = t.assigned != 0 && t.assigned == t.truth;
    if (t.success) ++successes;
    result.teeth.push_back(t);
  }
  result.success_rate =
      result.teeth.empty() ? 0.0 : static_cast<double>(successes) / static_cast<double>(result.teeth.size());
  return result;
}

LabelTransferResult atlas_label_transfer(const LabelGrid& atlas_labels, const ChannelPair& atlas_channels,
                                         const LabelGrid& subject_labels, const ChannelPair& subject_channels,
                                         const RegistrationSchedule& schedule) {
  if (!(atlas_labels.geometry() == atlas_channels.intensity.geometry())) {
    throw Error(ErrorKind::kInvalidArgument, "atlas labels and channels differ in geometry");
  }
  if (!(subject_labels.geometry() == subject_channels.intensity.geometry())) {
    throw Error(ErrorKind::kInvalidArgument, "subject labels and channels differ in geometry");
  }
  const auto lin = register_linear(subject_channels, atlas_channels, LinearMode::kAffine, schedule);
  const auto syn = register_syn(subject_channels, atlas_channels, lin.transform, schedule);
  return assign_labels(warp_labels(atlas_labels, lin.transform, syn.fields.forward), subject_labels);
}

double labeling_success_rate(const std::vector<LabelTransferResult>& results) {
  if (results.empty()) throw Error(ErrorKind::kInvalidArgument, "no labelling results");
  std::size_t total = 0, successes = 0;
  for (const auto& r : results) {
    for (const auto& t : r.teeth) {
      ++total;
      if (t.success) ++successes;
    }
  }
  if (total == 0) throw Error(ErrorKind::kInvalidArgument, "labelling results contain no teeth");
  return static_cast<double>(successes) / static_cast<double>(total);
}

}  // namespace dentatlas
