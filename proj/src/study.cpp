#include "liverstage/volume.hpp"

namespace liverstage {

const std::vector<std::string>& canonical_modalities() {
  static const std::vector<std::string> names = {"T1",   "T2",   "DWI", "GED1",
                                                 "GED2", "GED3", "GED4"};
  return names;
}

std::vector<std::string> channels_for_mode(ContrastMode mode) {
  const auto& all = canonical_modalities();
  if (mode == ContrastMode::NonContrast)
    return {all.begin(), all.begin() + 3};
  return all;
}

std::vector<std::pair<std::string, const Volume*>> Study::ordered_modalities() const {
  std::vector<std::pair<std::string, const Volume*>> out;
  for (const auto& name : canonical_modalities()) {
    auto it = modalities.find(name);
    if (it != modalities.end()) out.emplace_back(name, &it->second);
  }
  return out;
}

void Study::validate() const {
  if (!has("GED4"))
    throw std::runtime_error("study " + subject_id + " is missing GED4");
  if (stage && (*stage < 1 || *stage > 4))
    throw std::runtime_error("study " + subject_id + " has stage outside 1..4");
  for (const auto& [name, vol] : modalities) {
    bool known = false;
    for (const auto& c : canonical_modalities())
      if (c == name) known = true;
    if (!known) throw std::runtime_error("unknown modality name: " + name);
    vol.validate();
  }
}

}  // namespace liverstage
