#include "lowmt/model.hpp"

#include <algorithm>
#include <map>

namespace lowmt {

TokenDict build_dict(const std::vector<std::vector<std::string>>& sentences) {
  std::map<std::string, uint64_t> freq;
  for (const auto& sent : sentences)
    for (const auto& tok : sent) freq[tok]++;
  std::vector<std::pair<std::string, uint64_t>> types(freq.begin(), freq.end());
  std::sort(types.begin(), types.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return TokenDict::build(types);
}

}  // namespace lowmt
