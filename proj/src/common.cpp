#include "obqa/common.hpp"

#include <algorithm>
#include <cctype>

namespace obqa {

std::string_view to_string(Ynn ynn) {
  switch (ynn) {
    case Ynn::kYes:
      return "yes";
    case Ynn::kNo:
      return "no";
    case Ynn::kNone:
      return "none";
  }
  return "none";
}

std::optional<Ynn> parse_ynn(std::string_view text) {
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lowered == "yes") return Ynn::kYes;
  if (lowered == "no") return Ynn::kNo;
  if (lowered == "none") return Ynn::kNone;
  return std::nullopt;
}

}  // namespace obqa
