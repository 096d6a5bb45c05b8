#include <array>
#include <cctype>
#include <string_view>

#include "agentloop/sandbox.hpp"

namespace agentloop::sandbox {

const char* code_class_name(CodeClass c) {
  switch (c) {
    case CodeClass::Crop: return "Crop";
    case CodeClass::NumericalAnalysis: return "NumericalAnalysis";
    case CodeClass::Mark: return "Mark";
    case CodeClass::Other: return "Other";
  }
  return "?";
}

namespace {

int count_occurrences(std::string_view haystack, std::string_view needle) {
  int n = 0;
  std::size_t pos = 0;
  while ((pos = haystack.find(needle, pos)) != std::string_view::npos) {
    ++n;
    pos += needle.size();
  }
  return n;
}

template <std::size_t N>
int count_any(std::string_view source, const std::array<std::string_view, N>& needles) {
  int n = 0;
  for (auto needle : needles) n += count_occurrences(source, needle);
  return n;
}

// A bare arithmetic expression between two digits, e.g. "3 * 4", which
// catches simple calculator cells that name no math library.
bool has_digit_arithmetic(std::string_view s) {
  auto is_op = [](char c) {
    return c == '+' || c == '-' || c == '*' || c == '/' || c == '%';
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) continue;
    std::size_t j = i + 1;
    while (j < s.size() && (s[j] == ' ' || s[j] == '\t')) ++j;
    if (j >= s.size() || !is_op(s[j])) continue;
    ++j;
    while (j < s.size() && (s[j] == ' ' || s[j] == '\t')) ++j;
    if (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) return true;
  }
  return false;
}

constexpr std::array<std::string_view, 1> kCropPatterns = {".crop("};

constexpr std::array<std::string_view, 10> kMarkPatterns = {
    "ImageDraw",      ".rectangle(",  ".ellipse(",   ".polygon(",  ".annotate(",
    "cv2.rectangle",  "cv2.circle",   "cv2.putText", "add_patch(", ".line(",
};

constexpr std::array<std::string_view, 12> kImagePatterns = {
    "image_",  "Image.",   "PIL",      "cv2",      "imshow",   "imread",
    ".resize(", ".rotate(", ".convert(", ".filter(", "plt.",    ".crop(",
};

constexpr std::array<std::string_view, 12> kNumericPatterns = {
    "math.",  "np.",     "numpy",  "sympy", "statistics.", "sum(",
    "sqrt",   "mean(",   "std(",   "len(",  "round(",      "**",
};

}  // namespace

// Ordered heuristic: cropping dominates marking when both appear (a crop
// followed by drawing on the crop is still a zoom-in), any drawing wins over
// plain image work, and pure computation without image access is numerical.
CodeClass classify_code(std::string_view source) {
  int crop = count_any(source, kCropPatterns);
  int mark = count_any(source, kMarkPatterns);
  if (crop > 0 && crop >= mark) return CodeClass::Crop;
  if (mark > 0) return CodeClass::Mark;
  bool touches_image = count_any(source, kImagePatterns) > 0;
  bool numeric = count_any(source, kNumericPatterns) > 0 || has_digit_arithmetic(source);
  if (!touches_image && numeric) return CodeClass::NumericalAnalysis;
  return CodeClass::Other;
}

}  // namespace agentloop::sandbox
