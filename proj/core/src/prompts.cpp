#include "agentloop/prompts.hpp"

#include "agentloop_assets/no_tool_system_prompt.hpp"
#include "agentloop_assets/no_tool_user_prompt.hpp"
#include "agentloop_assets/sandbox_kernel.hpp"
#include "agentloop_assets/system_prompt.hpp"
#include "agentloop_assets/user_prompt.hpp"

namespace agentloop::prompts {

namespace {

constexpr std::string_view kQuestionSlot = "{Question}";

std::string substitute_question(std::string_view tpl, std::string_view question) {
  std::string out(tpl);
  auto pos = out.find(kQuestionSlot);
  if (pos != std::string::npos) out.replace(pos, kQuestionSlot.size(), question);
  return out;
}

// Restates the format rule the system/user prompts already imposed; injected
// when a turn fails to parse so training traces show one consistent nudge.
constexpr std::string_view kCorrective =
    "Your last response was not in the required format and has been ignored. "
    "Format strictly as <think> </think> <code> </code>(if code is needed) or "
    "<think> </think> <tool_call> </tool_call>(if function call is needed) or "
    "<think> </think> <answer> </answer>. Please continue.";

}  // namespace

std::string_view system_prompt() { return assets::system_prompt; }
std::string_view user_prompt_template() { return assets::user_prompt; }
std::string_view no_tool_system_prompt() { return assets::no_tool_system_prompt; }
std::string_view no_tool_user_prompt_template() { return assets::no_tool_user_prompt; }

std::string render_user_prompt(std::string_view question) {
  return substitute_question(assets::user_prompt, question);
}

std::string render_no_tool_user_prompt(std::string_view question) {
  return substitute_question(assets::no_tool_user_prompt, question);
}

std::string_view format_corrective_message() { return kCorrective; }

std::string_view sandbox_kernel_source() { return assets::sandbox_kernel; }

}  // namespace agentloop::prompts
