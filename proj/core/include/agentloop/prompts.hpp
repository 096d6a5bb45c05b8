#pragma once

#include <string>
#include <string_view>

namespace agentloop::prompts {

// Prompt texts mirror the deployed agent verbatim, including its typos;
// they are part of the wire format, not editorial content.
std::string_view system_prompt();
std::string_view user_prompt_template();          // contains "{Question}"
std::string_view no_tool_system_prompt();
std::string_view no_tool_user_prompt_template();  // contains "{Question}"

std::string render_user_prompt(std::string_view question);
std::string render_no_tool_user_prompt(std::string_view question);

// Injected as a user message after an invalid turn; quotes the format rule
// the model was originally given.
std::string_view format_corrective_message();

// Source of the persistent notebook kernel, for the default `python3 -c`
// launch of sandbox sessions.
std::string_view sandbox_kernel_source();

}  // namespace agentloop::prompts
