#pragma once

#include <string>

namespace promptecho {

// Versioned prompt templates for the external adapters. The text lives
// under assets/ and is embedded verbatim at build time; the version names
// are recorded in run configs so results stay attributable.
inline constexpr const char* kJudgeTemplateVersion = "judge_pairwise_v1";
inline constexpr const char* kLabelExtractionTemplateVersion = "label_extraction_v1";
inline constexpr const char* kOcrRewardTemplateVersion = "ocr_reward_query_v1";
inline constexpr const char* kTextEvalTemplateVersion = "text_eval_v1";

const std::string& judge_pairwise_template();
const std::string& label_extraction_template();
const std::string& ocr_reward_template();
const std::string& text_eval_template();

/// Replaces every "{prompt}" placeholder in the template.
std::string fill_template(const std::string& tmpl, const std::string& prompt);

}  // namespace promptecho
