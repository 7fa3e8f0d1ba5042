#pragma once

// Rewriter prompt templates, versioned. The stitching rule list keeps its
// original numbering (rule 5 is absent).

#include <string_view>

namespace prefer::prompts {

inline constexpr std::string_view kVersion = "v1";

inline constexpr std::string_view kCompress =
    "Summarize the following review evidence into a short, concise text\n"
    "block while preserving the main content and removing redundancy.";

inline constexpr std::string_view kStitchHeader =
    "You are given three evidence bins from product reviews: HIGH, MID, \n"
    "and LOW.  Your task is to stitch them into one coherent, concise \n"
    "summary grounded in the review evidence provided. Rules:\n"
    "1. Write exactly 3 brief paragraphs in total.\n"
    "2. Paragraph 1 must describe the HIGH cluster. Prioritize it as \n"
    "   the main takeaway.\n"
    "3. Paragraph 2 must describe the MID cluster. Use this bin to add\n"
    "   supporting details and nuance.\n"
    "4. Paragraph 3 must describe the LOW cluster. Use it only for minor\n"
    "   or less common preferences.\n"
    "6. Do not copy the input text verbatim.\n"
    "7. Use phrases such as \"many users\", \"some users\", and \"a few \n"
    "   users\" to reflect evidence strength.\n"
    "Input:";

inline constexpr std::string_view kPolish =
    "Rewrite the following summary so that it is suitable for display \n"
    "to users. Rules:\n"
    "1. Use third-person generalization, remove first-person phrases \n"
    "   such as \"I\", \"me\", \"my\", \"we\".\n"
    "2. Avoid sounding like direct review quotes.\n"
    "3. Preserve the overall meaning, and return one polished paragraph.";

}  // namespace prefer::prompts
