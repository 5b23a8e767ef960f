#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hkt/analysis/decompose.hpp"
#include "hkt/analysis/gram.hpp"
#include "hkt/analysis/info.hpp"

namespace hkt::analysis {

inline constexpr const char* kReportFormat = "hkt-analysis-v1";

std::string decomposition_csv(const DecompositionReport& r);
// level, then mean ||Ms||/||Ma|| per layer
std::string ratio_table_csv(const DecompositionReport& r);
std::string psd_csv(const std::vector<PsdRow>& rows);
std::string info_csv(const InfoReport& r);
std::string gram_csv(const GramReport& r);

// One JSON object per line, each tagged with the format and a "kind".
std::string decomposition_jsonl(const DecompositionReport& r);
std::string psd_jsonl(const std::vector<PsdRow>& rows);
std::string info_jsonl(const InfoReport& r);
std::string gram_jsonl(const GramReport& r);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace hkt::analysis
