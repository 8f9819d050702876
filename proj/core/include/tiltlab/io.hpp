#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tiltlab/choice_extraction.hpp"
#include "tiltlab/crra_rum.hpp"
#include "tiltlab/outcome_models.hpp"
#include "tiltlab/synthetic.hpp"

// Serialization of pipeline artifacts. Line-delimited files hold one JSON
// object per line; readers throw DataError naming the line that failed.
namespace tiltlab::io {

inline constexpr int kModelsVersion = 1;
inline constexpr int kFitVersion = 1;

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, creating parent directories.
void write_file(const std::filesystem::path& path, std::string_view content);

std::string decisions_to_jsonl(std::span<const extract::PreflopDecision> decisions);
std::vector<extract::PreflopDecision> decisions_from_jsonl(std::string_view text);

std::string gambles_to_jsonl(std::span<const outcome::GambleDecision> decisions);
std::vector<outcome::GambleDecision> gambles_from_jsonl(std::string_view text);

std::string models_to_json(const outcome::OutcomeModels& models);
outcome::OutcomeModels models_from_json(std::string_view text);

struct FitRecord {
  Agent agent = Agent::human;
  Trigger trigger = Trigger::neutral;
  std::size_t n = 0;
  rum::FitConfig config;
  rum::RumFit fit;
};

std::string fit_to_json(const FitRecord& record);
FitRecord fit_from_json(std::string_view text);

/// Failed fit: the cell, the error and every start's diagnostics.
std::string failed_fit_to_json(Agent agent, Trigger trigger, std::size_t n,
                               std::string_view error, std::span<const rum::StartResult> starts);

/// {"agent": "pluribus", "params": {"neutral": {"omega": .., "lambda": ..}, ...}}
synth::AgentProfile profile_from_json(std::string_view text);
std::string profile_to_json(const synth::AgentProfile& profile);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

}  // namespace tiltlab::io
