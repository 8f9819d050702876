#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tiltlab/analysis.hpp"
#include "tiltlab/hand_history.hpp"
#include "tiltlab/outcome_models.hpp"

namespace tiltlab::pipeline {

struct RunConfig {
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> inputs;
  hands::HandFormat format = hands::HandFormat::canonical;
  std::optional<std::filesystem::path> alias_map;  // required for pluribus-raw
  std::set<std::string> exclude_games;
  hands::RawFormatOptions raw;
  outcome::WinModelConfig win;
  rum::FitConfig fit;
  std::size_t bootstrap = 500;
  std::size_t refit_random_starts = 0;
  analysis::HistogramConfig histogram;
  unsigned workers = 0;
  std::filesystem::path out_dir = "tiltlab-out";
};

/// Reads a JSON run configuration. Relative input and alias-map paths resolve
/// against `base_dir`. Unknown keys are rejected so typos do not pass silently.
RunConfig run_config_from_json(std::string_view text, const std::filesystem::path& base_dir = {});

/// The configuration echo written into every run directory. The output
/// directory is left out so that the echo, and with it the manifest, depends
/// only on the inputs and settings.
std::string run_config_to_json(const RunConfig& config);

enum class ErrorKind { data, numerical };

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, ErrorKind kind, const std::string& message);
  const std::string& stage() const { return stage_; }
  ErrorKind kind() const { return kind_; }

 private:
  std::string stage_;
  ErrorKind kind_;
};

struct Artifact {
  std::string path;  // relative to the run directory, '/' separated
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunResult {
  std::filesystem::path out_dir;
  std::vector<Artifact> artifacts;  // sorted by path, manifest excluded
};

/// Fit settings for one cell: `base` with a seed derived from base.seed and the cell.
rum::FitConfig cell_fit_config(const rum::FitConfig& base, Agent agent, Trigger trigger);

/// Fits every agent x state cell. A cell whose fit fails is recorded in
/// `failures` (with its per-start diagnostics as JSON) instead of aborting.
struct FitStageResult {
  analysis::FitTable fits;
  std::vector<std::pair<analysis::FitKey, std::string>> failures;  // key, failure JSON
};

FitStageResult fit_all_cells(std::span<const outcome::GambleDecision> decisions,
                             const rum::FitConfig& fit);

struct AnalysisConfig {
  std::size_t bootstrap = 500;
  std::size_t refit_random_starts = 0;
  std::uint64_t seed = 0;
  rum::FitConfig refit;
  analysis::HistogramConfig histogram;
  unsigned workers = 0;
};

/// Writes table1, table4, table5, comparisons, fold_rates and fig4_hist CSVs
/// into `out_dir` and returns their paths. Comparisons cover Pluribus vs Human
/// in each state and, per agent, post_loss and post_win vs neutral; a pair
/// missing a fit gets a row with an empty p-value and method "not-run".
std::vector<std::filesystem::path> write_reports(std::span<const outcome::GambleDecision> decisions,
                                                 const analysis::FitTable& fits,
                                                 const AnalysisConfig& config,
                                                 const std::filesystem::path& out_dir);

/// ingest -> extract -> fit-outcomes -> build gambles -> fit-rum (2 agents x 3
/// states) -> analyze, then manifest.json listing every file with its SHA-256.
/// On a stage failure everything written so far moves under out_dir/failed/
/// together with error.txt, and StageError is thrown.
RunResult run_pipeline(const RunConfig& config);

/// Hashes every regular file under `dir` except manifest.json and writes
/// manifest.json. Paths are relative and sorted.
std::vector<Artifact> write_manifest(const std::filesystem::path& dir);

std::string fit_file_name(Agent agent, Trigger trigger);

}  // namespace tiltlab::pipeline
