#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dueb/trainer.hpp"

namespace dueb {

/// Which extra losses sit on top of the cross-entropy terms. Order matches
/// the ablation table rows.
enum class LossCombo { kNone = 0, kAle, kEnergy, kBoth };
inline constexpr std::array<LossCombo, 4> kAllCombos = {LossCombo::kNone, LossCombo::kAle,
                                                        LossCombo::kEnergy, LossCombo::kBoth};
std::string combo_name(LossCombo c);
bool combo_uses_ale(LossCombo c);
bool combo_uses_energy(LossCombo c);

struct AblationCell {
  int denominator = 16;
  LossCombo combo = LossCombo::kNone;
  int energy_sign = +1;  // only meaningful when the combo uses the energy term
  int repeat = 0;
  std::uint64_t seed = 0;  // seed_c of the run; the other seeds move with it
  std::optional<double> miou;
  std::string error;  // non-empty when the run failed
  std::filesystem::path dir;

  [[nodiscard]] bool use_ale() const { return combo_uses_ale(combo); }
  [[nodiscard]] bool use_energy() const { return combo_uses_energy(combo); }
};

/// Config of one cell. Runs of the same (fraction, repeat) share every seed,
/// so configs of different combos differ only in the use_ale / use_energy
/// flags; different repeats get disjoint seeds.
TrainConfig cell_config(const TrainConfig& base, int denominator, LossCombo combo, int repeat,
                        int energy_sign = +1);

/// Row label of a (combo, sign) pair; the sign shows only for energy combos
/// with sign -1.
std::string row_name(LossCombo combo, int energy_sign);

/// Trains one cell and returns its validation mIoU.
using CellRunner = std::function<double(const TrainConfig&, const std::filesystem::path&)>;
double default_cell_runner(const TrainConfig& cfg, const std::filesystem::path& dir);

struct GridOptions {
  std::vector<int> denominators = {4, 8, 16};
  int repeats = 3;
  /// Energy signs to try; combos without the energy term run once. Empty:
  /// the base config's sign.
  std::vector<int> energy_signs;
  std::filesystem::path out_dir;  // empty: nothing written
  int jobs = 1;                   // cells trained concurrently
};

/// One independent trainer per (fraction, combo, repeat). Failed cells are
/// recorded with their error and the grid is still returned. Appends one
/// record per cell to <out>/grid.jsonl.
std::vector<AblationCell> run_grid(const TrainConfig& base, const GridOptions& opts,
                                   const CellRunner& runner = default_cell_runner);

struct CellSummary {
  int denominator = 0;
  LossCombo combo{};
  int energy_sign = +1;
  std::optional<double> mean;
  int completed = 0;
  int failed = 0;
};

/// Mean mIoU per (row, fraction). Rows follow the combo order, energy sign
/// +1 rows first, then the sign -1 rows.
std::vector<CellSummary> summarize(const std::vector<AblationCell>& cells);

/// Markdown grid (rows = combos, columns = fractions); "no results" when
/// nothing completed.
std::string render_table(const std::vector<AblationCell>& cells);
/// SVG line plot of mean mIoU vs labeled fraction, one line per combo.
std::string render_plot(const std::vector<AblationCell>& cells);

/// Writes grid.md and grid.svg into `dir`.
void report(const std::vector<AblationCell>& cells, const std::filesystem::path& dir);

struct TrendCheck {
  int denominator = 16;
  int energy_sign = +1;
  std::optional<double> baseline;
  std::optional<double> combined;
  bool holds = false;     // combined >= baseline
  std::string per_seed;   // table of per-seed values
};

/// Directional check: mean mIoU with both extra losses vs without either.
TrendCheck trend_check(const std::vector<AblationCell>& cells, int denominator = 16,
                       int energy_sign = +1);

std::string to_json_line(const AblationCell& cell);

}  // namespace dueb
