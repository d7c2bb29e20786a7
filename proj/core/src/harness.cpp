#include "dueb/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace dueb {
namespace {

// Distinct repeats land far apart in every seeded stream.
constexpr std::uint64_t kRepeatStride = 1000;

std::string fmt(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<int> denominators_of(const std::vector<AblationCell>& cells) {
  std::vector<int> d;
  for (const auto& c : cells)
    if (std::find(d.begin(), d.end(), c.denominator) == d.end()) d.push_back(c.denominator);
  std::sort(d.begin(), d.end());
  return d;
}

struct Row {
  LossCombo combo;
  int sign;
};

std::vector<Row> rows_of(const std::vector<AblationCell>& cells) {
  std::vector<Row> rows;
  for (const int sign : {+1, -1})
    for (const LossCombo combo : kAllCombos) {
      if (sign == -1 && !combo_uses_energy(combo)) continue;
      const bool present = std::any_of(cells.begin(), cells.end(), [&](const AblationCell& c) {
        return c.combo == combo && (!combo_uses_energy(combo) || c.energy_sign == sign);
      });
      if (present || (cells.empty() && sign == +1)) rows.push_back({combo, sign});
    }
  return rows;
}

bool in_row(const AblationCell& c, const Row& r) {
  return c.combo == r.combo && (!combo_uses_energy(r.combo) || c.energy_sign == r.sign);
}

}  // namespace

std::string combo_name(LossCombo c) {
  switch (c) {
    case LossCombo::kNone: return "ce_only";
    case LossCombo::kAle: return "ce+ale";
    case LossCombo::kEnergy: return "ce+energy";
    case LossCombo::kBoth: return "ce+ale+energy";
  }
  return "?";
}

bool combo_uses_ale(LossCombo c) { return c == LossCombo::kAle || c == LossCombo::kBoth; }
bool combo_uses_energy(LossCombo c) { return c == LossCombo::kEnergy || c == LossCombo::kBoth; }

std::string row_name(LossCombo combo, int energy_sign) {
  std::string name = combo_name(combo);
  if (combo_uses_energy(combo) && energy_sign == -1) name += " (sign -1)";
  return name;
}

TrainConfig cell_config(const TrainConfig& base, int denominator, LossCombo combo, int repeat,
                        int energy_sign) {
  TrainConfig cfg = base;
  if (combo_uses_energy(combo)) cfg.loss.energy_sign = energy_sign;
  cfg.labeled_denominator = denominator;
  cfg.loss.use_ale = combo_uses_ale(combo);
  cfg.loss.use_energy = combo_uses_energy(combo);
  const std::uint64_t shift = kRepeatStride * static_cast<std::uint64_t>(repeat);
  cfg.seed_c = base.seed_c + shift;
  cfg.seed_p = base.seed_p + shift;
  cfg.seed_data = base.seed_data + shift;
  cfg.seed_noise = base.seed_noise + shift;
  cfg.partition_seed = base.partition_seed + shift;
  validate(cfg);
  return cfg;
}

double default_cell_runner(const TrainConfig& cfg, const std::filesystem::path& dir) {
  Trainer t(cfg, dir);
  t.run();
  return t.best_miou();
}

std::vector<AblationCell> run_grid(const TrainConfig& base, const GridOptions& opts,
                                   const CellRunner& runner) {
  if (opts.repeats < 1) throw std::invalid_argument("run_grid: repeats must be >= 1");
  if (opts.denominators.empty()) throw std::invalid_argument("run_grid: no fractions");
  const std::vector<int> signs =
      opts.energy_signs.empty() ? std::vector<int>{base.loss.energy_sign} : opts.energy_signs;
  for (const int sign : signs)
    if (sign != 1 && sign != -1) throw std::invalid_argument("run_grid: energy sign must be +1 or -1");

  std::vector<AblationCell> cells;
  for (const int den : opts.denominators)
    for (const LossCombo combo : kAllCombos)
      for (std::size_t si = 0; si < signs.size(); ++si) {
        if (si > 0 && !combo_uses_energy(combo)) break;
        const int sign = combo_uses_energy(combo) ? signs[si] : base.loss.energy_sign;
        for (int r = 0; r < opts.repeats; ++r) {
          AblationCell c;
          c.denominator = den;
          c.combo = combo;
          c.energy_sign = sign;
          c.repeat = r;
          c.seed = base.seed_c + kRepeatStride * static_cast<std::uint64_t>(r);
          if (!opts.out_dir.empty()) {
            std::string name = "f" + std::to_string(den) + "_" + combo_name(combo);
            if (combo_uses_energy(combo) && sign == -1) name += "_neg";
            c.dir = opts.out_dir / (name + "_r" + std::to_string(r));
          }
          cells.push_back(std::move(c));
        }
      }

  if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);
  std::mutex log_mu;
  const auto log_path = opts.out_dir / "grid.jsonl";

  auto run_cell = [&](AblationCell& c) {
    try {
      const TrainConfig cfg = cell_config(base, c.denominator, c.combo, c.repeat, c.energy_sign);
      c.miou = runner(cfg, c.dir);
    } catch (const std::exception& e) {
      c.miou.reset();
      c.error = e.what();
    }
    if (!opts.out_dir.empty()) {
      std::lock_guard lock(log_mu);
      std::ofstream(log_path, std::ios::app) << to_json_line(c) << "\n";
    }
  };

  const int jobs = std::max(1, std::min<int>(opts.jobs, static_cast<int>(cells.size())));
  if (jobs == 1) {
    for (auto& c : cells) run_cell(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(cells[i]);
      });
    for (auto& t : pool) t.join();
  }
  return cells;
}

std::vector<CellSummary> summarize(const std::vector<AblationCell>& cells) {
  std::vector<CellSummary> out;
  for (const Row& row : rows_of(cells))
    for (const int den : denominators_of(cells)) {
      CellSummary s;
      s.denominator = den;
      s.combo = row.combo;
      s.energy_sign = row.sign;
      double sum = 0.0;
      for (const auto& c : cells) {
        if (!in_row(c, row) || c.denominator != den) continue;
        if (c.miou) {
          sum += *c.miou;
          ++s.completed;
        } else {
          ++s.failed;
        }
      }
      if (s.completed > 0) s.mean = sum / s.completed;
      out.push_back(s);
    }
  return out;
}

std::string render_table(const std::vector<AblationCell>& cells) {
  const auto summary = summarize(cells);
  if (std::none_of(summary.begin(), summary.end(), [](const CellSummary& s) { return s.mean; }))
    return "no results\n";

  const auto dens = denominators_of(cells);
  std::ostringstream os;
  os << "| losses |";
  for (const int d : dens) os << " 1/" << d << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < dens.size(); ++i) os << "---|";
  os << "\n";
  for (const Row& row : rows_of(cells)) {
    os << "| " << row_name(row.combo, row.sign) << " |";
    for (const int d : dens) {
      const auto it = std::find_if(summary.begin(), summary.end(), [&](const CellSummary& s) {
        return s.combo == row.combo && s.energy_sign == row.sign && s.denominator == d;
      });
      os << " ";
      if (it->mean) os << fmt(100.0 * *it->mean);
      else os << "n/a";
      if (it->failed > 0) os << " (" << it->failed << " failed)";
      os << " |";
    }
    os << "\n";
  }
  os << "\nmIoU in percent, mean over completed repeats.\n";
  return os.str();
}

std::string render_plot(const std::vector<AblationCell>& cells) {
  constexpr int kW = 480, kH = 320, kLeft = 60, kRight = 150, kTop = 20, kBottom = 50;
  static const char* kColors[] = {"#444444", "#1f77b4", "#2ca02c", "#d62728", "#98df8a", "#ff9896"};
  const auto summary = summarize(cells);
  auto dens = denominators_of(cells);
  std::sort(dens.rbegin(), dens.rend());  // smallest fraction on the left

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  double lo = 1.0, hi = 0.0;
  for (const auto& s : summary)
    if (s.mean) {
      lo = std::min(lo, *s.mean);
      hi = std::max(hi, *s.mean);
    }
  if (lo > hi) {
    os << "<text x=\"" << kW / 2 << "\" y=\"" << kH / 2
       << "\" text-anchor=\"middle\">no results</text>\n</svg>\n";
    return os.str();
  }
  if (hi - lo < 1e-3) {
    lo -= 0.01;
    hi += 0.01;
  }
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](std::size_t i) {
    return kLeft + (dens.size() == 1 ? pw / 2 : pw * static_cast<double>(i) / (dens.size() - 1));
  };
  auto py = [&](double v) { return kTop + ph * (1.0 - (v - lo) / (hi - lo)); };

  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\""
     << kTop + ph << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
     << kTop + ph << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < dens.size(); ++i)
    os << "<text x=\"" << px(i) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">1/"
       << dens[i] << "</text>\n";
  for (const double v : {lo, (lo + hi) / 2, hi})
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">"
       << fmt(100.0 * v, 1) << "</text>\n";
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 10
     << "\" text-anchor=\"middle\">labeled fraction</text>\n"
     << "<text x=\"14\" y=\"" << kTop + ph / 2 << "\" transform=\"rotate(-90 14 " << kTop + ph / 2
     << ")\" text-anchor=\"middle\">val mIoU (%)</text>\n";

  const auto rows = rows_of(cells);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Row& row = rows[k];
    std::string points;
    for (std::size_t i = 0; i < dens.size(); ++i) {
      for (const auto& s : summary)
        if (s.combo == row.combo && s.energy_sign == row.sign && s.denominator == dens[i] &&
            s.mean) {
          points += fmt(px(i), 1) + "," + fmt(py(*s.mean), 1) + " ";
          os << "<circle cx=\"" << fmt(px(i), 1) << "\" cy=\"" << fmt(py(*s.mean), 1)
             << "\" r=\"3\" fill=\"" << kColors[k] << "\"/>\n";
        }
    }
    if (!points.empty())
      os << "<polyline fill=\"none\" stroke=\"" << kColors[k] << "\" stroke-width=\"2\" points=\""
         << points << "\"/>\n";
    const double ly = kTop + 16.0 * static_cast<double>(k) + 8;
    os << "<line x1=\"" << kW - kRight + 12 << "\" y1=\"" << ly << "\" x2=\"" << kW - kRight + 32
       << "\" y2=\"" << ly << "\" stroke=\"" << kColors[k] << "\" stroke-width=\"2\"/>\n"
       << "<text x=\"" << kW - kRight + 38 << "\" y=\"" << ly + 4 << "\">" << row_name(row.combo, row.sign)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void report(const std::vector<AblationCell>& cells, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "grid.md") << render_table(cells);
  std::ofstream(dir / "grid.svg") << render_plot(cells);
}

TrendCheck trend_check(const std::vector<AblationCell>& cells, int denominator, int energy_sign) {
  TrendCheck t;
  t.denominator = denominator;
  t.energy_sign = energy_sign;
  std::map<int, std::pair<std::optional<double>, std::optional<double>>> by_repeat;
  double sb = 0.0, sc = 0.0;
  int nb = 0, nc = 0;
  for (const auto& c : cells) {
    if (c.denominator != denominator || !c.miou) continue;
    if (c.combo == LossCombo::kNone) {
      sb += *c.miou;
      ++nb;
      by_repeat[c.repeat].first = c.miou;
    } else if (c.combo == LossCombo::kBoth && c.energy_sign == energy_sign) {
      sc += *c.miou;
      ++nc;
      by_repeat[c.repeat].second = c.miou;
    }
  }
  if (nb > 0) t.baseline = sb / nb;
  if (nc > 0) t.combined = sc / nc;
  t.holds = t.baseline && t.combined && *t.combined >= *t.baseline;

  std::ostringstream os;
  os << "repeat  " << combo_name(LossCombo::kNone) << "  " << row_name(LossCombo::kBoth, energy_sign)
     << "\n";
  auto cell = [](const std::optional<double>& v) { return v ? fmt(100.0 * *v) : std::string("n/a"); };
  for (const auto& [r, v] : by_repeat) os << r << "  " << cell(v.first) << "  " << cell(v.second) << "\n";
  os << "mean  " << cell(t.baseline) << "  " << cell(t.combined) << "\n";
  t.per_seed = os.str();
  return t;
}

std::string to_json_line(const AblationCell& cell) {
  nlohmann::json j;
  j["fraction"] = "1/" + std::to_string(cell.denominator);
  j["combo"] = combo_name(cell.combo);
  j["use_ale"] = cell.use_ale();
  j["use_energy"] = cell.use_energy();
  j["energy_sign"] = cell.energy_sign;
  j["repeat"] = cell.repeat;
  j["seed"] = cell.seed;
  j["miou"] = cell.miou ? nlohmann::json(*cell.miou) : nlohmann::json(nullptr);
  j["status"] = cell.error.empty() ? "ok" : "failed";
  if (!cell.error.empty()) j["error"] = cell.error;
  return j.dump();
}

}  // namespace dueb
