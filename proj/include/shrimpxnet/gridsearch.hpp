#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "shrimpxnet/config.hpp"
#include "shrimpxnet/trainer.hpp"

namespace sxn {

using GridAxes = std::vector<std::pair<std::string, std::vector<std::string>>>;

struct GridCell {
  std::vector<std::pair<std::string, std::string>> assignment;  // axis -> value
  double val_accuracy = 0.0;      // best epoch's validation accuracy
  double val_loss = 0.0;          // validation loss at that epoch
  std::int64_t best_epoch = -1;
  std::int64_t epochs_ran = 0;
  bool diverged = false;
};

struct GridSearchResult {
  std::vector<GridCell> ranked;   // best first
  PipelineConfig best_config;
  TrainResult best_run;
};

// Trains the Cartesian product of the axes (last axis fastest) and ranks
// cells by validation accuracy, breaking ties by lower validation loss
// and then by enumeration order. Cells whose training diverges are kept
// as rows but ranked last.
inline GridSearchResult grid_search(const GridAxes& axes, const PipelineConfig& base,
                                    const DatasetSplit& data) {
  if (axes.empty()) throw ConfigError("grid search needs at least one axis");
  bool has_freeze = false, has_lr = false;
  for (const auto& [name, values] : axes) {
    if (values.empty()) throw ConfigError("grid axis '" + name + "' has an empty value list");
    if (name == "freeze_depth") has_freeze = true;
    if (name == "initial_lr") has_lr = true;
  }
  if (!has_freeze || !has_lr) {
    throw ConfigError("grid axes must include freeze_depth and initial_lr");
  }

  std::size_t cell_count = 1;
  for (const auto& [name, values] : axes) cell_count *= values.size();

  std::vector<GridCell> cells;
  TrainResult best_run;
  PipelineConfig best_config = base;
  std::size_t best_index = 0;
  bool have_best = false;

  std::vector<std::size_t> odometer(axes.size(), 0);
  for (std::size_t cell_idx = 0; cell_idx < cell_count; ++cell_idx) {
    GridCell cell;
    PipelineConfig cfg = base;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const std::string& value = axes[a].second[odometer[a]];
      apply_config_override(cfg, axes[a].first, value, "grid axis " + axes[a].first);
      cell.assignment.emplace_back(axes[a].first, value);
    }

    try {
      cfg.model.validate();
      TrainResult run = train(cfg.train, cfg.model, data);
      for (const EpochStats& row : run.history.epochs) {
        if (cell.best_epoch < 0 || row.val_acc > cell.val_accuracy) {
          cell.val_accuracy = row.val_acc;
          cell.val_loss = row.val_loss;
          cell.best_epoch = row.epoch;
        }
      }
      cell.epochs_ran = static_cast<std::int64_t>(run.history.epochs.size());
      const bool better =
          !have_best || cell.val_accuracy > cells[best_index].val_accuracy ||
          (cell.val_accuracy == cells[best_index].val_accuracy &&
           cell.val_loss < cells[best_index].val_loss);
      if (better) {
        best_run = std::move(run);
        best_config = cfg;
        best_index = cells.size();
        have_best = true;
      }
    } catch (const NumericError&) {
      cell.diverged = true;
      cell.val_accuracy = 0.0;
      cell.val_loss = std::numeric_limits<double>::infinity();
    }
    cells.push_back(std::move(cell));

    for (std::size_t a = axes.size(); a-- > 0;) {
      if (++odometer[a] < axes[a].second.size()) break;
      odometer[a] = 0;
    }
  }

  if (!have_best) throw NumericError("every grid cell diverged");

  std::vector<std::size_t> order(cells.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&cells](std::size_t a, std::size_t b) {
    if (cells[a].val_accuracy != cells[b].val_accuracy) {
      return cells[a].val_accuracy > cells[b].val_accuracy;
    }
    if (cells[a].val_loss != cells[b].val_loss) return cells[a].val_loss < cells[b].val_loss;
    return a < b;
  });

  GridSearchResult result;
  for (std::size_t i : order) result.ranked.push_back(std::move(cells[i]));
  result.best_config = std::move(best_config);
  result.best_run = std::move(best_run);
  return result;
}

// Tab-separated result table: axis columns, then metrics, ranked rows.
inline std::string grid_table_text(const GridAxes& axes, const std::vector<GridCell>& ranked) {
  std::string out;
  for (const auto& [name, values] : axes) {
    out += name;
    out += '\t';
  }
  out += "val_accuracy\tval_loss\tbest_epoch\tepochs\tstatus\n";
  char buf[96];
  for (const GridCell& cell : ranked) {
    for (const auto& [axis, value] : cell.assignment) {
      out += value;
      out += '\t';
    }
    std::snprintf(buf, sizeof(buf), "%.6f\t%.6f\t%lld\t%lld\t%s\n", cell.val_accuracy,
                  cell.val_loss, static_cast<long long>(cell.best_epoch),
                  static_cast<long long>(cell.epochs_ran), cell.diverged ? "diverged" : "ok");
    out += buf;
  }
  return out;
}

}  // namespace sxn
