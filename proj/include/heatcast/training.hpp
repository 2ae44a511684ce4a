#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "heatcast/dataset.hpp"
#include "heatcast/models.hpp"

namespace heatcast::training {

struct TrainConfig {
  std::size_t batch_size = 256;
  double learning_rate = 0.01;
  std::size_t max_epochs = 150;
  std::size_t patience = 10;
  std::uint64_t seed = 42;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;

  std::size_t epochs() const { return val_loss.size(); }
};

// True iff validation loss has not strictly improved (beyond 1e-9) for
// `patience` consecutive epochs.
bool early_stop_check(const TrainHistory& history, std::size_t patience);

// Seeded shuffled mini-batches, ADAM updates, validation after each epoch.
// The model is left holding the parameters of the best validation epoch.
// Per-epoch lines "epoch,train_loss,val_loss" stream to `log` when given.
TrainHistory train(models::ForecastModel& model, const dataset::ChannelScalers& scalers,
                   std::span<const dataset::SampleWindow> train_set,
                   std::span<const dataset::SampleWindow> val_set, const TrainConfig& config,
                   std::ostream* log = nullptr);

using GridPoint = std::map<std::string, double>;

struct GridAxis {
  std::string name;
  std::vector<double> values;
};

struct GridResult {
  GridPoint point;
  std::uint64_t seed = 0;
  double val_loss = 0.0;
};

// Exhaustive Cartesian product over the axes, first axis outermost. Each
// cell trains with a seed derived from (base_seed, cell index); best is the
// lowest validation loss with ties broken by enumeration order.
std::pair<GridResult, std::vector<GridResult>> grid_search(
    const std::vector<GridAxis>& space,
    const std::function<double(const GridPoint&, std::uint64_t)>& train_fn,
    std::uint64_t base_seed);

}  // namespace heatcast::training
