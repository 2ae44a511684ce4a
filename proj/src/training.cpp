#include "heatcast/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace heatcast::training {

namespace {

constexpr double kImprovementEps = 1e-9;

double dataset_loss(models::ForecastModel& model, const dataset::ChannelScalers& scalers,
                    std::span<const dataset::SampleWindow> windows) {
  double total = 0.0;
  for (const dataset::SampleWindow& w : windows) {
    autograd::Tape tape;
    const autograd::Tensor pred = model.forward_window(tape, w, scalers);
    double acc = 0.0;
    for (std::size_t i = 0; i < w.target.size(); ++i) {
      const double d = pred.vals()[i] - scalers.target.scale(w.target[i]);
      acc += d * d;
    }
    total += acc / static_cast<double>(w.target.size());
  }
  return total / static_cast<double>(windows.size());
}

std::vector<std::vector<double>> snapshot(const std::vector<autograd::Tensor>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.vals());
  return out;
}

void restore(std::vector<autograd::Tensor>& params, const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].vals() = snap[i];
}

}  // namespace

bool early_stop_check(const TrainHistory& history, std::size_t patience) {
  if (history.val_loss.empty()) throw ContractError("early_stop_check: empty history");
  double best = history.val_loss.front();
  std::size_t stale = 0;
  for (std::size_t e = 1; e < history.val_loss.size(); ++e) {
    if (history.val_loss[e] < best - kImprovementEps) {
      best = history.val_loss[e];
      stale = 0;
    } else {
      ++stale;
    }
  }
  return stale >= patience;
}

TrainHistory train(models::ForecastModel& model, const dataset::ChannelScalers& scalers,
                   std::span<const dataset::SampleWindow> train_set,
                   std::span<const dataset::SampleWindow> val_set, const TrainConfig& config,
                   std::ostream* log) {
  if (train_set.empty()) throw ContractError("train: empty training set");
  if (val_set.empty()) throw ContractError("train: empty validation set");
  if (config.batch_size < 1) throw ContractError("train: batch_size must be >= 1");
  if (config.patience < 1) throw ContractError("train: patience must be >= 1");

  TrainHistory history;
  if (config.max_epochs == 0) return history;

  std::vector<autograd::Tensor> params = model.parameters();
  autograd::AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  autograd::AdamState adam(params, adam_cfg);

  std::vector<std::vector<double>> best_params = snapshot(params);
  double best_val = std::numeric_limits<double>::infinity();

  const Rng base(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    Rng rng = base.fork(epoch);
    rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::size_t batch = end - begin;

      autograd::Tape tape;
      autograd::Tensor batch_loss;
      bool first = true;
      for (std::size_t i = begin; i < end; ++i) {
        const dataset::SampleWindow& w = train_set[order[i]];
        autograd::Tensor pred = model.forward_window(tape, w, scalers);
        std::vector<double> target_scaled(w.target.size());
        for (std::size_t k = 0; k < w.target.size(); ++k) {
          target_scaled[k] = scalers.target.scale(w.target[k]);
        }
        autograd::Tensor target({w.target.size()}, std::move(target_scaled));
        autograd::Tensor loss = autograd::mse_loss(tape, pred, target);
        batch_loss = first ? loss : autograd::add(tape, batch_loss, loss);
        first = false;
      }
      batch_loss = autograd::scale(tape, batch_loss, 1.0 / static_cast<double>(batch));

      const double loss_value = batch_loss.value();
      if (!std::isfinite(loss_value)) {
        throw TrainingError("training diverged (non-finite loss) at epoch " +
                            std::to_string(epoch) + "; last finite epoch was " +
                            (history.val_loss.empty()
                                 ? std::string("none")
                                 : std::to_string(history.val_loss.size() - 1)));
      }
      epoch_loss += loss_value * static_cast<double>(batch);
      seen += batch;

      autograd::zero_grads(params);
      autograd::backward(tape, batch_loss);
      adam.step(params);
    }

    const double train_loss = epoch_loss / static_cast<double>(seen);
    const double val_loss = dataset_loss(model, scalers, val_set);
    if (!std::isfinite(val_loss)) {
      throw TrainingError("validation diverged (non-finite loss) at epoch " +
                          std::to_string(epoch) + "; last finite epoch was " +
                          (history.val_loss.empty()
                               ? std::string("none")
                               : std::to_string(history.val_loss.size() - 1)));
    }
    history.train_loss.push_back(train_loss);
    history.val_loss.push_back(val_loss);
    if (val_loss < best_val - kImprovementEps) {
      best_val = val_loss;
      history.best_epoch = epoch;
      best_params = snapshot(params);
    }
    if (log != nullptr) {
      (*log) << epoch << ',' << format_g17(train_loss) << ',' << format_g17(val_loss) << '\n';
    }
    if (early_stop_check(history, config.patience)) break;
  }

  restore(params, best_params);
  return history;
}

std::pair<GridResult, std::vector<GridResult>> grid_search(
    const std::vector<GridAxis>& space,
    const std::function<double(const GridPoint&, std::uint64_t)>& train_fn,
    std::uint64_t base_seed) {
  if (space.empty()) throw ContractError("grid_search: empty space");
  for (const GridAxis& axis : space) {
    if (axis.values.empty()) {
      throw ContractError("grid_search: axis '" + axis.name + "' has no values");
    }
  }
  std::size_t cells = 1;
  for (const GridAxis& axis : space) cells *= axis.values.size();

  std::vector<GridResult> results;
  results.reserve(cells);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    GridPoint point;
    std::size_t rem = cell;
    // First axis outermost.
    for (auto it = space.rbegin(); it != space.rend(); ++it) {
      point[it->name] = it->values[rem % it->values.size()];
      rem /= it->values.size();
    }
    GridResult r;
    r.point = std::move(point);
    r.seed = splitmix64(base_seed + cell);
    r.val_loss = train_fn(r.point, r.seed);
    results.push_back(std::move(r));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < results.size(); ++i) {
    if (results[i].val_loss < results[best].val_loss) best = i;
  }
  return {results[best], results};
}

}  // namespace heatcast::training
