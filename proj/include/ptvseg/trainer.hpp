#pragma once

#include "ptvseg/loss.hpp"
#include "ptvseg/unet.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace ptvseg {

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig
{
    std::size_t batch_size = 4;
    double learning_rate = 1e-5;
    LossKind loss = LossKind::Bce;
    std::size_t patience = 10;
    /// An epoch improves on the best validation loss only if it lowers it by at
    /// least this fraction of the best value.
    double min_delta = 1e-3;
    std::size_t max_epochs = 200;
    std::uint64_t seed = 0;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const;
};

/// One training example: image [c,H,W] in [0,1] and binary mask shaped like the network output.
struct Sample
{
    Tensor image;
    Tensor mask;
};

struct AdamHyper
{
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam on flat arrays. `step` is the 1-based step number after this update.
void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
               const AdamHyper& hyper, std::uint64_t step);

struct OptimizerState
{
    ParameterSet first_moment;
    ParameterSet second_moment;
    std::uint64_t step = 0;
};

OptimizerState make_optimizer_state(const UNetModel& model);

/// Applies one optimizer update to every layer; advances state.step.
void apply_update(UNetModel& model, const ParameterSet& grads, OptimizerState& state, const TrainConfig& config);

struct EpochRecord
{
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    bool stopped = false;
};

struct TrainState
{
    UNetModel model;
    OptimizerState optimizer;
    std::size_t epoch = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t epochs_since_improvement = 0;
    std::vector<EpochRecord> history;
    UNetModel best_model;
};

TrainState make_train_state(UNetModel model);

/// Visits every sample once in an order shuffled from (seed, epoch); the last batch may be short.
/// Appends an EpochRecord with the mean per-sample training loss and returns that mean.
double train_epoch(TrainState& state, std::span<const Sample> train_set, const TrainConfig& config);

/// Records the validation loss of the most recent epoch and updates the early-stopping counters.
void record_validation(TrainState& state, double val_loss, const TrainConfig& config);

/// True once `patience` consecutive epochs failed to improve the best validation loss by the
/// relative margin min_delta, or max_epochs has been reached.
bool should_stop(const TrainState& state, const TrainConfig& config);

/// Mean per-sample loss; does not touch the model.
double evaluate_loss(const UNetModel& model, std::span<const Sample> dataset, LossKind kind);

using EpochCallback = std::function<void(const TrainState&, const EpochRecord&)>;

/// Trains until should_stop. state.best_model holds the parameters of the lowest validation loss.
TrainState train(UNetModel initial, std::span<const Sample> train_set, std::span<const Sample> val_set,
                 const TrainConfig& config, const EpochCallback& on_epoch = {});

/// CSV with header "epoch,train_loss,val_loss,stopped".
void write_epoch_log(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace ptvseg
