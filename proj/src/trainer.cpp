#include "ptvseg/trainer.hpp"

#include "ptvseg/rng.hpp"
#include "ptvseg/simd.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ptvseg {

void TrainConfig::validate() const
{
    if (batch_size < 1)
        throw std::invalid_argument("train config: batch_size must be >= 1");
    if (patience < 1)
        throw std::invalid_argument("train config: patience must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("train config: learning_rate must be > 0");
    if (!(min_delta >= 0.0))
        throw std::invalid_argument("train config: min_delta must be >= 0");
    if (max_epochs < 1)
        throw std::invalid_argument("train config: max_epochs must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("train config: Adam betas must lie in [0, 1)");
}

void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
               const AdamHyper& hyper, std::uint64_t step)
{
    if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size())
        throw ShapeError("adam_step: parameter, gradient and moment arrays differ in length");
    if (step < 1)
        throw std::invalid_argument("adam_step: step numbers start at 1");
    const double t = static_cast<double>(step);
    const simd::AdamCoefficients c{hyper.lr, hyper.beta1, hyper.beta2, hyper.eps,
                                   1.0 / (1.0 - std::pow(hyper.beta1, t)), 1.0 / (1.0 - std::pow(hyper.beta2, t))};
    simd::kernels().adam_update(params.data(), grads.data(), m.data(), v.data(), params.size(), c);
}

OptimizerState make_optimizer_state(const UNetModel& model)
{
    return OptimizerState{zeros_like(model.layers), zeros_like(model.layers), 0};
}

void apply_update(UNetModel& model, const ParameterSet& grads, OptimizerState& state, const TrainConfig& config)
{
    if (grads.size() != model.layers.size())
        throw ShapeError("apply_update: gradient set does not match model");
    state.step += 1;
    if (config.optimizer == OptimizerKind::Sgd)
    {
        accumulate(model.layers, grads, -config.learning_rate);
        return;
    }
    const AdamHyper hyper{config.learning_rate, config.beta1, config.beta2, config.adam_epsilon};
    for (std::size_t i = 0; i < model.layers.size(); ++i)
    {
        adam_step(model.layers[i].weights.values(), grads[i].weights.values(), state.first_moment[i].weights.values(),
                  state.second_moment[i].weights.values(), hyper, state.step);
        adam_step(model.layers[i].bias.values(), grads[i].bias.values(), state.first_moment[i].bias.values(),
                  state.second_moment[i].bias.values(), hyper, state.step);
    }
}

TrainState make_train_state(UNetModel model)
{
    TrainState state;
    state.optimizer = make_optimizer_state(model);
    state.best_model = model;
    state.model = std::move(model);
    return state;
}

double train_epoch(TrainState& state, std::span<const Sample> train_set, const TrainConfig& config)
{
    config.validate();
    if (train_set.empty())
        throw std::invalid_argument("train_epoch: training set is empty");
    if (state.optimizer.first_moment.size() != state.model.layers.size())
        state.optimizer = make_optimizer_state(state.model);

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng::derive(config.seed, state.epoch);
    rng.shuffle(std::span<std::size_t>(order));

    double loss_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size)
    {
        const std::size_t stop = std::min(order.size(), start + config.batch_size);
        const double scale = 1.0 / static_cast<double>(stop - start);
        ParameterSet grads = zeros_like(state.model.layers);
        for (std::size_t i = start; i < stop; ++i)
        {
            const Sample& sample = train_set[order[i]];
            ForwardResult fwd = unet_forward(state.model, sample.image);
            LossValue loss = loss_from_logits(fwd.logits, sample.mask, config.loss);
            loss_total += loss.value;
            accumulate(grads, unet_backward_logits(state.model, fwd.cache, loss.grad), scale);
        }
        apply_update(state.model, grads, state.optimizer, config);
    }

    state.epoch += 1;
    const double mean = loss_total / static_cast<double>(train_set.size());
    state.history.push_back(EpochRecord{state.epoch, mean});
    return mean;
}

void record_validation(TrainState& state, double val_loss, const TrainConfig& config)
{
    if (state.history.empty())
        throw std::logic_error("record_validation: no epoch has been trained");
    state.history.back().val_loss = val_loss;

    const bool first = !std::isfinite(state.best_val_loss);
    const bool significant = first || val_loss < state.best_val_loss - config.min_delta * std::abs(state.best_val_loss);
    if (val_loss < state.best_val_loss)
    {
        state.best_val_loss = val_loss;
        state.best_epoch = state.epoch;
        state.best_model = state.model;
    }
    state.epochs_since_improvement = significant ? 0 : state.epochs_since_improvement + 1;
}

bool should_stop(const TrainState& state, const TrainConfig& config)
{
    return state.epochs_since_improvement >= config.patience || state.epoch >= config.max_epochs;
}

double evaluate_loss(const UNetModel& model, std::span<const Sample> dataset, LossKind kind)
{
    if (dataset.empty())
        throw std::invalid_argument("evaluate_loss: dataset is empty");
    double total = 0.0;
    for (const auto& sample : dataset)
        total += loss_from_logits(unet_infer_logits(model, sample.image), sample.mask, kind).value;
    return total / static_cast<double>(dataset.size());
}

TrainState train(UNetModel initial, std::span<const Sample> train_set, std::span<const Sample> val_set,
                 const TrainConfig& config, const EpochCallback& on_epoch)
{
    config.validate();
    if (val_set.empty())
        throw std::invalid_argument("train: validation set is empty");
    TrainState state = make_train_state(std::move(initial));
    for (;;)
    {
        train_epoch(state, train_set, config);
        record_validation(state, evaluate_loss(state.model, val_set, config.loss), config);
        const bool stop = should_stop(state, config);
        state.history.back().stopped = stop;
        if (on_epoch)
            on_epoch(state, state.history.back());
        if (stop)
            return state;
    }
}

namespace {

std::string format_real(double v)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

}  // namespace

void write_epoch_log(const std::vector<EpochRecord>& history, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot write epoch log: " + path.string());
    out << "epoch,train_loss,val_loss,stopped\r\n";
    for (const auto& r : history)
        out << r.epoch << ',' << format_real(r.train_loss) << ',' << (std::isnan(r.val_loss) ? "" : format_real(r.val_loss))
            << ',' << (r.stopped ? 1 : 0) << "\r\n";
}

}  // namespace ptvseg
