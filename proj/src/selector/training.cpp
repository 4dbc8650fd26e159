// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>

#include "flexsel/errors.hpp"
#include "flexsel/selector.hpp"
#include "flexsel/serialize.hpp"
#include "flexsel/weight_file.hpp"

namespace flexsel {

namespace {

double sample_loss(const Selector& selector, const TrainingSample& sample, const SoftRankConfig& rank,
                   NamedTensors* grads) {
    ad::Tape tape(grads != nullptr);
    const NamedVars params = grads ? bind_leaves(tape, selector.weights()) : bind_constants(tape, selector.weights());
    ad::Var predicted = selector.scores(tape, params, sample.sequence);
    RankLoss loss = rank_loss(sample.teacher, predicted.value().values(), rank);
    if (!grads) {
        return loss.loss;
    }
    const Shape shape = predicted.value().shape();
    ad::Var out = ad::custom(predicted, Tensor({1}, loss.loss),
                             [shape, gradient = std::move(loss.gradient)](const Tensor& g) {
                                 Tensor gx(shape);
                                 for (size_t i = 0; i < gx.size(); ++i) {
                                     gx[i] = g[0] * gradient[i];
                                 }
                                 return gx;
                             });
    tape.backward(out);
    for (const auto& [name, var] : params) {
        const Tensor& g = var.grad();
        (*grads)[name] = g.empty() ? Tensor(var.value().shape()) : g;
    }
    return out.value()[0];
}

}  // namespace

double batch_loss(const Selector& selector, const std::vector<const TrainingSample*>& batch,
                  const SoftRankConfig& rank, NamedTensors* grads) {
    if (batch.empty()) {
        throw InvalidArgument("empty training batch");
    }
    std::vector<double> losses(batch.size());
    std::vector<NamedTensors> per_sample(grads ? batch.size() : 0);
    std::vector<std::exception_ptr> failures(batch.size());
#pragma omp parallel for schedule(dynamic)
    for (size_t b = 0; b < batch.size(); ++b) {
        try {
            losses[b] = sample_loss(selector, *batch[b], rank, grads ? &per_sample[b] : nullptr);
        } catch (...) {
            failures[b] = std::current_exception();
        }
    }
    for (const auto& failure : failures) {
        if (failure) {
            std::rethrow_exception(failure);
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (double l : losses) {
        total += l;
    }
    if (grads) {
        *grads = std::move(per_sample.front());
        for (size_t b = 1; b < batch.size(); ++b) {
            for (auto& [name, g] : *grads) {
                const Tensor& other = per_sample[b].at(name);
                for (size_t i = 0; i < g.size(); ++i) {
                    g[i] += other[i];
                }
            }
        }
        for (auto& [name, g] : *grads) {
            for (double& v : g.data()) {
                v *= inv;
            }
        }
    }
    return total * inv;
}

double train_step(Selector& selector, TrainState& state, const std::vector<const TrainingSample*>& batch,
                  const SelectorTrainOptions& options) {
    NamedTensors grads;
    const double loss = batch_loss(selector, batch, options.rank, &grads);
    if (!std::isfinite(loss)) {
        throw DivergenceError("selector training diverged at step " + std::to_string(state.step));
    }
    const auto warmup =
        static_cast<uint64_t>(std::ceil(options.warmup_fraction * static_cast<double>(state.total_steps)));
    const double lr = scheduled_lr(options.lr, state.step, state.total_steps, warmup);
    adamw_step(selector.weights(), grads, state.moments, lr, options.adamw);
    state.step += 1;
    return loss;
}

double mean_spearman(const Selector& selector, const std::vector<TrainingSample>& samples) {
    if (samples.empty()) {
        return 0.0;
    }
    std::vector<double> rho(samples.size());
    std::vector<std::exception_ptr> failures(samples.size());
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < samples.size(); ++i) {
        try {
            rho[i] = spearman(samples[i].teacher, selector.scores(samples[i].sequence));
        } catch (...) {
            failures[i] = std::current_exception();
        }
    }
    for (const auto& failure : failures) {
        if (failure) {
            std::rethrow_exception(failure);
        }
    }
    return std::accumulate(rho.begin(), rho.end(), 0.0) / static_cast<double>(samples.size());
}

SelectorTrainer::SelectorTrainer(Selector selector, SelectorTrainOptions options, size_t train_size)
    : m_selector(std::move(selector)), m_options(options), m_train_size(train_size) {
    if (train_size == 0) {
        throw InvalidArgument("selector training set is empty");
    }
    if (options.batch_size == 0) {
        throw InvalidArgument("batch size must be at least 1");
    }
    const size_t per_epoch = (train_size + options.batch_size - 1) / options.batch_size;
    m_state.total_steps = static_cast<uint64_t>(per_epoch * options.epochs);
    m_state.rng_state = Rng(options.seed).serialize();
}

SelectorTrainer::SelectorTrainer(Selector selector, SelectorTrainOptions options, TrainState state)
    : m_selector(std::move(selector)), m_options(options), m_state(std::move(state)) {}

void SelectorTrainer::begin_epoch() {
    m_state.order.resize(m_train_size);
    std::iota(m_state.order.begin(), m_state.order.end(), size_t{0});
    if (m_options.shuffle) {
        Rng rng;
        rng.deserialize(m_state.rng_state);
        rng.shuffle(m_state.order);
        m_state.rng_state = rng.serialize();
    }
    m_state.cursor = 0;
}

void SelectorTrainer::advance(const std::vector<TrainingSample>& train, const std::vector<TrainingSample>& holdout) {
    if (done()) {
        return;
    }
    if (m_train_size == 0) {
        m_train_size = train.size();
    }
    if (train.size() != m_train_size) {
        throw InvalidArgument("training set size changed between steps");
    }
    if (m_state.order.empty()) {
        begin_epoch();
    }
    std::vector<const TrainingSample*> batch;
    const size_t end = std::min(m_state.cursor + m_options.batch_size, m_train_size);
    for (size_t i = m_state.cursor; i < end; ++i) {
        batch.push_back(&train[m_state.order[i]]);
    }
    const double loss = train_step(m_selector, m_state, batch, m_options);
    m_step_losses.push_back(loss);
    m_state.pending_loss += loss;
    m_state.pending_steps += 1;
    m_state.cursor = end;

    const bool epoch_end = m_state.cursor >= m_train_size;
    const bool eval_due = m_options.eval_every > 0 && m_state.step % m_options.eval_every == 0;
    if ((eval_due || epoch_end) && m_state.pending_steps > 0) {
        CurvePoint point;
        point.epoch = m_state.epoch;
        point.step = m_state.step;
        point.loss = m_state.pending_loss / static_cast<double>(m_state.pending_steps);
        point.holdout_spearman = mean_spearman(m_selector, holdout);
        m_curve.push_back(point);
        m_state.pending_loss = 0.0;
        m_state.pending_steps = 0;
    }
    if (epoch_end) {
        m_state.epoch += 1;
        m_state.order.clear();
        m_state.cursor = 0;
    }
}

void SelectorTrainer::run(const std::vector<TrainingSample>& train, const std::vector<TrainingSample>& holdout) {
    while (!done()) {
        advance(train, holdout);
    }
}

void SelectorTrainer::save_checkpoint(const std::filesystem::path& path) const {
    nlohmann::json state = {
        {"step", m_state.step},
        {"total_steps", m_state.total_steps},
        {"epoch", m_state.epoch},
        {"cursor", m_state.cursor},
        {"order", m_state.order},
        {"rng_state", m_state.rng_state},
        {"pending_loss", m_state.pending_loss},
        {"pending_steps", m_state.pending_steps},
        {"adam_steps", m_state.moments.steps},
        {"train_size", m_train_size},
    };
    nlohmann::json config = {{"kind", "selector_checkpoint"}, {"selector", m_selector.config()}, {"state", state}};
    NamedTensors tensors;
    for (const auto& [name, t] : m_selector.weights()) {
        tensors["param/" + name] = t;
    }
    for (const auto& [name, t] : m_state.moments.first) {
        tensors["adam.m/" + name] = t;
    }
    for (const auto& [name, t] : m_state.moments.second) {
        tensors["adam.v/" + name] = t;
    }
    save_weight_file(path, config, tensors);
}

SelectorTrainer SelectorTrainer::load_checkpoint(const std::filesystem::path& path, SelectorTrainOptions options) {
    WeightFile file = load_weight_file(path);
    if (file.config.value("kind", "") != "selector_checkpoint") {
        throw FormatError(path.string() + " is not a selector checkpoint");
    }
    NamedTensors params;
    TrainState state;
    for (auto& [name, t] : file.tensors) {
        if (name.starts_with("param/")) {
            params[name.substr(6)] = std::move(t);
        } else if (name.starts_with("adam.m/")) {
            state.moments.first[name.substr(7)] = std::move(t);
        } else if (name.starts_with("adam.v/")) {
            state.moments.second[name.substr(7)] = std::move(t);
        }
    }
    const nlohmann::json& s = file.config.at("state");
    state.step = s.at("step");
    state.total_steps = s.at("total_steps");
    state.epoch = s.at("epoch");
    state.cursor = s.at("cursor");
    state.order = s.at("order").get<std::vector<size_t>>();
    state.rng_state = s.at("rng_state");
    state.pending_loss = s.at("pending_loss");
    state.pending_steps = s.at("pending_steps");
    state.moments.steps = s.at("adam_steps");
    SelectorTrainer trainer(Selector(file.config.at("selector").get<SelectorConfig>(), std::move(params)), options,
                            std::move(state));
    trainer.m_train_size = s.at("train_size");
    return trainer;
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,step,loss,holdout_spearman\n";
    for (const CurvePoint& p : curve) {
        out << p.epoch << ',' << p.step << ',' << p.loss << ',' << p.holdout_spearman << '\n';
    }
    return out.str();
}

}  // namespace flexsel
