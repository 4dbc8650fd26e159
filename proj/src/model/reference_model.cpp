// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/reference_model.hpp"

#include <cmath>
#include <exception>

#include "flexsel/errors.hpp"

namespace flexsel {

void ModelConfig::validate() const {
    if (layers < 1 || heads < 1 || hidden < 1 || ffn < 1 || visual_dim < 1 || vocab < 1 || classes < 1 ||
        max_positions < 1) {
        throw ConfigError("all model sizes must be at least 1");
    }
    if (hidden % heads != 0) {
        throw ConfigError("hidden size " + std::to_string(hidden) + " not divisible by " + std::to_string(heads) +
                          " heads");
    }
}

DecoderShape ModelConfig::decoder_shape() const {
    DecoderShape s;
    s.layers = layers;
    s.heads = heads;
    s.hidden = hidden;
    s.ffn = ffn;
    s.visual_dim = visual_dim;
    s.vocab = vocab;
    s.max_positions = max_positions;
    s.mask = kernels::AttentionMask::Kind::causal;
    return s;
}

ReferenceModel::ReferenceModel(ModelConfig config, NamedTensors weights)
    : m_config(config), m_weights(std::move(weights)) {
    m_config.validate();
    check_decoder_weights(m_config.decoder_shape(), m_weights);
    auto head = m_weights.find("head.classifier");
    if (head == m_weights.end() || head->second.shape() != Shape{m_config.hidden, m_config.classes}) {
        throw ConfigError("missing or misshapen parameter head.classifier");
    }
}

ReferenceModel ReferenceModel::init(const ModelConfig& config) {
    config.validate();
    Rng rng(config.seed);
    NamedTensors weights = init_decoder(config.decoder_shape(), rng);
    Tensor head = Tensor::matrix(config.hidden, config.classes);
    const double scale = 1.0 / std::sqrt(static_cast<double>(config.hidden));
    for (double& v : head.data()) {
        v = scale * rng.normal();
    }
    weights["head.classifier"] = std::move(head);
    return ReferenceModel(config, std::move(weights));
}

ForwardResult ReferenceModel::forward_with_attention(const TokenSequence& seq, size_t layers_to_run) const {
    seq.validate();
    ad::Tape tape(false);
    const NamedVars params = bind_constants(tape, m_weights);
    const DecoderShape shape = m_config.decoder_shape();
    const DecoderPass pass = decoder_forward(tape, shape, params, seq, layers_to_run);

    const size_t m = seq.visual_count();
    const size_t q = seq.query_count();
    const size_t n = m + q;
    ForwardResult result;
    result.record = AttentionRecord(pass.attention.size(), m_config.heads, m, q);
    for (size_t l = 0; l < pass.attention.size(); ++l) {
        for (size_t h = 0; h < m_config.heads; ++h) {
            const Tensor& probs = pass.attention[l][h].value();
            Tensor& rows = result.record.rows(l, h);
            for (size_t r = 0; r < q; ++r) {
                for (size_t c = 0; c < n; ++c) {
                    rows(r, c) = probs(m + r, c);
                }
            }
        }
    }
    result.hidden = pass.hidden.value();
    result.block_macs = pass.block_macs;
    if (pass.attention.size() == m_config.layers) {
        const Tensor& w = m_weights.at("head.classifier");
        Tensor last = Tensor::matrix(1, m_config.hidden);
        std::copy_n(result.hidden.row(n - 1).begin(), m_config.hidden, last.row(0).begin());
        result.logits = kernels::serial::matmul(last, w);
    }
    return result;
}

double ReferenceModel::classification_loss(const TokenSequence& seq, size_t label, NamedTensors* grads) const {
    ad::Tape tape(grads != nullptr);
    const NamedVars params = grads ? bind_leaves(tape, m_weights) : bind_constants(tape, m_weights);
    const DecoderPass pass = decoder_forward(tape, m_config.decoder_shape(), params, seq);
    const size_t n = seq.length();
    ad::Var last = ad::slice(pass.hidden, n - 1, 1, 0, m_config.hidden);
    ad::Var logits = ad::matmul(last, params.at("head.classifier"));
    ad::Var loss = ad::cross_entropy(logits, label);
    if (grads) {
        tape.backward(loss);
        for (const auto& [name, var] : params) {
            const Tensor& g = var.grad();
            (*grads)[name] = g.empty() ? Tensor(var.value().shape()) : g;
        }
    }
    return loss.value()[0];
}

std::vector<double> train_classifier(ReferenceModel& model, const std::vector<LabelledSequence>& data,
                                     const ClassifierTrainOptions& options) {
    if (data.empty()) {
        throw InvalidArgument("classifier training set is empty");
    }
    Rng rng(options.seed);
    AdamWMoments moments;
    std::vector<double> losses;
    const uint64_t warmup = options.steps / 20;
    for (size_t step = 0; step < options.steps; ++step) {
        std::vector<size_t> batch(options.batch_size);
        for (size_t& b : batch) {
            b = rng.below(data.size());
        }
        std::vector<NamedTensors> per_sample(batch.size());
        std::vector<double> sample_loss(batch.size());
        std::vector<std::exception_ptr> failures(batch.size());
#pragma omp parallel for schedule(dynamic)
        for (size_t b = 0; b < batch.size(); ++b) {
            try {
                sample_loss[b] =
                    model.classification_loss(data[batch[b]].sequence, data[batch[b]].label, &per_sample[b]);
            } catch (...) {
                failures[b] = std::current_exception();
            }
        }
        for (const auto& failure : failures) {
            if (failure) {
                std::rethrow_exception(failure);
            }
        }
        // ordered reduction keeps the update independent of thread count
        NamedTensors grads = per_sample.front();
        double loss = sample_loss.front();
        for (size_t b = 1; b < batch.size(); ++b) {
            loss += sample_loss[b];
            for (auto& [name, g] : grads) {
                const Tensor& other = per_sample[b].at(name);
                for (size_t i = 0; i < g.size(); ++i) {
                    g[i] += other[i];
                }
            }
        }
        const double inv = 1.0 / static_cast<double>(batch.size());
        for (auto& [name, g] : grads) {
            for (double& v : g.data()) {
                v *= inv;
            }
        }
        loss *= inv;
        if (!std::isfinite(loss)) {
            throw DivergenceError("classifier training diverged at step " + std::to_string(step));
        }
        losses.push_back(loss);
        adamw_step(model.weights(), grads, moments, scheduled_lr(options.lr, step, options.steps, warmup),
                   options.adamw);
    }
    return losses;
}

}  // namespace flexsel
