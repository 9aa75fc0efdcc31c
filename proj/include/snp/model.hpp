#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "snp/param_vector.hpp"

namespace snp {

enum class Activation { Tanh, Relu };

// Two MLP towers (one for inputs, one for class descriptors) meeting in a
// shared embedding space. Logits are temperature-scaled cosine similarities
// between input embeddings and descriptor embeddings.
struct ModelConfig {
    int input_dim = 10;
    int descriptor_dim = 10;
    int embed_dim = 8;
    std::vector<int> hidden = {16, 16};  // applied to both towers
    Activation activation = Activation::Tanh;
    double temperature = 10.0;

    void validate() const;

    // Layout derivation is deterministic: for tower in {in, desc}, for each
    // layer j, entries "<tower>.<j>.W" (out x in) then "<tower>.<j>.b" (out).
    LayoutPtr layout() const;
    Eigen::Index param_count() const;
};

// A classification batch: rows of `inputs` are samples, rows of
// `descriptors` are classes, `labels[i]` indexes a descriptor row.
struct Batch {
    Eigen::MatrixXd inputs;
    std::vector<int> labels;
    Eigen::MatrixXd descriptors;

    Eigen::Index sample_count() const { return inputs.rows(); }
    Eigen::Index class_count() const { return descriptors.rows(); }
    void validate() const;
};

// Seeded per-layer uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
ParamVector init_params(const ModelConfig& config, std::uint64_t seed);

// logits[i][c] = temperature * cosine(input_embedding_i, descriptor_embedding_c).
Eigen::MatrixXd forward_logits(const ParamVector& params, const ModelConfig& config,
                               const Batch& batch);

// Tower outputs, one embedding per row.
Eigen::MatrixXd embed_inputs(const ParamVector& params, const ModelConfig& config,
                             const Eigen::MatrixXd& inputs);
Eigen::MatrixXd embed_descriptors(const ParamVector& params, const ModelConfig& config,
                                  const Eigen::MatrixXd& descriptors);

struct LossGrad {
    double loss = 0.0;
    ParamVector grad;
};

// Mean cross-entropy of the softmax over logit rows, with the exact analytic
// gradient with respect to every parameter.
LossGrad loss_and_grad(const ParamVector& params, const ModelConfig& config, const Batch& batch);

// Loss only (same value as loss_and_grad), cheaper.
double loss_value(const ParamVector& params, const ModelConfig& config, const Batch& batch);

}  // namespace snp
