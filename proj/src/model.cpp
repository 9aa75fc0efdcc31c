#include "snp/model.hpp"

#include <cmath>
#include <string>

#include "snp/rng.hpp"

namespace snp {
namespace {

std::vector<int> tower_dims(const ModelConfig& c, bool input_tower) {
    std::vector<int> dims;
    dims.push_back(input_tower ? c.input_dim : c.descriptor_dim);
    dims.insert(dims.end(), c.hidden.begin(), c.hidden.end());
    dims.push_back(c.embed_dim);
    return dims;
}

void append_tower_layout(Layout& layout, const ModelConfig& c, const char* prefix,
                         bool input_tower) {
    const auto dims = tower_dims(c, input_tower);
    for (std::size_t j = 0; j + 1 < dims.size(); ++j) {
        const auto tag = std::string(prefix) + "." + std::to_string(j);
        layout.push_back({tag + ".W", {dims[j + 1], dims[j]}});
        layout.push_back({tag + ".b", {dims[j + 1]}});
    }
}

inline double act(double z, Activation a) {
    return a == Activation::Tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

// Derivative expressed through the post-activation value.
inline double act_prime_from_out(double out, Activation a) {
    return a == Activation::Tanh ? 1.0 - out * out : (out > 0.0 ? 1.0 : 0.0);
}

struct TowerCache {
    std::vector<Eigen::MatrixXd> post;  // post[0] = input rows, post[j+1] = layer j output
};

// Rows of `x` are samples. Layer j of a tower occupies layout entries
// (first_entry + 2j) and (first_entry + 2j + 1).
Eigen::MatrixXd tower_forward(const ParamVector& params, const ModelConfig& c,
                              const Eigen::MatrixXd& x, std::size_t first_entry,
                              TowerCache* cache) {
    const std::size_t n_layers = c.hidden.size() + 1;
    Eigen::MatrixXd a = x;
    if (cache) cache->post.push_back(a);
    for (std::size_t j = 0; j < n_layers; ++j) {
        const auto W = params.matrix(first_entry + 2 * j);
        const auto b = params.vector(first_entry + 2 * j + 1);
        Eigen::MatrixXd z = (a * W.transpose()).rowwise() + b.transpose();
        if (j + 1 < n_layers) z = z.unaryExpr([&](double v) { return act(v, c.activation); });
        a = std::move(z);
        if (cache) cache->post.push_back(a);
    }
    return a;
}

// Backprop `d_out` (gradient at the tower output) into `grad`'s slices.
void tower_backward(const ParamVector& params, const ModelConfig& c, const TowerCache& cache,
                    std::size_t first_entry, Eigen::MatrixXd d_out, ParamVector& grad) {
    const std::size_t n_layers = c.hidden.size() + 1;
    Eigen::MatrixXd g = std::move(d_out);
    for (std::size_t j = n_layers; j-- > 0;) {
        const auto W = params.matrix(first_entry + 2 * j);
        const Eigen::MatrixXd& a_in = cache.post[j];
        grad.matrix(first_entry + 2 * j).noalias() += g.transpose() * a_in;
        grad.vector(first_entry + 2 * j + 1) += g.colwise().sum().transpose();
        if (j > 0) {
            Eigen::MatrixXd below = g * W;
            const Eigen::MatrixXd& out_below = cache.post[j];
            g = below.cwiseProduct(out_below.unaryExpr(
                [&](double v) { return act_prime_from_out(v, c.activation); }));
        }
    }
}

std::size_t desc_tower_first_entry(const ModelConfig& c) {
    return 2 * (c.hidden.size() + 1);
}

void check_batch_against_config(const ModelConfig& c, const Batch& b) {
    b.validate();
    if (b.inputs.cols() != c.input_dim)
        throw ShapeError("batch inputs have " + std::to_string(b.inputs.cols()) +
                         " columns, config wants " + std::to_string(c.input_dim));
    if (b.descriptors.cols() != c.descriptor_dim)
        throw ShapeError("batch descriptors have " + std::to_string(b.descriptors.cols()) +
                         " columns, config wants " + std::to_string(c.descriptor_dim));
}

void check_params_against_config(const ParamVector& p, const ModelConfig& c) {
    if (!(p.layout_ptr() && *p.layout_ptr() == *c.layout()))
        throw ShapeError("params layout does not match model config");
}

struct CosineHead {
    Eigen::MatrixXd u_hat;   // row-normalized input embeddings
    Eigen::MatrixXd w_hat;   // row-normalized descriptor embeddings
    Eigen::VectorXd u_norm;
    Eigen::VectorXd w_norm;
    Eigen::MatrixXd cos;     // u_hat * w_hat^T
};

CosineHead cosine_head(const Eigen::MatrixXd& eu, const Eigen::MatrixXd& ew) {
    CosineHead h;
    h.u_norm = eu.rowwise().norm();
    h.w_norm = ew.rowwise().norm();
    if ((h.u_norm.array() == 0.0).any())
        throw NumericError("forward_logits: zero-norm input embedding");
    if ((h.w_norm.array() == 0.0).any())
        throw NumericError("forward_logits: zero-norm descriptor embedding");
    h.u_hat = eu.array().colwise() / h.u_norm.array();
    h.w_hat = ew.array().colwise() / h.w_norm.array();
    h.cos.noalias() = h.u_hat * h.w_hat.transpose();
    return h;
}

// Per-row log-softmax loss; throws NumericError with the sample index if a
// sample's term is not finite.
double softmax_loss(const Eigen::MatrixXd& logits, const std::vector<int>& labels,
                    Eigen::MatrixXd* probs_out) {
    const Eigen::Index n = logits.rows();
    double total = 0.0;
    Eigen::MatrixXd probs;
    if (probs_out) probs.resize(n, logits.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const double m = logits.row(i).maxCoeff();
        Eigen::ArrayXd e = (logits.row(i).array() - m).exp();
        const double z = e.sum();
        const double term = std::log(z) - (logits(i, labels[static_cast<std::size_t>(i)]) - m);
        if (!std::isfinite(term))
            throw NumericError("loss is not finite at sample " + std::to_string(i), i);
        total += term;
        if (probs_out) probs.row(i) = (e / z).matrix().transpose();
    }
    if (probs_out) *probs_out = std::move(probs);
    return total / static_cast<double>(n);
}

}  // namespace

void ModelConfig::validate() const {
    if (input_dim <= 0 || descriptor_dim <= 0 || embed_dim <= 0)
        throw ValueError("ModelConfig: dimensions must be positive");
    for (int h : hidden)
        if (h <= 0) throw ValueError("ModelConfig: hidden widths must be positive");
    if (!(temperature > 0.0)) throw ValueError("ModelConfig: temperature must be positive");
}

LayoutPtr ModelConfig::layout() const {
    validate();
    auto layout = std::make_shared<Layout>();
    append_tower_layout(*layout, *this, "in", true);
    append_tower_layout(*layout, *this, "desc", false);
    return layout;
}

Eigen::Index ModelConfig::param_count() const { return layout_size(*layout()); }

void Batch::validate() const {
    if (inputs.rows() < 1) throw ValueError("Batch: needs at least one sample");
    if (descriptors.rows() < 1) throw ValueError("Batch: needs at least one class");
    if (static_cast<Eigen::Index>(labels.size()) != inputs.rows())
        throw ShapeError("Batch: one label per sample required");
    for (int y : labels)
        if (y < 0 || y >= descriptors.rows())
            throw ValueError("Batch: label " + std::to_string(y) + " out of range");
}

ParamVector init_params(const ModelConfig& config, std::uint64_t seed) {
    auto layout = config.layout();
    Eigen::VectorXd values(layout_size(*layout));
    Rng rng(seed);
    Eigen::Index off = 0;
    Eigen::Index fan_in = 1;
    for (const auto& e : *layout) {
        // Weight shapes are {out, in}; the bias right after a weight entry
        // shares its layer's fan_in.
        if (e.shape.size() == 2) fan_in = e.shape[1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        const Eigen::Index n = e.size();
        for (Eigen::Index i = 0; i < n; ++i)
            values[off + i] = rng.next_uniform(-bound, bound);
        off += n;
    }
    return {layout, std::move(values)};
}

Eigen::MatrixXd embed_inputs(const ParamVector& params, const ModelConfig& config,
                             const Eigen::MatrixXd& inputs) {
    check_params_against_config(params, config);
    if (inputs.cols() != config.input_dim) throw ShapeError("embed_inputs: column mismatch");
    return tower_forward(params, config, inputs, 0, nullptr);
}

Eigen::MatrixXd embed_descriptors(const ParamVector& params, const ModelConfig& config,
                                  const Eigen::MatrixXd& descriptors) {
    check_params_against_config(params, config);
    if (descriptors.cols() != config.descriptor_dim)
        throw ShapeError("embed_descriptors: column mismatch");
    return tower_forward(params, config, descriptors, desc_tower_first_entry(config), nullptr);
}

Eigen::MatrixXd forward_logits(const ParamVector& params, const ModelConfig& config,
                               const Batch& batch) {
    check_params_against_config(params, config);
    check_batch_against_config(config, batch);
    const Eigen::MatrixXd eu = tower_forward(params, config, batch.inputs, 0, nullptr);
    const Eigen::MatrixXd ew =
        tower_forward(params, config, batch.descriptors, desc_tower_first_entry(config), nullptr);
    return config.temperature * cosine_head(eu, ew).cos;
}

double loss_value(const ParamVector& params, const ModelConfig& config, const Batch& batch) {
    const Eigen::MatrixXd logits = forward_logits(params, config, batch);
    return softmax_loss(logits, batch.labels, nullptr);
}

LossGrad loss_and_grad(const ParamVector& params, const ModelConfig& config, const Batch& batch) {
    check_params_against_config(params, config);
    check_batch_against_config(config, batch);

    TowerCache cache_in, cache_desc;
    const std::size_t desc_first = desc_tower_first_entry(config);
    const Eigen::MatrixXd eu = tower_forward(params, config, batch.inputs, 0, &cache_in);
    const Eigen::MatrixXd ew =
        tower_forward(params, config, batch.descriptors, desc_first, &cache_desc);
    const CosineHead head = cosine_head(eu, ew);
    const Eigen::MatrixXd logits = config.temperature * head.cos;

    Eigen::MatrixXd probs;
    LossGrad out;
    out.loss = softmax_loss(logits, batch.labels, &probs);

    // dL/dlogit = (softmax - onehot) / n; dL/dcos folds in the temperature.
    const double n = static_cast<double>(batch.sample_count());
    Eigen::MatrixXd m = probs;
    for (Eigen::Index i = 0; i < batch.sample_count(); ++i)
        m(i, batch.labels[static_cast<std::size_t>(i)]) -= 1.0;
    m *= config.temperature / n;

    // Cosine backprop: with normalized rows u_hat, w_hat and cos = u_hat w_hat^T,
    //   dL/du_i = [ (M w_hat)_i - (sum_c M_ic cos_ic) u_hat_i ] / |u_i|
    //   dL/dw_c = [ (M^T u_hat)_c - (sum_i M_ic cos_ic) w_hat_c ] / |w_c|
    const Eigen::VectorXd row_mix = (m.array() * head.cos.array()).rowwise().sum();
    const Eigen::VectorXd col_mix = (m.array() * head.cos.array()).colwise().sum();
    Eigen::MatrixXd d_eu = m * head.w_hat;
    d_eu -= row_mix.asDiagonal() * head.u_hat;
    d_eu = d_eu.array().colwise() / head.u_norm.array();
    Eigen::MatrixXd d_ew = m.transpose() * head.u_hat;
    d_ew -= col_mix.asDiagonal() * head.w_hat;
    d_ew = d_ew.array().colwise() / head.w_norm.array();

    ParamVector grad = ParamVector::zeros(params.layout_ptr());
    tower_backward(params, config, cache_in, 0, std::move(d_eu), grad);
    tower_backward(params, config, cache_desc, desc_first, std::move(d_ew), grad);
    if (!grad.all_finite()) throw NumericError("loss_and_grad: non-finite gradient");
    out.grad = std::move(grad);
    return out;
}

}  // namespace snp
