#include "vqs/model.hpp"

#include <cmath>
#include <limits>

#include "vqs/errors.hpp"

namespace vqs {

Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw ValidationError("unknown activation '" + s + "' (expected relu or tanh)");
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

CodebookMode parse_codebook_mode(const std::string& s) {
    if (s == "ema") return CodebookMode::ema;
    if (s == "loss") return CodebookMode::loss;
    throw ValidationError("unknown codebook mode '" + s + "' (expected ema or loss)");
}

std::string to_string(CodebookMode m) { return m == CodebookMode::ema ? "ema" : "loss"; }

void ModelShape::validate() const {
    if (input_width == 0 || hidden1 == 0 || hidden2 == 0 || latent_dim == 0 || codebook_size == 0) {
        throw ValidationError("model widths and codebook size must all be at least 1");
    }
}

NetworkParams NetworkParams::zeros_like(const NetworkParams& p) {
    NetworkParams z;
    z.activation = p.activation;
    for (std::size_t i = 0; i < 3; ++i) {
        z.encoder[i] = {Matrix(p.encoder[i].weight.rows(), p.encoder[i].weight.cols()),
                        std::vector<double>(p.encoder[i].bias.size(), 0.0)};
        z.decoder[i] = {Matrix(p.decoder[i].weight.rows(), p.decoder[i].weight.cols()),
                        std::vector<double>(p.decoder[i].bias.size(), 0.0)};
    }
    return z;
}

std::vector<std::span<double>> NetworkParams::tensors() {
    std::vector<std::span<double>> out;
    for (auto* side : {&encoder, &decoder}) {
        for (auto& layer : *side) {
            out.emplace_back(layer.weight.values());
            out.emplace_back(layer.bias);
        }
    }
    return out;
}

std::vector<std::span<const double>> NetworkParams::tensors() const {
    std::vector<std::span<const double>> out;
    for (const auto* side : {&encoder, &decoder}) {
        for (const auto& layer : *side) {
            out.emplace_back(layer.weight.values());
            out.emplace_back(layer.bias);
        }
    }
    return out;
}

void NetworkParams::validate() const {
    auto check_chain = [](const std::array<DenseLayer, 3>& layers, const char* name) {
        for (std::size_t i = 0; i < 3; ++i) {
            if (layers[i].bias.size() != layers[i].weight.cols()) {
                throw ValidationError(std::string(name) + " layer " + std::to_string(i + 1) + " bias length " +
                                      std::to_string(layers[i].bias.size()) + " does not match weight " +
                                      layers[i].weight.shape_string());
            }
            if (i > 0 && layers[i].weight.rows() != layers[i - 1].weight.cols()) {
                throw ValidationError(std::string(name) + " layer " + std::to_string(i + 1) + " weight " +
                                      layers[i].weight.shape_string() + " does not chain from " +
                                      layers[i - 1].weight.shape_string());
            }
        }
    };
    check_chain(encoder, "encoder");
    check_chain(decoder, "decoder");
    if (decoder[0].weight.rows() != encoder[2].weight.cols()) {
        throw ValidationError("decoder input width does not equal encoder output width");
    }
    if (decoder[2].weight.cols() != encoder[0].weight.rows()) {
        throw ValidationError("decoder output width does not equal encoder input width");
    }
    for (auto t : tensors())
        if (!all_finite(t)) throw ValidationError("network parameters contain non-finite values");
}

void Codebook::validate() const {
    if (ema_counts.size() != size() || ema_sums.rows() != size() || ema_sums.cols() != dim()) {
        throw ValidationError("codebook accumulators do not match embeddings " + embeddings.shape_string());
    }
    if (!(decay > 0.0 && decay < 1.0)) throw ValidationError("codebook decay must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw ValidationError("codebook epsilon must be positive");
    for (double c : ema_counts)
        if (c < 0.0) throw ValidationError("codebook EMA counts must be non-negative");
    if (!all_finite(embeddings.values()) || !all_finite(ema_sums.values()) || !all_finite(ema_counts)) {
        throw ValidationError("codebook contains non-finite values");
    }
}

namespace {

DenseLayer glorot_layer(std::size_t fan_in, std::size_t fan_out, SplitMix64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer{Matrix(fan_in, fan_out), std::vector<double>(fan_out, 0.0)};
    for (double& w : layer.weight.values()) w = rng.uniform(-limit, limit);
    return layer;
}

void add_bias(Matrix& m, const std::vector<double>& bias) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
    }
}

Matrix activate(const Matrix& pre, Activation a) {
    Matrix out = pre;
    if (a == Activation::relu) {
        for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    } else {
        for (double& v : out.values()) v = std::tanh(v);
    }
    return out;
}

// In place: grad ⊙ σ'(pre).
void activation_backward(Matrix& grad, const Matrix& pre, const Matrix& act, Activation a) {
    auto g = grad.values();
    if (a == Activation::relu) {
        auto p = pre.values();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!(p[i] > 0.0)) g[i] = 0.0;
    } else {
        auto y = act.values();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - y[i] * y[i];
    }
}

Matrix affine(const Matrix& x, const DenseLayer& layer) {
    Matrix y = matmul(x, layer.weight);
    add_bias(y, layer.bias);
    return y;
}

MlpTrace run_mlp(const std::array<DenseLayer, 3>& layers, Activation a, const Matrix& x, const char* name) {
    if (x.cols() != layers[0].weight.rows()) {
        throw ShapeError(std::string(name) + " expects input width " + std::to_string(layers[0].weight.rows()) +
                         ", got " + std::to_string(x.cols()));
    }
    MlpTrace t;
    t.pre1 = affine(x, layers[0]);
    t.act1 = activate(t.pre1, a);
    t.pre2 = affine(t.act1, layers[1]);
    t.act2 = activate(t.pre2, a);
    t.out = affine(t.act2, layers[2]);
    return t;
}

void column_sums_into(const Matrix& m, std::vector<double>& out) {
    out.assign(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c];
    }
}

// Backpropagate through one MLP; returns the gradient at its input unless
// `need_input_grad` is false.
Matrix mlp_backward(const std::array<DenseLayer, 3>& layers, Activation a, const Matrix& input, const MlpTrace& t,
                    Matrix d_out, std::array<DenseLayer, 3>& grads, bool need_input_grad) {
    grads[2].weight = matmul_tn(t.act2, d_out);
    column_sums_into(d_out, grads[2].bias);
    Matrix d = matmul_nt(d_out, layers[2].weight);
    activation_backward(d, t.pre2, t.act2, a);

    grads[1].weight = matmul_tn(t.act1, d);
    column_sums_into(d, grads[1].bias);
    Matrix d1 = matmul_nt(d, layers[1].weight);
    activation_backward(d1, t.pre1, t.act1, a);

    grads[0].weight = matmul_tn(input, d1);
    column_sums_into(d1, grads[0].bias);
    if (!need_input_grad) return {};
    return matmul_nt(d1, layers[0].weight);
}

double mean_row_sq_dist(const Matrix& a, const Matrix& b) {
    double total = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto x = a.row(r);
        auto y = b.row(r);
        double s = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) s += (x[c] - y[c]) * (x[c] - y[c]);
        total += s;
    }
    return a.rows() == 0 ? 0.0 : total / static_cast<double>(a.rows());
}

}  // namespace

NetworkParams init_network(const ModelShape& shape, SplitMix64& rng) {
    shape.validate();
    NetworkParams p;
    p.activation = shape.activation;
    p.encoder[0] = glorot_layer(shape.input_width, shape.hidden1, rng);
    p.encoder[1] = glorot_layer(shape.hidden1, shape.hidden2, rng);
    p.encoder[2] = glorot_layer(shape.hidden2, shape.latent_dim, rng);
    p.decoder[0] = glorot_layer(shape.latent_dim, shape.hidden2, rng);
    p.decoder[1] = glorot_layer(shape.hidden2, shape.hidden1, rng);
    p.decoder[2] = glorot_layer(shape.hidden1, shape.input_width, rng);
    return p;
}

Codebook init_codebook(std::size_t size, std::size_t dim, double decay, double epsilon, SplitMix64& rng) {
    Codebook cb;
    cb.embeddings = Matrix(size, dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (double& v : cb.embeddings.values()) v = rng.normal() * scale;
    cb.ema_counts.assign(size, 0.0);
    cb.ema_sums = Matrix(size, dim);
    cb.decay = decay;
    cb.epsilon = epsilon;
    cb.validate();
    return cb;
}

Matrix encode(const NetworkParams& params, const Matrix& x) {
    return run_mlp(params.encoder, params.activation, x, "encoder").out;
}

Matrix decode(const NetworkParams& params, const Matrix& z_q) {
    return run_mlp(params.decoder, params.activation, z_q, "decoder").out;
}

Quantized quantize(const Codebook& cb, const Matrix& z_e) {
    if (z_e.cols() != cb.dim()) {
        throw ShapeError("quantize expects width " + std::to_string(cb.dim()) + ", got " + std::to_string(z_e.cols()));
    }
    Quantized q;
    q.indices.resize(z_e.rows());
    q.z_q = Matrix(z_e.rows(), cb.dim());
    for (std::size_t r = 0; r < z_e.rows(); ++r) {
        auto z = z_e.row(r);
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < cb.size(); ++k) {
            auto e = cb.embeddings.row(k);
            double d = 0.0;
            for (std::size_t c = 0; c < z.size(); ++c) d += (z[c] - e[c]) * (z[c] - e[c]);
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        q.indices[r] = best;
        auto src = cb.embeddings.row(best);
        std::copy(src.begin(), src.end(), q.z_q.row(r).begin());
    }
    return q;
}

ForwardTrace forward(const NetworkParams& params, const Codebook& cb, const Matrix& x) {
    ForwardTrace t;
    t.encoder = run_mlp(params.encoder, params.activation, x, "encoder");
    auto q = quantize(cb, t.encoder.out);
    t.indices = std::move(q.indices);
    t.z_q = std::move(q.z_q);
    t.decoder = run_mlp(params.decoder, params.activation, t.z_q, "decoder");
    return t;
}

LossTerms loss_terms(const Matrix& x, const ForwardTrace& trace, double beta, CodebookMode mode) {
    if (trace.empty()) throw UsageError("loss_terms called without a forward trace");
    if (x.rows() != trace.recon().rows() || x.cols() != trace.recon().cols()) {
        throw ShapeError("loss_terms: input " + x.shape_string() + " does not match reconstruction " +
                         trace.recon().shape_string());
    }
    LossTerms l;
    l.recons = mean_row_sq_dist(x, trace.recon());
    l.codebook = mean_row_sq_dist(trace.z_e(), trace.z_q);
    l.commit = beta * l.codebook;
    if (!std::isfinite(l.recons)) throw NumericError("non-finite reconstruction loss");
    if (!std::isfinite(l.codebook)) throw NumericError("non-finite codebook loss");
    if (!std::isfinite(l.commit)) throw NumericError("non-finite commitment loss");
    l.total = l.recons + l.commit + (mode == CodebookMode::loss ? l.codebook : 0.0);
    return l;
}

Matrix commitment_gradient(const ForwardTrace& trace, double beta) {
    const Matrix& z_e = trace.z_e();
    Matrix g(z_e.rows(), z_e.cols());
    const double scale = 2.0 * beta;
    const double batch = static_cast<double>(z_e.rows());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g.values()[i] = scale * (z_e.values()[i] - trace.z_q.values()[i]) / batch;
    }
    return g;
}

Gradients backward(const NetworkParams& params, const Matrix& x, const ForwardTrace& trace, const Codebook& cb,
                   double beta, CodebookMode mode) {
    if (trace.empty()) throw UsageError("backward called without a forward trace");
    if (x.rows() != trace.batch() || x.cols() != params.input_width()) {
        throw ShapeError("backward: input " + x.shape_string() + " does not match the forward trace");
    }
    const std::size_t batch = trace.batch();
    const double inv_batch = 1.0 / static_cast<double>(batch);

    Gradients g;
    g.params = NetworkParams::zeros_like(params);

    Matrix d_recon(x.rows(), x.cols());
    for (std::size_t i = 0; i < d_recon.size(); ++i) {
        d_recon.values()[i] = 2.0 * (trace.recon().values()[i] - x.values()[i]) * inv_batch;
    }
    g.d_z_q = mlp_backward(params.decoder, params.activation, trace.z_q, trace.decoder, std::move(d_recon),
                           g.params.decoder, true);

    // Straight-through: the quantizer passes d_z_q unchanged to z_e.
    g.d_z_e = g.d_z_q;
    const Matrix commit = commitment_gradient(trace, beta);
    for (std::size_t i = 0; i < g.d_z_e.size(); ++i) g.d_z_e.values()[i] += commit.values()[i];

    mlp_backward(params.encoder, params.activation, x, trace.encoder, g.d_z_e, g.params.encoder, false);

    g.codebook = Matrix(cb.size(), cb.dim());
    if (mode == CodebookMode::loss) {
        for (std::size_t r = 0; r < batch; ++r) {
            auto ge = g.codebook.row(trace.indices[r]);
            auto e = trace.z_q.row(r);
            auto z = trace.z_e().row(r);
            for (std::size_t c = 0; c < ge.size(); ++c) ge[c] += 2.0 * (e[c] - z[c]) * inv_batch;
        }
    }
    return g;
}

void ema_update(Codebook& cb, const Matrix& z_e, std::span<const std::size_t> indices) {
    if (z_e.rows() != indices.size() || z_e.cols() != cb.dim()) {
        throw ShapeError("ema_update: encoder outputs " + z_e.shape_string() + " do not match " +
                         std::to_string(indices.size()) + " indices of width " + std::to_string(cb.dim()));
    }
    const std::size_t k = cb.size();
    std::vector<double> counts(k, 0.0);
    Matrix sums(k, cb.dim());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= k) throw ValidationError("ema_update: code index out of range");
        counts[indices[r]] += 1.0;
        auto dst = sums.row(indices[r]);
        auto src = z_e.row(r);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
    const double g = cb.decay;
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        cb.ema_counts[i] = g * cb.ema_counts[i] + (1.0 - g) * counts[i];
        auto m = cb.ema_sums.row(i);
        auto s = sums.row(i);
        for (std::size_t c = 0; c < m.size(); ++c) m[c] = g * m[c] + (1.0 - g) * s[c];
        total += cb.ema_counts[i];
    }
    if (!(total > 0.0)) return;  // nothing has ever been assigned
    const double denom = total + static_cast<double>(k) * cb.epsilon;
    for (std::size_t i = 0; i < k; ++i) {
        const double smoothed = (cb.ema_counts[i] + cb.epsilon) / denom * total;
        auto e = cb.embeddings.row(i);
        auto m = cb.ema_sums.row(i);
        for (std::size_t c = 0; c < e.size(); ++c) e[c] = m[c] / smoothed;
    }
}

double perplexity(std::span<const std::size_t> indices, std::size_t codebook_size) {
    if (indices.empty()) throw UsageError("perplexity of an empty batch");
    std::vector<std::size_t> counts(codebook_size, 0);
    for (auto i : indices) {
        if (i >= codebook_size) throw ValidationError("perplexity: code index out of range");
        ++counts[i];
    }
    const double n = static_cast<double>(indices.size());
    double entropy = 0.0;
    for (auto c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        entropy -= p * std::log(p);
    }
    return std::exp(entropy);
}

}  // namespace vqs
