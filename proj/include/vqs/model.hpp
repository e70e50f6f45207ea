#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vqs/linalg.hpp"
#include "vqs/rng.hpp"

namespace vqs {

enum class Activation { relu, tanh };
enum class CodebookMode { ema, loss };

Activation parse_activation(const std::string& s);
std::string to_string(Activation a);
CodebookMode parse_codebook_mode(const std::string& s);
std::string to_string(CodebookMode m);

struct ModelShape {
    std::size_t input_width = 0;
    std::size_t hidden1 = 1024;
    std::size_t hidden2 = 256;
    std::size_t latent_dim = 64;
    std::size_t codebook_size = 128;
    Activation activation = Activation::relu;

    void validate() const;
};

/// y = x · weight + bias, weight is fan_in × fan_out.
struct DenseLayer {
    Matrix weight;
    std::vector<double> bias;

    bool operator==(const DenseLayer&) const = default;
};

/// Encoder input → h1 → h2 → D and mirrored decoder D → h2 → h1 → input.
/// Hidden layers use `activation`; both output layers are linear.
struct NetworkParams {
    std::array<DenseLayer, 3> encoder;
    std::array<DenseLayer, 3> decoder;
    Activation activation = Activation::relu;

    static NetworkParams zeros_like(const NetworkParams& p);

    std::size_t input_width() const noexcept { return encoder[0].weight.rows(); }
    std::size_t latent_dim() const noexcept { return encoder[2].weight.cols(); }

    /// Views over every tensor in a fixed order: encoder W1 b1 W2 b2 W3 b3,
    /// then the decoder in the same pattern.
    std::vector<std::span<double>> tensors();
    std::vector<std::span<const double>> tensors() const;

    void validate() const;

    bool operator==(const NetworkParams&) const = default;
};

/// K embeddings of width D with exponential-moving-average accumulators.
struct Codebook {
    Matrix embeddings;               // K × D
    std::vector<double> ema_counts;  // K
    Matrix ema_sums;                 // K × D
    double decay = 0.99;
    double epsilon = 1e-5;

    std::size_t size() const noexcept { return embeddings.rows(); }
    std::size_t dim() const noexcept { return embeddings.cols(); }
    void validate() const;

    bool operator==(const Codebook&) const = default;
};

/// Weights uniform in ±√(6/(fan_in+fan_out)), zero biases.
NetworkParams init_network(const ModelShape& shape, SplitMix64& rng);

/// Embeddings N(0, 1)/√D; EMA counts and sums start at zero.
Codebook init_codebook(std::size_t size, std::size_t dim, double decay, double epsilon, SplitMix64& rng);

struct MlpTrace {
    Matrix pre1, act1, pre2, act2;
    Matrix out;  // linear output layer
};

struct ForwardTrace {
    MlpTrace encoder;
    std::vector<std::size_t> indices;
    Matrix z_q;
    MlpTrace decoder;

    const Matrix& z_e() const noexcept { return encoder.out; }
    const Matrix& recon() const noexcept { return decoder.out; }
    std::size_t batch() const noexcept { return encoder.out.rows(); }
    bool empty() const noexcept { return encoder.out.empty(); }
};

Matrix encode(const NetworkParams& params, const Matrix& x);
Matrix decode(const NetworkParams& params, const Matrix& z_q);

struct Quantized {
    std::vector<std::size_t> indices;
    Matrix z_q;
};

/// Nearest codebook row by squared Euclidean distance, lowest index on ties.
Quantized quantize(const Codebook& cb, const Matrix& z_e);

ForwardTrace forward(const NetworkParams& params, const Codebook& cb, const Matrix& x);

struct LossTerms {
    double recons = 0.0;
    double codebook = 0.0;  // diagnostic only in EMA mode
    double commit = 0.0;
    double total = 0.0;
};

/// Batch means of ‖x − x′‖², ‖sg[z_e] − e‖² and β‖sg[e] − z_e‖². The total
/// includes the codebook term only in loss mode.
LossTerms loss_terms(const Matrix& x, const ForwardTrace& trace, double beta, CodebookMode mode);

struct Gradients {
    NetworkParams params;  // same shapes as the network
    Matrix codebook;       // K × D, all zero in EMA mode
    Matrix d_z_q;          // ∂l_recons/∂z_q
    Matrix d_z_e;          // gradient reaching the encoder output

    std::vector<std::span<double>> tensors() { return params.tensors(); }
};

/// 2β(z_e − e)/batch: commitment contribution to the encoder-output gradient.
Matrix commitment_gradient(const ForwardTrace& trace, double beta);

/// Straight-through backward pass. The quantizer is the identity for the
/// reconstruction gradient, embeddings receive no gradient from the
/// reconstruction or commitment terms, and in loss mode each embedding
/// receives 2(e − z_e)/batch per assigned row.
Gradients backward(const NetworkParams& params, const Matrix& x, const ForwardTrace& trace, const Codebook& cb,
                   double beta, CodebookMode mode);

/// EMA codebook update followed by Laplace-smoothed re-normalisation.
void ema_update(Codebook& cb, const Matrix& z_e, std::span<const std::size_t> indices);

/// exp(entropy) of the code-usage distribution in `indices`.
double perplexity(std::span<const std::size_t> indices, std::size_t codebook_size);

}  // namespace vqs
