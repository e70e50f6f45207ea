#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vqs/errors.hpp"
#include "vqs/ingestion.hpp"
#include "vqs/model.hpp"

namespace vqs {

struct TrainConfig {
    // architecture
    std::size_t hidden1 = 1024;
    std::size_t hidden2 = 256;
    std::size_t latent_dim = 64;
    std::size_t codebook_size = 128;
    Activation activation = Activation::relu;
    // optimisation
    std::size_t batch_size = 32;
    std::size_t steps = 10000;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double commitment = 0.25;
    CodebookMode codebook_mode = CodebookMode::ema;
    double ema_decay = 0.99;
    double ema_epsilon = 1e-5;
    std::uint64_t seed = 0;
    // bookkeeping
    std::size_t smoothing_window = 100;
    std::size_t checkpoint_interval = 1000;  // 0 = only at the end

    ModelShape model_shape(std::size_t input_width) const;
    void validate() const;

    bool operator==(const TrainConfig&) const = default;
};

struct AdamMoments {
    std::vector<double> first;
    std::vector<double> second;

    bool operator==(const AdamMoments&) const = default;
};

struct AdamState {
    std::uint64_t step = 0;
    std::vector<AdamMoments> moments;  // one per parameter tensor

    /// Zero moments shaped like `tensors`.
    static AdamState for_tensors(std::span<const std::span<double>> tensors);

    bool operator==(const AdamState&) const = default;
};

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One Adam update over every tensor. Any non-finite gradient throws
/// NumericError before anything is modified.
void adam_step(std::span<const std::span<double>> params, std::span<const std::span<double>> grads, AdamState& state,
               const AdamHyper& hyper);

struct NmseResult {
    double value = 0.0;
    bool degenerate = false;  // zero-variance denominator; value is the raw MSE
};

/// ‖x − x′‖²_F / ‖x − x̄‖²_F with x̄ the per-feature (column) mean over the batch.
NmseResult nmse(const Matrix& x, const Matrix& recon);

/// Trailing moving average over min(window, points so far).
std::vector<double> smooth(std::span<const double> series, std::size_t window);

struct MetricRecord {
    std::uint64_t step = 0;
    double nmse = 0.0;
    double perplexity = 0.0;
    double l_recons = 0.0;
    double l_commit = 0.0;
    double l_codebook = 0.0;

    bool operator==(const MetricRecord&) const = default;
};

/// Epoch-wise sample order drawn from SplitMix64.
struct ShuffleState {
    std::uint64_t rng_state = 0;
    std::vector<std::uint64_t> order;
    std::uint64_t cursor = 0;

    bool operator==(const ShuffleState&) const = default;
};

struct TrainState {
    std::uint64_t step = 0;
    AdamState adam;
    ShuffleState shuffle;
    std::vector<MetricRecord> history;

    bool operator==(const TrainState&) const = default;
};

struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    TrainConfig config;
    NetworkParams params;
    Codebook codebook;
    TrainState state;

    std::size_t input_width() const noexcept { return params.input_width(); }
    void validate() const;

    bool operator==(const Checkpoint&) const = default;
};

/// Fresh model, codebook and optimiser state for `config` (no steps taken).
Checkpoint initialize(const TrainConfig& config, std::size_t input_width);

std::vector<char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const char> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainHooks {
    /// Periodic and final checkpoints are written here atomically when set.
    std::optional<std::filesystem::path> checkpoint_path;
    /// Called after every completed step.
    std::function<void(const MetricRecord&)> on_step;
};

/// Thrown when a step produces a non-finite loss or gradient. The last
/// checkpoint written through the hooks is left untouched.
class TrainingDiverged : public NumericError {
public:
    TrainingDiverged(std::uint64_t step, const std::string& what)
        : NumericError("training diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
    std::uint64_t step() const noexcept { return step_; }

private:
    std::uint64_t step_;
};

/// Samples are the matrix columns.
Matrix samples_as_rows(const ExpressionMatrix& data);

/// Train from scratch for config.steps steps.
Checkpoint train(const ExpressionMatrix& data, const TrainConfig& config, const TrainHooks& hooks = {});

/// Continue `ckpt` until it has taken `total_steps` steps.
Checkpoint resume(Checkpoint ckpt, const ExpressionMatrix& data, std::size_t total_steps,
                  const TrainHooks& hooks = {});

/// Header "step,nmse,nmse_smooth,perplexity,perplexity_smooth,l_recons,l_commit,l_codebook".
std::string metrics_csv(std::span<const MetricRecord> history, std::size_t smoothing_window);

/// Keep large freed buffers on the heap rather than unmapping them, so the
/// step loop does not page-fault on every allocation. Process-wide; a no-op
/// outside glibc.
void keep_freed_memory();

/// Shortest decimal that round-trips the double exactly.
std::string format_double(double v);

}  // namespace vqs
