#include "vqs/training.hpp"

#include <charconv>
#include <cmath>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "vqs/errors.hpp"

namespace vqs {

ModelShape TrainConfig::model_shape(std::size_t input_width) const {
    return {input_width, hidden1, hidden2, latent_dim, codebook_size, activation};
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw ValidationError("invalid training config: " + what); };
    if (hidden1 < 1 || hidden2 < 1 || latent_dim < 1 || codebook_size < 1) fail("layer widths must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1 must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2 must lie in [0, 1)");
    if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
    if (!(commitment >= 0.0) || !std::isfinite(commitment)) fail("commitment beta must be >= 0");
    if (!(ema_decay > 0.0 && ema_decay < 1.0)) fail("ema_decay must lie in (0, 1)");
    if (!(ema_epsilon > 0.0)) fail("ema_epsilon must be > 0");
    if (smoothing_window < 1) fail("smoothing_window must be >= 1");
}

AdamState AdamState::for_tensors(std::span<const std::span<double>> tensors) {
    AdamState s;
    for (auto t : tensors) s.moments.push_back({std::vector<double>(t.size(), 0.0), std::vector<double>(t.size(), 0.0)});
    return s;
}

void adam_step(std::span<const std::span<double>> params, std::span<const std::span<double>> grads, AdamState& state,
               const AdamHyper& hyper) {
    if (params.size() != grads.size() || params.size() != state.moments.size()) {
        throw ShapeError("adam_step: " + std::to_string(params.size()) + " tensors, " +
                         std::to_string(grads.size()) + " gradients, " + std::to_string(state.moments.size()) +
                         " moment pairs");
    }
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].size() != grads[t].size() || params[t].size() != state.moments[t].first.size() ||
            params[t].size() != state.moments[t].second.size()) {
            throw ShapeError("adam_step: tensor " + std::to_string(t) + " shape mismatch");
        }
        if (!all_finite(grads[t])) throw NumericError("non-finite gradient in tensor " + std::to_string(t));
    }

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(hyper.beta1, t);
    const double correction2 = 1.0 - std::pow(hyper.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto theta = params[k];
        auto g = grads[k];
        auto& m = state.moments[k].first;
        auto& v = state.moments[k].second;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
            v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            theta[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.eps);
        }
    }
}

NmseResult nmse(const Matrix& x, const Matrix& recon) {
    if (x.rows() != recon.rows() || x.cols() != recon.cols()) {
        throw ShapeError("nmse: " + x.shape_string() + " vs " + recon.shape_string());
    }
    const auto stats = column_stats(x);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) {
            const double e = x(r, c) - recon(r, c);
            const double d = x(r, c) - stats.means[c];
            num += e * e;
            den += d * d;
        }
    }
    if (den == 0.0) {
        const double n = static_cast<double>(x.size());
        return {n > 0 ? num / n : 0.0, true};
    }
    return {num / den, false};
}

std::vector<double> smooth(std::span<const double> series, std::size_t window) {
    if (window < 1) throw ValidationError("smoothing window must be >= 1");
    std::vector<double> out(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
        double sum = 0.0;
        for (std::size_t j = lo; j <= i; ++j) sum += series[j];
        out[i] = sum / static_cast<double>(i + 1 - lo);
    }
    return out;
}

void Checkpoint::validate() const {
    config.validate();
    params.validate();
    codebook.validate();
    if (codebook.dim() != params.latent_dim()) throw ValidationError("codebook width does not match latent width");
    if (state.history.size() != state.step) throw ValidationError("metric history length does not match step count");
    for (std::size_t i = 0; i < state.history.size(); ++i) {
        if (state.history[i].step != i + 1) throw ValidationError("metric history steps are not 1..step");
    }
    const std::size_t expected = 12 + (config.codebook_mode == CodebookMode::loss ? 1 : 0);
    if (state.adam.moments.size() != expected) throw ValidationError("optimiser state has the wrong tensor count");
}

namespace {

std::vector<std::span<double>> trainable(Checkpoint& c) {
    auto t = c.params.tensors();
    if (c.config.codebook_mode == CodebookMode::loss) t.emplace_back(c.codebook.embeddings.values());
    return t;
}

std::vector<std::size_t> next_batch(ShuffleState& s, std::size_t n_samples, std::size_t batch) {
    SplitMix64 rng(s.rng_state);
    std::vector<std::size_t> out;
    out.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        if (s.cursor >= s.order.size()) {
            s.order.resize(n_samples);
            std::iota(s.order.begin(), s.order.end(), std::uint64_t{0});
            rng.shuffle(std::span<std::uint64_t>(s.order));
            s.cursor = 0;
        }
        out.push_back(static_cast<std::size_t>(s.order[s.cursor++]));
    }
    s.rng_state = rng.state();
    return out;
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = m.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

void run_steps(Checkpoint& c, const Matrix& samples, std::size_t total_steps, const TrainHooks& hooks) {
    const auto& cfg = c.config;
    const AdamHyper hyper{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
    while (c.state.step < total_steps) {
        const std::uint64_t step = c.state.step + 1;
        const Matrix x = gather_rows(samples, next_batch(c.state.shuffle, samples.rows(), cfg.batch_size));
        try {
            const ForwardTrace trace = forward(c.params, c.codebook, x);
            const LossTerms loss = loss_terms(x, trace, cfg.commitment, cfg.codebook_mode);
            Gradients g = backward(c.params, x, trace, c.codebook, cfg.commitment, cfg.codebook_mode);
            auto grads = g.tensors();
            if (cfg.codebook_mode == CodebookMode::loss) grads.emplace_back(g.codebook.values());
            adam_step(trainable(c), grads, c.state.adam, hyper);
            if (cfg.codebook_mode == CodebookMode::ema) ema_update(c.codebook, trace.z_e(), trace.indices);
            for (auto t : trainable(c))
                if (!all_finite(t)) throw NumericError("parameters became non-finite");
            if (!all_finite(c.codebook.embeddings.values())) throw NumericError("codebook became non-finite");

            MetricRecord rec;
            rec.step = step;
            rec.nmse = nmse(x, trace.recon()).value;
            rec.perplexity = perplexity(trace.indices, c.codebook.size());
            rec.l_recons = loss.recons;
            rec.l_commit = loss.commit;
            rec.l_codebook = loss.codebook;
            c.state.history.push_back(rec);
            c.state.step = step;
            if (hooks.on_step) hooks.on_step(rec);
        } catch (const NumericError& e) {
            throw TrainingDiverged(step, e.what());
        }
        if (hooks.checkpoint_path && cfg.checkpoint_interval > 0 && c.state.step % cfg.checkpoint_interval == 0 &&
            c.state.step < total_steps) {
            save_checkpoint(c, *hooks.checkpoint_path);
        }
    }
    if (hooks.checkpoint_path) save_checkpoint(c, *hooks.checkpoint_path);
}

}  // namespace

Checkpoint initialize(const TrainConfig& config, std::size_t input_width) {
    config.validate();
    Checkpoint c;
    c.config = config;
    SplitMix64 init_rng(derive_seed(config.seed, 1));
    c.params = init_network(config.model_shape(input_width), init_rng);
    c.codebook = init_codebook(config.codebook_size, config.latent_dim, config.ema_decay, config.ema_epsilon, init_rng);
    c.state.adam = AdamState::for_tensors(trainable(c));
    c.state.shuffle.rng_state = derive_seed(config.seed, 2);
    return c;
}

Matrix samples_as_rows(const ExpressionMatrix& data) {
    if (data.has_missing()) throw ValidationError("training data contains missing values; preprocess it first");
    return data.values.transposed();
}

Checkpoint train(const ExpressionMatrix& data, const TrainConfig& config, const TrainHooks& hooks) {
    if (data.n_samples() == 0 || data.n_features() == 0) throw ValidationError("training data is empty");
    Checkpoint c = initialize(config, data.n_features());
    run_steps(c, samples_as_rows(data), config.steps, hooks);
    return c;
}

Checkpoint resume(Checkpoint ckpt, const ExpressionMatrix& data, std::size_t total_steps, const TrainHooks& hooks) {
    if (data.n_features() != ckpt.input_width()) {
        throw ShapeError("resume: data has " + std::to_string(data.n_features()) + " features, checkpoint expects " +
                         std::to_string(ckpt.input_width()));
    }
    if (total_steps < ckpt.state.step) {
        throw ValidationError("resume: checkpoint is already at step " + std::to_string(ckpt.state.step));
    }
    ckpt.config.steps = total_steps;
    run_steps(ckpt, samples_as_rows(data), total_steps, hooks);
    return ckpt;
}

void keep_freed_memory() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string metrics_csv(std::span<const MetricRecord> history, std::size_t smoothing_window) {
    std::vector<double> nm, px;
    for (const auto& r : history) {
        nm.push_back(r.nmse);
        px.push_back(r.perplexity);
    }
    const auto nm_s = smooth(nm, smoothing_window);
    const auto px_s = smooth(px, smoothing_window);
    std::string out = "step,nmse,nmse_smooth,perplexity,perplexity_smooth,l_recons,l_commit,l_codebook\n";
    for (std::size_t i = 0; i < history.size(); ++i) {
        const auto& r = history[i];
        out += std::to_string(r.step) + ',' + format_double(r.nmse) + ',' + format_double(nm_s[i]) + ',' +
               format_double(r.perplexity) + ',' + format_double(px_s[i]) + ',' + format_double(r.l_recons) + ',' +
               format_double(r.l_commit) + ',' + format_double(r.l_codebook) + '\n';
    }
    return out;
}

}  // namespace vqs
