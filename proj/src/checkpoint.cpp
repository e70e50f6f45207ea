// Checkpoint serialisation. Byte layout is documented in docs/formats.md.

#include <array>
#include <string_view>

#include "vqs/binio.hpp"
#include "vqs/errors.hpp"
#include "vqs/training.hpp"

namespace vqs {

namespace {

constexpr std::string_view kMagic = "VQO1";
constexpr std::array<std::string_view, 8> kSections = {"CONF", "ENCD", "DECD", "CODE", "EMAS", "OPTM", "RNGS", "HIST"};

using Reader = ByteReader<CheckpointError>;

void put_matrix(ByteWriter& w, const Matrix& m) {
    w.u64(m.rows());
    w.u64(m.cols());
    for (double v : m.values()) w.f64(v);
}

Matrix get_matrix(Reader& r) {
    const auto rows = r.u64();
    const auto cols = r.u64();
    if (cols != 0 && rows > r.remaining() / sizeof(double) / cols) {
        throw CheckpointError(r.offset(), "matrix shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                                              " exceeds section size");
    }
    std::vector<double> data(rows * cols);
    for (auto& v : data) v = r.f64();
    return Matrix(rows, cols, std::move(data));
}

void put_layers(ByteWriter& w, const std::array<DenseLayer, 3>& layers) {
    for (const auto& l : layers) {
        put_matrix(w, l.weight);
        w.f64_array(l.bias);
    }
}

void get_layers(Reader& r, std::array<DenseLayer, 3>& layers) {
    for (auto& l : layers) {
        l.weight = get_matrix(r);
        l.bias = r.f64_array();
    }
}

std::vector<char> section_payload(const Checkpoint& c, std::string_view tag) {
    ByteWriter w;
    const auto& cfg = c.config;
    if (tag == "CONF") {
        w.u64(c.params.input_width());
        w.u64(cfg.hidden1);
        w.u64(cfg.hidden2);
        w.u64(cfg.latent_dim);
        w.u64(cfg.codebook_size);
        w.u32(cfg.activation == Activation::relu ? 0 : 1);
        w.u32(cfg.codebook_mode == CodebookMode::ema ? 0 : 1);
        w.u64(cfg.batch_size);
        w.u64(cfg.steps);
        w.f64(cfg.learning_rate);
        w.f64(cfg.adam_beta1);
        w.f64(cfg.adam_beta2);
        w.f64(cfg.adam_eps);
        w.f64(cfg.commitment);
        w.f64(cfg.ema_decay);
        w.f64(cfg.ema_epsilon);
        w.u64(cfg.seed);
        w.u64(cfg.smoothing_window);
        w.u64(cfg.checkpoint_interval);
    } else if (tag == "ENCD") {
        put_layers(w, c.params.encoder);
    } else if (tag == "DECD") {
        put_layers(w, c.params.decoder);
    } else if (tag == "CODE") {
        put_matrix(w, c.codebook.embeddings);
    } else if (tag == "EMAS") {
        w.f64_array(c.codebook.ema_counts);
        put_matrix(w, c.codebook.ema_sums);
    } else if (tag == "OPTM") {
        w.u64(c.state.adam.step);
        w.u64(c.state.adam.moments.size());
        for (const auto& m : c.state.adam.moments) {
            w.f64_array(m.first);
            w.f64_array(m.second);
        }
    } else if (tag == "RNGS") {
        w.u64(c.state.shuffle.rng_state);
        w.u64(c.state.shuffle.cursor);
        w.u64(c.state.shuffle.order.size());
        for (auto v : c.state.shuffle.order) w.u64(v);
    } else if (tag == "HIST") {
        w.u64(c.state.step);
        w.u64(c.state.history.size());
        for (const auto& h : c.state.history) {
            w.u64(h.step);
            w.f64(h.nmse);
            w.f64(h.perplexity);
            w.f64(h.l_recons);
            w.f64(h.l_commit);
            w.f64(h.l_codebook);
        }
    }
    return std::move(w.buffer());
}

std::uint32_t get_enum(Reader& r, const char* what) {
    const auto at = r.offset();
    const auto v = r.u32();
    if (v > 1) throw CheckpointError(at, std::string("invalid ") + what + " code " + std::to_string(v));
    return v;
}

void read_section(Checkpoint& c, std::string_view tag, Reader& r, std::uint64_t& input_width) {
    auto& cfg = c.config;
    if (tag == "CONF") {
        input_width = r.u64();
        cfg.hidden1 = r.u64();
        cfg.hidden2 = r.u64();
        cfg.latent_dim = r.u64();
        cfg.codebook_size = r.u64();
        cfg.activation = get_enum(r, "activation") == 0 ? Activation::relu : Activation::tanh;
        cfg.codebook_mode = get_enum(r, "codebook mode") == 0 ? CodebookMode::ema : CodebookMode::loss;
        cfg.batch_size = r.u64();
        cfg.steps = r.u64();
        cfg.learning_rate = r.f64();
        cfg.adam_beta1 = r.f64();
        cfg.adam_beta2 = r.f64();
        cfg.adam_eps = r.f64();
        cfg.commitment = r.f64();
        cfg.ema_decay = r.f64();
        cfg.ema_epsilon = r.f64();
        cfg.seed = r.u64();
        cfg.smoothing_window = r.u64();
        cfg.checkpoint_interval = r.u64();
    } else if (tag == "ENCD") {
        get_layers(r, c.params.encoder);
    } else if (tag == "DECD") {
        get_layers(r, c.params.decoder);
    } else if (tag == "CODE") {
        c.codebook.embeddings = get_matrix(r);
    } else if (tag == "EMAS") {
        c.codebook.ema_counts = r.f64_array();
        c.codebook.ema_sums = get_matrix(r);
    } else if (tag == "OPTM") {
        c.state.adam.step = r.u64();
        const auto n = r.u64();
        if (n > r.remaining()) throw CheckpointError(r.offset(), "optimiser tensor count exceeds section size");
        c.state.adam.moments.resize(n);
        for (auto& m : c.state.adam.moments) {
            m.first = r.f64_array();
            m.second = r.f64_array();
        }
    } else if (tag == "RNGS") {
        c.state.shuffle.rng_state = r.u64();
        c.state.shuffle.cursor = r.u64();
        const auto n = r.u64();
        if (n > r.remaining() / 8) throw CheckpointError(r.offset(), "shuffle order length exceeds section size");
        c.state.shuffle.order.resize(n);
        for (auto& v : c.state.shuffle.order) v = r.u64();
    } else if (tag == "HIST") {
        c.state.step = r.u64();
        const auto n = r.u64();
        if (n > r.remaining() / 48) throw CheckpointError(r.offset(), "history length exceeds section size");
        c.state.history.resize(n);
        for (auto& h : c.state.history) {
            h.step = r.u64();
            h.nmse = r.f64();
            h.perplexity = r.f64();
            h.l_recons = r.f64();
            h.l_commit = r.f64();
            h.l_codebook = r.f64();
        }
    }
}

}  // namespace

std::vector<char> encode_checkpoint(const Checkpoint& ckpt) {
    ckpt.validate();
    ByteWriter w;
    w.bytes(kMagic);
    w.u32(Checkpoint::kVersion);
    for (auto tag : kSections) {
        const auto payload = section_payload(ckpt, tag);
        w.bytes(tag);
        w.u64(payload.size());
        w.bytes(std::string_view(payload.data(), payload.size()));
    }
    return std::move(w.buffer());
}

Checkpoint decode_checkpoint(std::span<const char> bytes) {
    Reader r(bytes);
    if (r.bytes(4) != kMagic) throw CheckpointError(0, "bad magic, expected VQO1");
    const auto version = r.u32();
    if (version != Checkpoint::kVersion) {
        throw CheckpointError(4, "unsupported checkpoint version " + std::to_string(version) + " (this build reads " +
                                     std::to_string(Checkpoint::kVersion) + ")");
    }
    Checkpoint c;
    std::uint64_t input_width = 0;
    for (auto tag : kSections) {
        const auto tag_at = r.offset();
        const auto got = r.bytes(4);
        if (got != tag) throw CheckpointError(tag_at, "expected section " + std::string(tag) + ", found '" + got + "'");
        const auto len = r.u64();
        const auto body_at = r.offset();
        Reader section(r.take(len), body_at);
        read_section(c, tag, section, input_width);
        if (!section.done()) throw CheckpointError(section.offset(), "trailing bytes in section " + std::string(tag));
    }
    if (!r.done()) throw CheckpointError(r.offset(), "trailing bytes after last section");

    c.params.activation = c.config.activation;
    c.codebook.decay = c.config.ema_decay;
    c.codebook.epsilon = c.config.ema_epsilon;
    const auto end = r.offset();
    try {
        c.validate();
        if (c.params.input_width() != input_width || c.params.latent_dim() != c.config.latent_dim ||
            c.params.encoder[0].weight.cols() != c.config.hidden1 ||
            c.params.encoder[1].weight.cols() != c.config.hidden2 || c.codebook.size() != c.config.codebook_size) {
            throw ValidationError("tensor shapes disagree with the stored configuration");
        }
        const auto tensors = c.params.tensors();
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            if (c.state.adam.moments[i].first.size() != tensors[i].size() ||
                c.state.adam.moments[i].second.size() != tensors[i].size()) {
                throw ValidationError("optimiser moments do not match parameter shapes");
            }
        }
        if (c.state.shuffle.cursor > c.state.shuffle.order.size()) throw ValidationError("shuffle cursor out of range");
    } catch (const ValidationError& e) {
        throw CheckpointError(end, e.what());
    }
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace vqs
