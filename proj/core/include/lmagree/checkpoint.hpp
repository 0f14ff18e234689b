// Model checkpoint file: a fixed little-endian binary header and weight image
// followed by the vocabulary in its text format.
//
// Layout: "LMAG" magic, u32 version (currently 1), u64 num_layers / vocab /
// embed_dim / hidden, then every parameter block row-major as f64 in the
// order embedding, per layer w_in / w_rec / bias, then w_out / b_out, and
// finally the vocabulary text running to end of file. Weights are stored as
// f64 regardless of the in-memory scalar, so float models round-trip through
// the same files.

#pragma once

#include "lmagree/corpus.hpp"
#include "lmagree/detail/binio.hpp"
#include "lmagree/lstm.hpp"

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace lmagree {

inline constexpr char kCheckpointMagic[4] = {'L', 'M', 'A', 'G'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class S>
struct Checkpoint {
    ModelParams<S> params;
    Vocabulary vocab;
};

template <class S>
void save_checkpoint(std::ostream& out, const ModelParams<S>& params,
                     const Vocabulary& vocab) {
    if (static_cast<Index>(vocab.size()) != params.vocab()) {
        throw std::invalid_argument(
            "checkpoint: vocabulary has " + std::to_string(vocab.size()) +
            " entries but weights expect " + std::to_string(params.vocab()));
    }
    detail::write_bytes(out, kCheckpointMagic, 4);
    detail::write_u32_le(out, kCheckpointVersion);
    detail::write_u64_le(out, static_cast<std::uint64_t>(params.num_layers()));
    detail::write_u64_le(out, static_cast<std::uint64_t>(params.vocab()));
    detail::write_u64_le(out, static_cast<std::uint64_t>(params.embed_dim()));
    detail::write_u64_le(out, static_cast<std::uint64_t>(params.hidden()));
    params.visit([&](const auto& block) {
        for (Index i = 0; i < block.rows(); ++i)
            for (Index j = 0; j < block.cols(); ++j)
                detail::write_f64_le(out, static_cast<double>(block(i, j)));
    });
    vocab.save(out);
    if (!out) throw std::runtime_error("checkpoint: write failed");
}

template <class S>
void save_checkpoint(const std::string& path, const ModelParams<S>& params,
                     const Vocabulary& vocab) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    save_checkpoint(out, params, vocab);
    if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

template <class S>
Checkpoint<S> load_checkpoint(std::istream& in) {
    char magic[4];
    detail::read_exact(in, magic, 4, "checkpoint magic");
    if (magic[0] != 'L' || magic[1] != 'M' || magic[2] != 'A' || magic[3] != 'G') {
        throw std::runtime_error("not a checkpoint file (bad magic)");
    }
    const std::uint32_t version = detail::read_u32_le(in, "checkpoint version");
    if (version != kCheckpointVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                                 " (expected " + std::to_string(kCheckpointVersion) + ")");
    }
    const auto num_layers = static_cast<Index>(detail::read_u64_le(in, "layer count"));
    const auto vocab_size = static_cast<Index>(detail::read_u64_le(in, "vocabulary size"));
    const auto embed_dim = static_cast<Index>(detail::read_u64_le(in, "embedding size"));
    const auto hidden = static_cast<Index>(detail::read_u64_le(in, "hidden size"));
    if (num_layers < 1 || vocab_size < 1 || embed_dim < 1 || hidden < 1) {
        throw std::runtime_error("checkpoint header has non-positive dimensions");
    }

    Checkpoint<S> ckpt;
    ckpt.params = ModelParams<S>::sized(vocab_size, embed_dim, hidden, num_layers);
    ckpt.params.visit([&](auto& block) {
        for (Index i = 0; i < block.rows(); ++i)
            for (Index j = 0; j < block.cols(); ++j)
                block(i, j) = static_cast<S>(detail::read_f64_le(in, "weights"));
    });
    ckpt.vocab = Vocabulary::load(in);
    if (static_cast<Index>(ckpt.vocab.size()) != vocab_size) {
        throw std::runtime_error(
            "checkpoint dimension mismatch: vocabulary has " +
            std::to_string(ckpt.vocab.size()) + " entries, weights expect " +
            std::to_string(vocab_size));
    }
    return ckpt;
}

template <class S>
Checkpoint<S> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return load_checkpoint<S>(in);
}

}  // namespace lmagree
