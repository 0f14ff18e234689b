#include "doctest.h"

#include <lmagree/checkpoint.hpp>
#include <lmagree/trainer.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lmagree;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& stem) {
    return fs::temp_directory_path() / ("lmagree_ckpt_" + stem);
}

Vocabulary four_word_vocab() {
    return Vocabulary::from_tokens({"<unk>", "<eos>", "la", "robe"}, {0, 10, 5, 3});
}

ModelParams<double> random_model(std::uint64_t seed) {
    ModelParams<double> m = ModelParams<double>::sized(4, 3, 5, 2);
    Rng rng(seed);
    m.visit([&](auto& block) { rng.fill_uniform(block, -0.9, 0.9); });
    return m;
}

}  // namespace

TEST_CASE("checkpoint: round-trip reproduces parameters bit-exactly") {
    ModelParams<double> m = random_model(1);
    Vocabulary v = four_word_vocab();
    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    save_checkpoint(buf, m, v);
    Checkpoint<double> back = load_checkpoint<double>(buf);

    CHECK(back.params.vocab() == 4);
    CHECK(back.params.embed_dim() == 3);
    CHECK(back.params.hidden() == 5);
    CHECK(back.params.num_layers() == 2);
    const Vec<double> a = m.flatten(), b = back.params.flatten();
    REQUIRE(a.size() == b.size());
    for (Index i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

    REQUIRE(back.vocab.size() == v.size());
    for (std::int32_t i = 0; i < 4; ++i) {
        CHECK(back.vocab.token(i) == v.token(i));
        CHECK(back.vocab.count(i) == v.count(i));
    }
}

TEST_CASE("checkpoint: perplexity is identical after a round-trip") {
    ModelParams<double> m = random_model(2);
    Vocabulary v = four_word_vocab();
    std::vector<std::int32_t> ids{2, 3, 1, 2, 2, 3, 0, 1, 2, 3};
    const double before = perplexity(m, ids, 4);

    const fs::path p = temp_file("ppl.ckpt");
    save_checkpoint(p.string(), m, v);
    Checkpoint<double> back = load_checkpoint<double>(p.string());
    CHECK(perplexity(back.params, ids, 4) == before);
    fs::remove(p);
}

TEST_CASE("checkpoint: two saves of the same model are byte-identical") {
    ModelParams<double> m = random_model(3);
    Vocabulary v = four_word_vocab();
    std::ostringstream a(std::ios::binary), b(std::ios::binary);
    save_checkpoint(a, m, v);
    save_checkpoint(b, m, v);
    CHECK(a.str() == b.str());
    CHECK(a.str().substr(0, 4) == "LMAG");
}

TEST_CASE("checkpoint: float-precision models round-trip exactly") {
    ModelParams<float> m = ModelParams<float>::sized(4, 3, 5, 2);
    Rng rng(4);
    m.visit([&](auto& block) { rng.fill_uniform(block, -0.9f, 0.9f); });
    Vocabulary v = four_word_vocab();
    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    save_checkpoint(buf, m, v);

    // Weights are stored as 64-bit floats, so a float model survives exactly
    // and a double load sees the same values.
    const std::string bytes = buf.str();
    std::istringstream wide_in(bytes, std::ios::binary);
    Checkpoint<double> wide = load_checkpoint<double>(wide_in);
    std::istringstream narrow_in(bytes, std::ios::binary);
    Checkpoint<float> narrow = load_checkpoint<float>(narrow_in);
    const Vec<double> a = m.flatten(), b = wide.params.flatten(), c = narrow.params.flatten();
    for (Index i = 0; i < a.size(); ++i) {
        CHECK(a[i] == b[i]);
        CHECK(a[i] == c[i]);
    }
}

TEST_CASE("checkpoint: corrupted magic bytes are reported as such") {
    ModelParams<double> m = random_model(5);
    Vocabulary v = four_word_vocab();
    const fs::path p = temp_file("badmagic.ckpt");
    save_checkpoint(p.string(), m, v);
    {
        std::fstream patch(p, std::ios::in | std::ios::out | std::ios::binary);
        patch.put('X');
    }
    CHECK_THROWS_WITH_AS(load_checkpoint<double>(p.string()),
                         "not a checkpoint file (bad magic)", std::runtime_error);
    fs::remove(p);
}

TEST_CASE("checkpoint: unsupported version is a distinct error") {
    ModelParams<double> m = random_model(6);
    Vocabulary v = four_word_vocab();
    const fs::path p = temp_file("badver.ckpt");
    save_checkpoint(p.string(), m, v);
    {
        std::fstream patch(p, std::ios::in | std::ios::out | std::ios::binary);
        patch.seekp(4);
        patch.put(static_cast<char>(7));
    }
    CHECK_THROWS_WITH_AS(load_checkpoint<double>(p.string()),
                         "unsupported checkpoint version 7 (expected 1)",
                         std::runtime_error);
    fs::remove(p);
}

TEST_CASE("checkpoint: truncated files are rejected") {
    ModelParams<double> m = random_model(7);
    Vocabulary v = four_word_vocab();
    const fs::path p = temp_file("trunc.ckpt");
    save_checkpoint(p.string(), m, v);
    fs::resize_file(p, fs::file_size(p) / 2);
    CHECK_THROWS_AS(load_checkpoint<double>(p.string()), std::runtime_error);
    fs::remove(p);
}

TEST_CASE("checkpoint: vocabulary/weight size mismatch is rejected on save") {
    ModelParams<double> m = random_model(8);  // expects 4 vocabulary entries
    Vocabulary v = Vocabulary::from_tokens({"<unk>", "<eos>", "la"}, {0, 0, 0});
    std::ostringstream out(std::ios::binary);
    CHECK_THROWS_AS(save_checkpoint(out, m, v), std::invalid_argument);
}

TEST_CASE("checkpoint: vocabulary/weight size mismatch is rejected on load") {
    ModelParams<double> m = random_model(9);
    Vocabulary v = four_word_vocab();
    std::stringstream buf(std::ios::in | std::ios::out | std::ios::binary);
    save_checkpoint(buf, m, v);
    // Strip the last vocabulary line ("robe\t3\n") from the payload.
    std::string bytes = buf.str();
    bytes.resize(bytes.size() - std::string("robe\t3\n").size());
    std::istringstream cut(bytes, std::ios::binary);
    CHECK_THROWS_AS(load_checkpoint<double>(cut), std::runtime_error);
}
