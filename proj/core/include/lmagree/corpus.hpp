// Corpus ingestion: line normalization, frequency-capped vocabulary,
// id encoding with <unk>/<eos> handling, and contiguous-stream batching.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lmagree {

// Optional variant -> canonical token rewrite applied during normalization.
// Loaded from a two-column tab-separated file; rewriting happens before
// counting, so variant frequencies accumulate under the canonical form.
using MergeMap = std::unordered_map<std::string, std::string>;

MergeMap load_merge_map(const std::string& path);

// Lowercases, composes combining accents onto their base letters (Latin
// repertoire), drops tokens made solely of punctuation codepoints, and
// applies the merge map. Whitespace-tokenizes the input line.
std::vector<std::string> normalize_line(std::string_view line,
                                        const MergeMap* merges = nullptr);

constexpr const char* kUnkToken = "<unk>";
constexpr const char* kEosToken = "<eos>";

// Bijective token <-> id map. Ids 0 and 1 are reserved for <unk> and <eos>;
// the remaining tokens are ordered by descending training frequency with
// lexicographic tie-breaking, so id order is the frequency rank order.
class Vocabulary {
public:
    Vocabulary() = default;

    // Builds from per-token counts of a normalized stream. Keeps at most
    // `cap` non-special tokens. Literal "<unk>"/"<eos>" occurrences in the
    // stream fold into the specials instead of competing for cap slots.
    static Vocabulary build(const std::map<std::string, std::int64_t>& token_counts,
                            std::size_t cap);

    // Direct construction, e.g. when reloading from disk. Throws unless
    // <unk> and <eos> are present and tokens are unique.
    static Vocabulary from_tokens(const std::vector<std::string>& tokens,
                                  const std::vector<std::int64_t>& counts);

    std::int32_t id(std::string_view token) const;     // unk_id for OOV
    bool contains(std::string_view token) const;
    const std::string& token(std::int32_t id) const;   // throws on bad id
    std::int64_t count(std::int32_t id) const;

    std::int32_t unk_id() const { return unk_id_; }
    std::int32_t eos_id() const { return eos_id_; }
    std::size_t size() const { return id_to_token_.size(); }

    const std::vector<std::string>& tokens() const { return id_to_token_; }

    // One "token<TAB>count" line per id, in id order.
    void save(std::ostream& out) const;
    void save(const std::string& path) const;
    static Vocabulary load(std::istream& in);
    static Vocabulary load(const std::string& path);

private:
    std::vector<std::string> id_to_token_;
    std::vector<std::int64_t> counts_;
    std::unordered_map<std::string, std::int32_t> token_to_id_;
    std::int32_t unk_id_ = 0;
    std::int32_t eos_id_ = 1;
};

enum class Split : std::uint8_t { train = 0, valid = 1, test = 2 };

struct EncodedCorpus {
    std::vector<std::int32_t> ids;
    Split split = Split::train;
};

// Counts tokens of a whole normalized stream (one vector per line).
std::map<std::string, std::int64_t> count_tokens(
    const std::vector<std::vector<std::string>>& lines);

// Encodes one normalized line: in-vocabulary tokens map to their ids, all
// others to unk_id, and eos_id is appended.
void encode_line(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                 std::vector<std::int32_t>& out);

EncodedCorpus encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                     Split split = Split::train);
EncodedCorpus encode(const std::vector<std::vector<std::string>>& lines,
                     const Vocabulary& vocab, Split split = Split::train);

// Inverse of encode up to OOV: unknown ids render as "<unk>".
std::vector<std::string> decode(const std::vector<std::int32_t>& ids,
                                const Vocabulary& vocab);

// Reads a raw corpus file (UTF-8, one sentence per line), normalizing every
// line. Lines that normalize to nothing are skipped.
std::vector<std::vector<std::string>> read_normalized_lines(
    const std::string& path, const MergeMap* merges = nullptr);

EncodedCorpus encode_file(const std::string& path, const Vocabulary& vocab,
                          Split split, const MergeMap* merges = nullptr);

// Dense id block, row-major; rows are batch streams, cols are time steps.
struct IdBlock {
    std::int32_t rows = 0;
    std::int32_t cols = 0;
    std::vector<std::int32_t> ids;

    std::int32_t at(std::int32_t r, std::int32_t c) const {
        return ids[static_cast<std::size_t>(r) * cols + c];
    }
    std::int32_t& at(std::int32_t r, std::int32_t c) {
        return ids[static_cast<std::size_t>(r) * cols + c];
    }
};

struct BatchBlock {
    IdBlock input;
    IdBlock target;  // input shifted one position forward in the stream
};

struct BatchPlan {
    std::int32_t batch_size = 0;
    std::int32_t bptt_len = 0;
    std::vector<BatchBlock> blocks;
};

// Splits the corpus into batch_size contiguous streams (trailing remainder
// dropped) and chunks each stream into bptt-length blocks; the final block
// may be shorter. Throws "insufficient data" when the corpus cannot fill
// batch_size * (bptt_len + 1) positions.
BatchPlan batchify(const EncodedCorpus& corpus, std::int32_t batch_size,
                   std::int32_t bptt_len);

// Binary id-stream files written by the preprocess step.
void save_encoded(const EncodedCorpus& corpus, const std::string& path);
EncodedCorpus load_encoded(const std::string& path);

}  // namespace lmagree
