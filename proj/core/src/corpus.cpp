#include "lmagree/corpus.hpp"

#include "lmagree/detail/binio.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lmagree {

namespace {

// ---------------------------------------------------------------------------
// UTF-8 / codepoint helpers. Coverage is the Latin repertoire that occurs in
// the corpora this toolkit targets; bytes that do not form valid UTF-8 are
// interpreted as Latin-1.
// ---------------------------------------------------------------------------

std::vector<std::uint32_t> decode_utf8(std::string_view s) {
    std::vector<std::uint32_t> cps;
    cps.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const unsigned char b0 = static_cast<unsigned char>(s[i]);
        std::uint32_t cp = 0;
        std::size_t len = 0;
        if (b0 < 0x80) {
            cp = b0;
            len = 1;
        } else if ((b0 >> 5) == 0x6) {
            cp = b0 & 0x1F;
            len = 2;
        } else if ((b0 >> 4) == 0xE) {
            cp = b0 & 0x0F;
            len = 3;
        } else if ((b0 >> 3) == 0x1E) {
            cp = b0 & 0x07;
            len = 4;
        } else {
            cps.push_back(b0);  // stray continuation byte: Latin-1 fallback
            ++i;
            continue;
        }
        if (i + len > s.size()) {
            cps.push_back(b0);
            ++i;
            continue;
        }
        bool valid = true;
        for (std::size_t k = 1; k < len; ++k) {
            const unsigned char bk = static_cast<unsigned char>(s[i + k]);
            if ((bk >> 6) != 0x2) {
                valid = false;
                break;
            }
            cp = (cp << 6) | (bk & 0x3F);
        }
        if (!valid) {
            cps.push_back(b0);
            ++i;
            continue;
        }
        cps.push_back(cp);
        i += len;
    }
    return cps;
}

void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::uint32_t to_lower_cp(std::uint32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;  // Latin-1 capitals
    if (cp == 0x152) return 0x153;                                 // OE ligature
    if (cp == 0x178) return 0xFF;                                  // Y with diaeresis
    return cp;
}

bool is_punct_cp(std::uint32_t cp) {
    // ASCII punctuation categories (P*), excluding the symbol characters
    // $ + < = > ^ ` | ~ which Unicode classes as S*.
    static constexpr std::string_view ascii = "!\"#%&'()*,-./:;?@[\\]_{}";
    if (cp < 0x80) return ascii.find(static_cast<char>(cp)) != std::string_view::npos;
    switch (cp) {
        case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
            return true;
        default:
            break;
    }
    // General Punctuation block minus the two Sm codepoints it contains.
    if (cp >= 0x2010 && cp <= 0x2027) return true;
    if (cp >= 0x2030 && cp <= 0x205E) return cp != 0x2044 && cp != 0x2052;
    return false;
}

// Canonical composition of (base, combining mark) pairs for the Latin
// precomposed letters. Returns 0 when the pair has no composed form.
std::uint32_t compose_pair(std::uint32_t base, std::uint32_t mark) {
    struct Entry {
        char base;
        std::uint32_t composed;
    };
    auto lookup = [](const Entry* table, std::size_t n, std::uint32_t b) -> std::uint32_t {
        for (std::size_t i = 0; i < n; ++i)
            if (static_cast<std::uint32_t>(table[i].base) == b) return table[i].composed;
        return 0;
    };
    static constexpr Entry grave[] = {{'A', 0xC0}, {'E', 0xC8}, {'I', 0xCC}, {'O', 0xD2},
                                      {'U', 0xD9}, {'a', 0xE0}, {'e', 0xE8}, {'i', 0xEC},
                                      {'o', 0xF2}, {'u', 0xF9}};
    static constexpr Entry acute[] = {{'A', 0xC1}, {'E', 0xC9}, {'I', 0xCD}, {'O', 0xD3},
                                      {'U', 0xDA}, {'Y', 0xDD}, {'a', 0xE1}, {'e', 0xE9},
                                      {'i', 0xED}, {'o', 0xF3}, {'u', 0xFA}, {'y', 0xFD}};
    static constexpr Entry circ[] = {{'A', 0xC2}, {'E', 0xCA}, {'I', 0xCE}, {'O', 0xD4},
                                     {'U', 0xDB}, {'a', 0xE2}, {'e', 0xEA}, {'i', 0xEE},
                                     {'o', 0xF4}, {'u', 0xFB}};
    static constexpr Entry tilde[] = {{'A', 0xC3}, {'N', 0xD1}, {'O', 0xD5},
                                      {'a', 0xE3}, {'n', 0xF1}, {'o', 0xF5}};
    static constexpr Entry diaer[] = {{'A', 0xC4}, {'E', 0xCB}, {'I', 0xCF}, {'O', 0xD6},
                                      {'U', 0xDC}, {'a', 0xE4}, {'e', 0xEB}, {'i', 0xEF},
                                      {'o', 0xF6}, {'u', 0xFC}, {'y', 0xFF}};
    switch (mark) {
        case 0x300: return lookup(grave, std::size(grave), base);
        case 0x301: return lookup(acute, std::size(acute), base);
        case 0x302: return lookup(circ, std::size(circ), base);
        case 0x303: return lookup(tilde, std::size(tilde), base);
        case 0x308:
            if (base == 'Y') return 0x178;
            return lookup(diaer, std::size(diaer), base);
        case 0x327:
            if (base == 'C') return 0xC7;
            if (base == 'c') return 0xE7;
            return 0;
        default: return 0;
    }
}

std::string normalize_token(std::string_view raw) {
    const std::vector<std::uint32_t> cps = decode_utf8(raw);
    std::vector<std::uint32_t> composed;
    composed.reserve(cps.size());
    for (const std::uint32_t cp : cps) {
        if (!composed.empty()) {
            if (const std::uint32_t c = compose_pair(composed.back(), cp)) {
                composed.back() = c;
                continue;
            }
        }
        composed.push_back(cp);
    }
    bool punct_only = !composed.empty();
    std::string out;
    for (std::uint32_t cp : composed) {
        cp = to_lower_cp(cp);
        if (!is_punct_cp(cp)) punct_only = false;
        append_utf8(out, cp);
    }
    if (punct_only) return {};
    return out;
}

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
}

}  // namespace

std::vector<std::string> normalize_line(std::string_view line, const MergeMap* merges) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && is_space(line[i])) ++i;
        std::size_t j = i;
        while (j < line.size() && !is_space(line[j])) ++j;
        if (j > i) {
            std::string tok = normalize_token(line.substr(i, j - i));
            if (!tok.empty()) {
                if (merges) {
                    if (auto it = merges->find(tok); it != merges->end()) tok = it->second;
                }
                tokens.push_back(std::move(tok));
            }
        }
        i = j;
    }
    return tokens;
}

MergeMap load_merge_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open merge map: " + path);
    MergeMap map;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size()) {
            throw std::runtime_error("merge map " + path + ": line " +
                                     std::to_string(lineno) +
                                     ": expected variant<TAB>canonical");
        }
        map[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return map;
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

Vocabulary Vocabulary::build(const std::map<std::string, std::int64_t>& token_counts,
                             std::size_t cap) {
    if (token_counts.empty()) throw std::runtime_error("empty corpus");
    if (cap < 1) throw std::invalid_argument("vocabulary cap must be >= 1");

    std::int64_t unk_count = 0;
    std::int64_t eos_count = 0;
    std::vector<std::pair<std::string, std::int64_t>> ranked;
    ranked.reserve(token_counts.size());
    for (const auto& [tok, cnt] : token_counts) {
        if (tok == kUnkToken) {
            unk_count += cnt;
        } else if (tok == kEosToken) {
            eos_count += cnt;
        } else {
            ranked.emplace_back(tok, cnt);
        }
    }
    // Descending count, ties broken by token order for reproducibility.
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > cap) ranked.resize(cap);

    Vocabulary v;
    v.id_to_token_ = {kUnkToken, kEosToken};
    v.counts_ = {unk_count, eos_count};
    v.unk_id_ = 0;
    v.eos_id_ = 1;
    for (auto& [tok, cnt] : ranked) {
        v.token_to_id_[tok] = static_cast<std::int32_t>(v.id_to_token_.size());
        v.id_to_token_.push_back(std::move(tok));
        v.counts_.push_back(cnt);
    }
    v.token_to_id_[kUnkToken] = v.unk_id_;
    v.token_to_id_[kEosToken] = v.eos_id_;
    return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens,
                                   const std::vector<std::int64_t>& counts) {
    if (!counts.empty() && counts.size() != tokens.size()) {
        throw std::invalid_argument("vocabulary counts/token size mismatch");
    }
    Vocabulary v;
    v.id_to_token_ = tokens;
    v.counts_ = counts.empty() ? std::vector<std::int64_t>(tokens.size(), 0) : counts;
    v.unk_id_ = -1;
    v.eos_id_ = -1;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto [it, inserted] =
            v.token_to_id_.emplace(tokens[i], static_cast<std::int32_t>(i));
        if (!inserted) throw std::runtime_error("duplicate vocabulary token: " + tokens[i]);
        if (tokens[i] == kUnkToken) v.unk_id_ = static_cast<std::int32_t>(i);
        if (tokens[i] == kEosToken) v.eos_id_ = static_cast<std::int32_t>(i);
    }
    if (v.unk_id_ < 0 || v.eos_id_ < 0) {
        throw std::runtime_error("vocabulary is missing <unk> or <eos>");
    }
    return v;
}

std::int32_t Vocabulary::id(std::string_view token) const {
    const auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? unk_id_ : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
    return token_to_id_.find(std::string(token)) != token_to_id_.end();
}

const std::string& Vocabulary::token(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
        throw std::out_of_range("token id out of range: " + std::to_string(id));
    }
    return id_to_token_[static_cast<std::size_t>(id)];
}

std::int64_t Vocabulary::count(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= counts_.size()) {
        throw std::out_of_range("token id out of range: " + std::to_string(id));
    }
    return counts_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(std::ostream& out) const {
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
        out << id_to_token_[i] << '\t' << counts_[i] << '\n';
    }
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write vocabulary: " + path);
    save(out);
    if (!out) throw std::runtime_error("write failure: " + path);
}

Vocabulary Vocabulary::load(std::istream& in) {
    std::vector<std::string> tokens;
    std::vector<std::int64_t> counts;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::runtime_error("vocabulary line " + std::to_string(lineno) +
                                     ": expected token<TAB>count");
        }
        tokens.push_back(line.substr(0, tab));
        counts.push_back(std::stoll(line.substr(tab + 1)));
    }
    return from_tokens(tokens, counts);
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open vocabulary: " + path);
    return load(in);
}

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

std::map<std::string, std::int64_t> count_tokens(
    const std::vector<std::vector<std::string>>& lines) {
    std::map<std::string, std::int64_t> counts;
    for (const auto& line : lines)
        for (const auto& tok : line) ++counts[tok];
    return counts;
}

void encode_line(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                 std::vector<std::int32_t>& out) {
    for (const auto& tok : tokens) out.push_back(vocab.id(tok));
    out.push_back(vocab.eos_id());
}

EncodedCorpus encode(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                     Split split) {
    EncodedCorpus c;
    c.split = split;
    encode_line(tokens, vocab, c.ids);
    return c;
}

EncodedCorpus encode(const std::vector<std::vector<std::string>>& lines,
                     const Vocabulary& vocab, Split split) {
    EncodedCorpus c;
    c.split = split;
    for (const auto& line : lines) {
        if (!line.empty()) encode_line(line, vocab, c.ids);
    }
    return c;
}

std::vector<std::string> decode(const std::vector<std::int32_t>& ids,
                                const Vocabulary& vocab) {
    std::vector<std::string> tokens;
    tokens.reserve(ids.size());
    for (const std::int32_t id : ids) tokens.push_back(vocab.token(id));
    return tokens;
}

std::vector<std::vector<std::string>> read_normalized_lines(const std::string& path,
                                                            const MergeMap* merges) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open corpus: " + path);
    std::vector<std::vector<std::string>> lines;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> toks = normalize_line(line, merges);
        if (!toks.empty()) lines.push_back(std::move(toks));
    }
    return lines;
}

EncodedCorpus encode_file(const std::string& path, const Vocabulary& vocab, Split split,
                          const MergeMap* merges) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open corpus: " + path);
    EncodedCorpus c;
    c.split = split;
    std::string line;
    while (std::getline(in, line)) {
        const std::vector<std::string> toks = normalize_line(line, merges);
        if (!toks.empty()) encode_line(toks, vocab, c.ids);
    }
    return c;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

BatchPlan batchify(const EncodedCorpus& corpus, std::int32_t batch_size,
                   std::int32_t bptt_len) {
    if (batch_size < 1 || bptt_len < 1) {
        throw std::invalid_argument("batchify: batch_size and bptt_len must be >= 1");
    }
    const std::size_t n = corpus.ids.size();
    const std::size_t needed =
        static_cast<std::size_t>(batch_size) * (static_cast<std::size_t>(bptt_len) + 1);
    if (n < needed) {
        throw std::runtime_error("insufficient data: corpus has " + std::to_string(n) +
                                 " ids, need at least " + std::to_string(needed));
    }
    const std::size_t stream_len = n / static_cast<std::size_t>(batch_size);

    BatchPlan plan;
    plan.batch_size = batch_size;
    plan.bptt_len = bptt_len;
    // stream r is the contiguous slice [r*stream_len, (r+1)*stream_len)
    for (std::size_t offset = 0; offset + 1 < stream_len;
         offset += static_cast<std::size_t>(bptt_len)) {
        const std::int32_t steps = static_cast<std::int32_t>(
            std::min<std::size_t>(bptt_len, stream_len - 1 - offset));
        BatchBlock block;
        block.input.rows = block.target.rows = batch_size;
        block.input.cols = block.target.cols = steps;
        block.input.ids.resize(static_cast<std::size_t>(batch_size) * steps);
        block.target.ids.resize(static_cast<std::size_t>(batch_size) * steps);
        for (std::int32_t r = 0; r < batch_size; ++r) {
            const std::size_t base = static_cast<std::size_t>(r) * stream_len + offset;
            for (std::int32_t c = 0; c < steps; ++c) {
                block.input.at(r, c) = corpus.ids[base + c];
                block.target.at(r, c) = corpus.ids[base + c + 1];
            }
        }
        plan.blocks.push_back(std::move(block));
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Binary id-stream format: "LMAI", u32 version, u8 split, u64 count, i32 ids.
// ---------------------------------------------------------------------------

namespace {
constexpr char kIdsMagic[4] = {'L', 'M', 'A', 'I'};
constexpr std::uint32_t kIdsVersion = 1;
}  // namespace

void save_encoded(const EncodedCorpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write encoded corpus: " + path);
    detail::write_bytes(out, kIdsMagic, 4);
    detail::write_u32_le(out, kIdsVersion);
    out.put(static_cast<char>(corpus.split));
    detail::write_u64_le(out, corpus.ids.size());
    for (const std::int32_t id : corpus.ids) detail::write_i32_le(out, id);
    if (!out) throw std::runtime_error("write failure: " + path);
}

EncodedCorpus load_encoded(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open encoded corpus: " + path);
    char magic[4];
    detail::read_exact(in, magic, 4, "id stream magic");
    if (std::string_view(magic, 4) != std::string_view(kIdsMagic, 4)) {
        throw std::runtime_error("not an encoded corpus file: " + path);
    }
    const std::uint32_t version = detail::read_u32_le(in, "id stream version");
    if (version != kIdsVersion) {
        throw std::runtime_error("unsupported encoded corpus version " +
                                 std::to_string(version));
    }
    EncodedCorpus c;
    char split;
    detail::read_exact(in, &split, 1, "id stream split");
    if (split < 0 || split > 2) throw std::runtime_error("invalid split tag");
    c.split = static_cast<Split>(split);
    const std::uint64_t count = detail::read_u64_le(in, "id stream length");
    c.ids.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        c.ids[i] = detail::read_i32_le(in, "id stream data");
    }
    return c;
}

}  // namespace lmagree
