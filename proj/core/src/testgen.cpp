#include "lmagree/testgen.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <ostream>
#include <set>
#include <stdexcept>
#include <utility>

#include "json.hpp"

namespace lmagree {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_on(const std::string& line, char sep) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            fields.push_back(trim(std::string_view(line).substr(start)));
            break;
        }
        fields.push_back(trim(std::string_view(line).substr(start, pos - start)));
        start = pos + 1;
    }
    return fields;
}

std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
        if (j > i) tokens.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return tokens;
}

[[noreturn]] void fail(int line_no, const std::string& msg) {
    throw std::runtime_error("lexicon line " + std::to_string(line_no) + ": " + msg);
}

// Every surface form must already be a single token in canonical normalized
// form, i.e. the corpus normalizer maps it to itself.
void check_surface(const std::string& token, const std::string& context, int line_no) {
    if (token.empty()) fail(line_no, context + " is empty");
    const std::vector<std::string> norm = normalize_line(token);
    if (norm.size() == 1 && norm.front() == token) return;
    std::string msg = context + ": '" + token + "' is not a single normalized token";
    if (norm.size() == 1) msg += " (normalizes to '" + norm.front() + "')";
    fail(line_no, msg);
}

struct VocabPolicy {
    const Vocabulary* vocab = nullptr;
    bool strict = true;
    std::ostream* warnings = nullptr;

    bool missing(const std::string& form) const {
        return vocab != nullptr && !vocab->contains(form);
    }
    // True when the entry must be dropped (lenient mode).
    bool handle(const std::string& entry_desc, const std::string& form) const {
        if (!missing(form)) return false;
        if (strict) {
            throw std::runtime_error("lexicon: " + entry_desc + ": form '" + form +
                                     "' not in vocabulary");
        }
        if (warnings) {
            *warnings << "lexicon: excluding " << entry_desc << ": form '" << form
                      << "' not in vocabulary\n";
        }
        return true;
    }
};

std::string join(const std::vector<std::string>& tokens, char sep) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += sep;
        out += tokens[i];
    }
    return out;
}

}  // namespace

Gender opposite(Gender g) {
    return g == Gender::feminine ? Gender::masculine : Gender::feminine;
}

Number opposite(Number n) {
    return n == Number::singular ? Number::plural : Number::singular;
}

std::string_view to_string(Gender g) { return g == Gender::feminine ? "f" : "m"; }
std::string_view to_string(Number n) { return n == Number::singular ? "sg" : "pl"; }

std::string_view to_string(Condition c) {
    switch (c) {
        case Condition::NA: return "NA";
        case Condition::NANS: return "NANS";
        case Condition::NANO: return "NANO";
        case Condition::NP: return "NP";
        case Condition::NPNS: return "NPNS";
        case Condition::NPNO: return "NPNO";
    }
    throw std::logic_error("unreachable condition value");
}

std::string_view to_string(PredicateKind k) {
    return k == PredicateKind::adjective ? "adjective" : "participle";
}

Gender parse_gender(std::string_view text) {
    if (text == "f" || text == "feminine") return Gender::feminine;
    if (text == "m" || text == "masculine") return Gender::masculine;
    throw std::invalid_argument("unknown gender '" + std::string(text) +
                                "' (expected f or m)");
}

Number parse_number(std::string_view text) {
    if (text == "sg" || text == "singular") return Number::singular;
    if (text == "pl" || text == "plural") return Number::plural;
    throw std::invalid_argument("unknown number '" + std::string(text) +
                                "' (expected sg or pl)");
}

Condition parse_condition(std::string_view text) {
    std::string up(text);
    for (char& ch : up) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    for (const Condition c : all_conditions()) {
        if (up == to_string(c)) return c;
    }
    throw std::invalid_argument("unknown condition '" + std::string(text) +
                                "' (expected one of NA, NANS, NANO, NP, NPNS, NPNO)");
}

PredicateKind parse_kind(std::string_view text) {
    if (text == "adjective") return PredicateKind::adjective;
    if (text == "participle") return PredicateKind::participle;
    throw std::invalid_argument("unknown predicate kind '" + std::string(text) +
                                "' (expected adjective or participle)");
}

bool has_attractor(Condition c) { return c != Condition::NA && c != Condition::NP; }

bool attractor_same_number(Condition c) {
    return c == Condition::NANS || c == Condition::NPNS;
}

PredicateKind condition_kind(Condition c) {
    switch (c) {
        case Condition::NA:
        case Condition::NANS:
        case Condition::NANO: return PredicateKind::adjective;
        case Condition::NP:
        case Condition::NPNS:
        case Condition::NPNO: return PredicateKind::participle;
    }
    throw std::logic_error("unreachable condition value");
}

const std::vector<Condition>& all_conditions() {
    static const std::vector<Condition> order = {Condition::NA,   Condition::NANS,
                                                 Condition::NANO, Condition::NP,
                                                 Condition::NPNS, Condition::NPNO};
    return order;
}

std::vector<int> Lexicon::available_lengths() const {
    std::vector<int> lengths;
    for (const DistractorPhrase& d : distractors) lengths.push_back(d.length);
    std::sort(lengths.begin(), lengths.end());
    lengths.erase(std::unique(lengths.begin(), lengths.end()), lengths.end());
    return lengths;
}

void MinimalPair::validate() const {
    if (correct.empty() || incorrect.empty()) {
        throw std::runtime_error("minimal pair has an empty target");
    }
    if (correct.find(' ') != std::string::npos || incorrect.find(' ') != std::string::npos) {
        throw std::runtime_error("minimal pair target is not a single token");
    }
    if (correct == incorrect) {
        throw std::runtime_error("minimal pair targets are identical ('" + correct + "')");
    }
    if (prefix.empty()) {
        throw std::runtime_error("minimal pair has an empty prefix");
    }
    for (const std::string& tok : prefix) {
        if (tok.empty()) throw std::runtime_error("minimal pair prefix has an empty token");
        if (tok == correct || tok == incorrect) {
            throw std::runtime_error("minimal pair prefix contains target form '" + tok + "'");
        }
    }
}

Lexicon parse_lexicon(std::istream& in, const Vocabulary* vocab, bool strict,
                      std::ostream* warnings) {
    Lexicon lex;
    bool articles_seen[2][2] = {{false, false}, {false, false}};
    std::set<std::string> noun_lemmas, pred_lemmas;

    enum class Section { none, nouns, predicates, distractors, articles, preposition };
    Section section = Section::none;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        if (line.front() == '[') {
            if (line == "[nouns]") section = Section::nouns;
            else if (line == "[predicates]") section = Section::predicates;
            else if (line == "[distractors]") section = Section::distractors;
            else if (line == "[articles]") section = Section::articles;
            else if (line == "[preposition]") section = Section::preposition;
            else fail(line_no, "unknown section " + line);
            continue;
        }
        switch (section) {
            case Section::none:
                fail(line_no, "content before any section header");
            case Section::nouns: {
                const auto f = split_on(line, ',');
                if (f.size() != 4) fail(line_no, "expected 'lemma,gender,sg,pl'");
                NounEntry noun;
                noun.lemma = f[0];
                if (noun.lemma.empty()) fail(line_no, "empty noun lemma");
                if (!noun_lemmas.insert(noun.lemma).second) {
                    fail(line_no, "duplicate noun lemma '" + noun.lemma + "'");
                }
                try {
                    noun.gender = parse_gender(f[1]);
                } catch (const std::invalid_argument& e) {
                    fail(line_no, e.what());
                }
                noun.form_singular = f[2];
                noun.form_plural = f[3];
                check_surface(noun.form_singular, "noun '" + noun.lemma + "' singular form",
                              line_no);
                check_surface(noun.form_plural, "noun '" + noun.lemma + "' plural form",
                              line_no);
                lex.nouns.push_back(std::move(noun));
                break;
            }
            case Section::predicates: {
                const auto f = split_on(line, ',');
                if (f.size() != 6) fail(line_no, "expected 'lemma,kind,m_sg,f_sg,m_pl,f_pl'");
                PredicateEntry pred;
                pred.lemma = f[0];
                if (pred.lemma.empty()) fail(line_no, "empty predicate lemma");
                if (!pred_lemmas.insert(pred.lemma).second) {
                    fail(line_no, "duplicate predicate lemma '" + pred.lemma + "'");
                }
                try {
                    pred.kind = parse_kind(f[1]);
                } catch (const std::invalid_argument& e) {
                    fail(line_no, e.what());
                }
                pred.form(Gender::masculine, Number::singular) = f[2];
                pred.form(Gender::feminine, Number::singular) = f[3];
                pred.form(Gender::masculine, Number::plural) = f[4];
                pred.form(Gender::feminine, Number::plural) = f[5];
                for (const Gender g : {Gender::masculine, Gender::feminine}) {
                    for (const Number n : {Number::singular, Number::plural}) {
                        if (pred.form(g, n).empty()) {
                            fail(line_no, "predicate '" + pred.lemma + "' is missing its (" +
                                              std::string(to_string(g)) + ", " +
                                              std::string(to_string(n)) + ") form");
                        }
                        check_surface(pred.form(g, n),
                                      "predicate '" + pred.lemma + "' (" +
                                          std::string(to_string(g)) + ", " +
                                          std::string(to_string(n)) + ") form",
                                      line_no);
                    }
                }
                lex.predicates.push_back(std::move(pred));
                break;
            }
            case Section::distractors: {
                const std::size_t comma = line.find(',');
                if (comma == std::string::npos) {
                    fail(line_no, "expected 'length,sg tokens|pl tokens'");
                }
                DistractorPhrase dist;
                try {
                    dist.length = std::stoi(line.substr(0, comma));
                } catch (const std::exception&) {
                    fail(line_no, "bad distractor length '" + line.substr(0, comma) + "'");
                }
                if (dist.length < 0 || dist.length > 11) {
                    fail(line_no, "distractor length " + std::to_string(dist.length) +
                                      " outside [0, 11]");
                }
                const std::string rest = line.substr(comma + 1);
                const std::size_t bar = rest.find('|');
                if (bar == std::string::npos || rest.find('|', bar + 1) != std::string::npos) {
                    fail(line_no, "expected exactly one '|' between singular and plural tokens");
                }
                dist.tokens_singular = split_ws(std::string_view(rest).substr(0, bar));
                dist.tokens_plural = split_ws(std::string_view(rest).substr(bar + 1));
                if (static_cast<int>(dist.tokens_singular.size()) != dist.length ||
                    static_cast<int>(dist.tokens_plural.size()) != dist.length) {
                    fail(line_no, "distractor token counts (" +
                                      std::to_string(dist.tokens_singular.size()) + ", " +
                                      std::to_string(dist.tokens_plural.size()) +
                                      ") do not match length " + std::to_string(dist.length));
                }
                for (const auto* list : {&dist.tokens_singular, &dist.tokens_plural}) {
                    for (const std::string& tok : *list) {
                        check_surface(tok, "distractor token", line_no);
                    }
                }
                lex.distractors.push_back(std::move(dist));
                break;
            }
            case Section::articles: {
                const auto f = split_on(line, ',');
                if (f.size() != 3) fail(line_no, "expected 'gender,number,token'");
                Gender g;
                Number n;
                try {
                    g = parse_gender(f[0]);
                    n = parse_number(f[1]);
                } catch (const std::invalid_argument& e) {
                    fail(line_no, e.what());
                }
                check_surface(f[2], "article", line_no);
                lex.articles.forms[idx::of(g)][idx::of(n)] = f[2];
                articles_seen[idx::of(g)][idx::of(n)] = true;
                break;
            }
            case Section::preposition: {
                check_surface(line, "preposition", line_no);
                lex.preposition = line;
                break;
            }
        }
    }

    if (lex.articles.article(Gender::feminine, Number::plural) !=
        lex.articles.article(Gender::masculine, Number::plural)) {
        throw std::runtime_error(
            "lexicon: plural articles must be gender-neutral, got '" +
            lex.articles.article(Gender::feminine, Number::plural) + "' vs '" +
            lex.articles.article(Gender::masculine, Number::plural) + "'");
    }
    (void)articles_seen;

    if (vocab != nullptr) {
        const VocabPolicy policy{vocab, strict, warnings};
        for (const Gender g : {Gender::feminine, Gender::masculine}) {
            for (const Number n : {Number::singular, Number::plural}) {
                const std::string& art = lex.articles.article(g, n);
                if (policy.missing(art)) {
                    throw std::runtime_error("lexicon: article '" + art +
                                             "' not in vocabulary");
                }
            }
        }
        if (policy.missing(lex.preposition)) {
            throw std::runtime_error("lexicon: preposition '" + lex.preposition +
                                     "' not in vocabulary");
        }

        std::vector<NounEntry> kept_nouns;
        for (NounEntry& noun : lex.nouns) {
            const std::string desc = "noun '" + noun.lemma + "'";
            if (policy.handle(desc, noun.form_singular) ||
                policy.handle(desc, noun.form_plural)) {
                continue;
            }
            kept_nouns.push_back(std::move(noun));
        }
        lex.nouns = std::move(kept_nouns);

        std::vector<PredicateEntry> kept_preds;
        for (PredicateEntry& pred : lex.predicates) {
            const std::string desc = "predicate '" + pred.lemma + "'";
            bool drop = false;
            for (const Gender g : {Gender::feminine, Gender::masculine}) {
                for (const Number n : {Number::singular, Number::plural}) {
                    drop = drop || policy.handle(desc, pred.form(g, n));
                }
            }
            if (!drop) kept_preds.push_back(std::move(pred));
        }
        lex.predicates = std::move(kept_preds);

        std::vector<DistractorPhrase> kept_dists;
        for (DistractorPhrase& dist : lex.distractors) {
            const std::string desc =
                "distractor of length " + std::to_string(dist.length);
            bool drop = false;
            for (const auto* list : {&dist.tokens_singular, &dist.tokens_plural}) {
                for (const std::string& tok : *list) drop = drop || policy.handle(desc, tok);
            }
            if (!drop) kept_dists.push_back(std::move(dist));
        }
        lex.distractors = std::move(kept_dists);
    }

    if (lex.nouns.empty()) throw std::runtime_error("lexicon has no usable nouns");
    if (lex.predicates.empty()) throw std::runtime_error("lexicon has no usable predicates");
    return lex;
}

Lexicon load_lexicon(const std::string& path, const Vocabulary* vocab, bool strict,
                     std::ostream* warnings) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return parse_lexicon(in, vocab, strict, warnings);
}

MinimalPair realize(Condition cond, const NounEntry& noun, const PredicateEntry& pred,
                    const NounEntry* attractor, const DistractorPhrase& dist, Number num,
                    const ArticleTable& articles, const std::string& preposition) {
    if (has_attractor(cond) != (attractor != nullptr)) {
        throw std::invalid_argument("realize: condition " + std::string(to_string(cond)) +
                                    (attractor ? " takes no attractor" : " requires an attractor"));
    }
    if (attractor && attractor->gender == noun.gender) {
        throw std::invalid_argument("realize: attractor '" + attractor->lemma +
                                    "' must have the opposite gender of '" + noun.lemma + "'");
    }

    MinimalPair pair;
    pair.prefix.push_back(articles.article(noun.gender, num));
    pair.prefix.push_back(noun.form(num));
    if (attractor) {
        const Number an = attractor_same_number(cond) ? num : opposite(num);
        pair.prefix.push_back(preposition);
        pair.prefix.push_back(articles.article(attractor->gender, an));
        pair.prefix.push_back(attractor->form(an));
    }
    for (const std::string& tok : dist.tokens(num)) pair.prefix.push_back(tok);

    pair.correct = pred.form(noun.gender, num);
    pair.incorrect = pred.form(opposite(noun.gender), num);

    pair.meta["condition"] = std::string(to_string(cond));
    pair.meta["noun"] = noun.lemma;
    pair.meta["gender"] = std::string(to_string(noun.gender));
    pair.meta["number"] = std::string(to_string(num));
    pair.meta["distractor_count"] = std::to_string(dist.length);
    pair.meta["predicate"] = pred.lemma;
    pair.meta["attractor"] = attractor ? attractor->lemma : "none";

    pair.validate();
    return pair;
}

std::vector<MinimalPair> generate_suite(const Lexicon& lex,
                                        const std::vector<Condition>& conds,
                                        const std::vector<int>& lengths,
                                        const std::vector<Number>& numbers,
                                        std::optional<Gender> main_gender,
                                        std::ostream* notices) {
    std::vector<int> want_lengths = lengths;
    std::sort(want_lengths.begin(), want_lengths.end());
    want_lengths.erase(std::unique(want_lengths.begin(), want_lengths.end()),
                       want_lengths.end());
    for (const int len : want_lengths) {
        const bool present =
            std::any_of(lex.distractors.begin(), lex.distractors.end(),
                        [len](const DistractorPhrase& d) { return d.length == len; });
        if (!present) {
            throw std::invalid_argument("no distractor phrase of length " +
                                        std::to_string(len) + " in the lexicon");
        }
    }

    const auto wants_cond = [&](Condition c) {
        return std::find(conds.begin(), conds.end(), c) != conds.end();
    };
    const auto wants_number = [&](Number n) {
        return std::find(numbers.begin(), numbers.end(), n) != numbers.end();
    };

    std::set<std::pair<std::string, Number>> noticed;
    std::vector<MinimalPair> suite;
    for (const Condition cond : all_conditions()) {
        if (!wants_cond(cond)) continue;
        const PredicateKind kind = condition_kind(cond);
        for (const Number num : {Number::singular, Number::plural}) {
            if (!wants_number(num)) continue;
            for (const int len : want_lengths) {
                for (const NounEntry& noun : lex.nouns) {
                    if (main_gender && noun.gender != *main_gender) continue;
                    // dummy single-iteration slot for the attractor-free conditions
                    std::vector<const NounEntry*> attractors;
                    if (has_attractor(cond)) {
                        for (const NounEntry& cand : lex.nouns) {
                            if (cand.gender != noun.gender) attractors.push_back(&cand);
                        }
                    } else {
                        attractors.push_back(nullptr);
                    }
                    for (const NounEntry* attractor : attractors) {
                        for (const PredicateEntry& pred : lex.predicates) {
                            if (pred.kind != kind) continue;
                            if (pred.form(Gender::feminine, num) ==
                                pred.form(Gender::masculine, num)) {
                                if (notices &&
                                    noticed.insert({pred.lemma, num}).second) {
                                    *notices << "skipping predicate '" << pred.lemma
                                             << "' (" << to_string(num)
                                             << "): gender forms coincide ('"
                                             << pred.form(Gender::feminine, num) << "')\n";
                                }
                                continue;
                            }
                            for (const DistractorPhrase& dist : lex.distractors) {
                                if (dist.length != len) continue;
                                suite.push_back(realize(cond, noun, pred, attractor, dist,
                                                        num, lex.articles,
                                                        lex.preposition));
                            }
                        }
                    }
                }
            }
        }
    }
    return suite;
}

void save_suite(std::ostream& out, const std::vector<MinimalPair>& pairs) {
    for (const MinimalPair& pair : pairs) {
        nlohmann::json record;
        record["prefix"] = join(pair.prefix, ' ');
        record["correct"] = pair.correct;
        record["wrong"] = pair.incorrect;
        record["meta"] = pair.meta;
        out << record.dump() << '\n';
    }
    if (!out) throw std::runtime_error("suite: write failed");
}

void save_suite(const std::string& path, const std::vector<MinimalPair>& pairs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    save_suite(out, pairs);
}

std::vector<MinimalPair> load_external_suite(std::istream& in) {
    std::vector<MinimalPair> pairs;
    std::string line;
    int record_no = 0;
    while (std::getline(in, line)) {
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        ++record_no;
        const std::string where = "suite record " + std::to_string(record_no);
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(stripped);
        } catch (const std::exception& e) {
            throw std::runtime_error(where + ": " + e.what());
        }
        if (!record.is_object()) {
            throw std::runtime_error(where + ": expected an object");
        }
        for (const char* field : {"prefix", "correct", "wrong"}) {
            if (!record.contains(field) || !record[field].is_string()) {
                throw std::runtime_error(where + ": missing string field '" +
                                         std::string(field) + "'");
            }
        }
        MinimalPair pair;
        pair.prefix = split_ws(record["prefix"].get<std::string>());
        pair.correct = record["correct"].get<std::string>();
        pair.incorrect = record["wrong"].get<std::string>();
        if (record.contains("meta")) {
            if (!record["meta"].is_object()) {
                throw std::runtime_error(where + ": 'meta' must be an object");
            }
            for (const auto& [key, value] : record["meta"].items()) {
                if (!value.is_string()) {
                    throw std::runtime_error(where + ": meta value for '" + key +
                                             "' must be a string");
                }
                pair.meta[key] = value.get<std::string>();
            }
        }
        try {
            pair.validate();
        } catch (const std::exception& e) {
            throw std::runtime_error(where + ": " + e.what());
        }
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

std::vector<MinimalPair> load_external_suite(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return load_external_suite(in);
}

}  // namespace lmagree
