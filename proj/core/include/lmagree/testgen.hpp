// Agreement-suite generation: a morphological lexicon is expanded into
// minimal pairs ("la robe avec les sacs est bleue" vs "... bleu") across six
// conditions, both numbers, and a range of distractor lengths. Externally
// produced suites load through the same line-per-record interchange format.

#pragma once

#include "lmagree/corpus.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lmagree {

enum class Gender { feminine, masculine };
enum class Number { singular, plural };
enum class PredicateKind { adjective, participle };

// NA*: adjective targets, NP*: participle targets. *NS adds an attractor of
// the same number, *NO of the opposite number; attractors always carry the
// opposite gender.
enum class Condition { NA, NANS, NANO, NP, NPNS, NPNO };

Gender opposite(Gender g);
Number opposite(Number n);
std::string_view to_string(Gender g);      // "f" / "m"
std::string_view to_string(Number n);      // "sg" / "pl"
std::string_view to_string(Condition c);
std::string_view to_string(PredicateKind k);
Gender parse_gender(std::string_view text);
Number parse_number(std::string_view text);
Condition parse_condition(std::string_view text);
PredicateKind parse_kind(std::string_view text);

bool has_attractor(Condition c);
// For attractor conditions: does the attractor share the main noun's number?
bool attractor_same_number(Condition c);
PredicateKind condition_kind(Condition c);
// Canonical order NA, NANS, NANO, NP, NPNS, NPNO.
const std::vector<Condition>& all_conditions();

namespace idx {
inline int of(Gender g) { return g == Gender::feminine ? 0 : 1; }
inline int of(Number n) { return n == Number::singular ? 0 : 1; }
}  // namespace idx

struct NounEntry {
    std::string lemma;
    Gender gender = Gender::feminine;
    std::string form_singular;
    std::string form_plural;

    const std::string& form(Number n) const {
        return n == Number::singular ? form_singular : form_plural;
    }
};

struct PredicateEntry {
    std::string lemma;
    PredicateKind kind = PredicateKind::adjective;
    // indexed [gender][number]
    std::array<std::array<std::string, 2>, 2> forms;

    const std::string& form(Gender g, Number n) const {
        return forms[idx::of(g)][idx::of(n)];
    }
    std::string& form(Gender g, Number n) { return forms[idx::of(g)][idx::of(n)]; }
};

struct DistractorPhrase {
    int length = 0;
    std::vector<std::string> tokens_singular;
    std::vector<std::string> tokens_plural;

    const std::vector<std::string>& tokens(Number n) const {
        return n == Number::singular ? tokens_singular : tokens_plural;
    }
};

struct ArticleTable {
    // indexed [gender][number]; the plural entries must coincide
    std::array<std::array<std::string, 2>, 2> forms = {{{"la", "les"}, {"le", "les"}}};

    const std::string& article(Gender g, Number n) const {
        return forms[idx::of(g)][idx::of(n)];
    }
};

struct Lexicon {
    std::vector<NounEntry> nouns;
    std::vector<PredicateEntry> predicates;
    std::vector<DistractorPhrase> distractors;
    ArticleTable articles;
    std::string preposition = "avec";

    // Distinct lengths present, ascending.
    std::vector<int> available_lengths() const;
};

struct MinimalPair {
    std::vector<std::string> prefix;
    std::string correct;
    std::string incorrect;
    std::map<std::string, std::string> meta;

    // Throws when the pair breaks the minimal-pair contract: distinct
    // non-empty single-token targets, non-empty prefix, and no target form
    // occurring inside the prefix.
    void validate() const;
};

// Parse and validate a lexicon file. When `vocab` is given every surface form
// is checked for membership: strict mode throws on the first miss, lenient
// mode drops the offending entry and reports it on `warnings` (articles and
// the preposition must always be in-vocabulary).
Lexicon load_lexicon(const std::string& path, const Vocabulary* vocab = nullptr,
                     bool strict = true, std::ostream* warnings = nullptr);
Lexicon parse_lexicon(std::istream& in, const Vocabulary* vocab = nullptr,
                      bool strict = true, std::ostream* warnings = nullptr);

// One minimal pair from its ingredients. `attractor` must be present exactly
// for the *NS / *NO conditions and must carry the opposite gender. Articles
// and the prepositions default to le/la/les and "avec".
MinimalPair realize(Condition cond, const NounEntry& noun, const PredicateEntry& pred,
                    const NounEntry* attractor, const DistractorPhrase& dist, Number num,
                    const ArticleTable& articles = {}, const std::string& preposition = "avec");

// Cartesian expansion over the requested conditions, numbers, and distractor
// lengths, in the fixed nesting order condition > number > length > main noun
// > attractor > predicate > distractor. Empty request sets yield an empty
// suite; a requested length with no distractor is an error. Predicates whose
// two gender forms coincide for a number are skipped with a notice.
// `main_gender` restricts which gender appears as the main noun.
std::vector<MinimalPair> generate_suite(const Lexicon& lex,
                                        const std::vector<Condition>& conds,
                                        const std::vector<int>& lengths,
                                        const std::vector<Number>& numbers,
                                        std::optional<Gender> main_gender = {},
                                        std::ostream* notices = nullptr);

// Interchange format: one object per line with fields "prefix" (space-joined),
// "correct", "wrong", and "meta" (flat string map).
void save_suite(std::ostream& out, const std::vector<MinimalPair>& pairs);
void save_suite(const std::string& path, const std::vector<MinimalPair>& pairs);
std::vector<MinimalPair> load_external_suite(std::istream& in);
std::vector<MinimalPair> load_external_suite(const std::string& path);

}  // namespace lmagree
