#include "lmagree/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace lmagree {

namespace {

int condition_rank(const std::string& s) {
    const auto& order = all_conditions();
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (s == to_string(order[i])) return static_cast<int>(i);
    }
    return static_cast<int>(order.size());
}

int number_rank(const std::string& s) {
    if (s == "sg") return 0;
    if (s == "pl") return 1;
    return 2;
}

bool parse_int_value(const std::string& s, long long& value) {
    if (s.empty()) return false;
    char* end = nullptr;
    errno = 0;
    value = std::strtoll(s.c_str(), &end, 10);
    return errno == 0 && end != nullptr && *end == '\0';
}

// < 0, 0, > 0 three-way compare of one key field under its column-specific
// ordering rule.
int compare_field(const std::string& key_name, const std::string& a, const std::string& b) {
    if (key_name == "condition") {
        const int ra = condition_rank(a), rb = condition_rank(b);
        if (ra != rb) return ra < rb ? -1 : 1;
    } else if (key_name == "number") {
        const int ra = number_rank(a), rb = number_rank(b);
        if (ra != rb) return ra < rb ? -1 : 1;
    } else {
        long long va = 0, vb = 0;
        const bool na = parse_int_value(a, va), nb = parse_int_value(b, vb);
        if (na != nb) return na ? -1 : 1;  // numeric sorts before non-numeric
        if (na && va != vb) return va < vb ? -1 : 1;
    }
    return a.compare(b);
}

struct KeyLess {
    const std::vector<std::string>* names;

    bool operator()(const std::vector<std::string>& a,
                    const std::vector<std::string>& b) const {
        for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
            const int c = compare_field((*names)[i], a[i], b[i]);
            if (c != 0) return c < 0;
        }
        return a.size() < b.size();
    }
};

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string quoted = "\"";
    for (const char ch : s) {
        if (ch == '"') quoted += "\"\"";
        else quoted += ch;
    }
    quoted += '"';
    return quoted;
}

std::vector<std::string> parse_csv_line(const std::string& line, int line_no) {
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += ch;
            }
        } else if (ch == '"' && field.empty()) {
            in_quotes = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (ch != '\r') {
            field += ch;
        }
    }
    if (in_quotes) {
        throw std::runtime_error("report line " + std::to_string(line_no) +
                                 ": unterminated quoted field");
    }
    fields.push_back(std::move(field));
    return fields;
}

}  // namespace

AccuracyTable aggregate(
    const std::vector<std::pair<std::string, std::vector<PairOutcome>>>& per_seed,
    const std::vector<std::string>& group_keys) {
    if (per_seed.empty()) {
        throw std::invalid_argument("aggregate: no seeds given");
    }
    std::size_t total = 0;
    for (const auto& [seed, outcomes] : per_seed) total += outcomes.size();
    if (total == 0) {
        throw std::invalid_argument("aggregate: no outcomes to aggregate");
    }

    struct CellStat {
        std::int64_t items = 0;
        std::int64_t ties = 0;
        std::int64_t successes = 0;
    };
    std::map<std::vector<std::string>, std::vector<CellStat>, KeyLess> cells{
        KeyLess{&group_keys}};

    for (std::size_t s = 0; s < per_seed.size(); ++s) {
        for (const PairOutcome& outcome : per_seed[s].second) {
            std::vector<std::string> key;
            key.reserve(group_keys.size());
            for (const std::string& name : group_keys) {
                const auto it = outcome.pair.meta.find(name);
                key.push_back(it == outcome.pair.meta.end() ? std::string() : it->second);
            }
            auto& stats = cells[std::move(key)];
            if (stats.empty()) stats.resize(per_seed.size());
            CellStat& stat = stats[s];
            ++stat.items;
            if (outcome.tie) ++stat.ties;
            if (outcome.success) ++stat.successes;
        }
    }

    AccuracyTable table;
    table.group_keys = group_keys;
    for (const auto& [key, stats] : cells) {
        std::vector<double> accs;
        std::int64_t items_total = 0, ties_total = 0;
        for (std::size_t s = 0; s < stats.size(); ++s) {
            const CellStat& stat = stats[s];
            if (stat.items == 0) continue;
            const double acc =
                static_cast<double>(stat.successes) / static_cast<double>(stat.items);
            table.rows.push_back({key, per_seed[s].first, stat.items, stat.ties, acc});
            accs.push_back(acc);
            items_total += stat.items;
            ties_total += stat.ties;
        }
        double mean = 0;
        for (const double a : accs) mean += a;
        mean /= static_cast<double>(accs.size());
        double sd = 0;
        if (accs.size() > 1) {
            double ss = 0;
            for (const double a : accs) ss += (a - mean) * (a - mean);
            sd = std::sqrt(ss / static_cast<double>(accs.size() - 1));
        }
        table.rows.push_back({key, "MEAN", items_total, ties_total, mean});
        table.rows.push_back({key, "SD", items_total, ties_total, sd});
    }
    return table;
}

void emit_report(std::ostream& out, const AccuracyTable& table, ReportFormat format) {
    if (table.rows.empty()) {
        throw std::invalid_argument("emit_report: empty table");
    }
    if (format == ReportFormat::csv) {
        for (const std::string& name : table.group_keys) out << csv_field(name) << ',';
        out << "seed,items,ties,accuracy\n";
        for (const ReportRow& row : table.rows) {
            if (row.key.size() != table.group_keys.size()) {
                throw std::invalid_argument("emit_report: row key width mismatch");
            }
            for (const std::string& k : row.key) out << csv_field(k) << ',';
            out << csv_field(row.seed) << ',' << row.items << ',' << row.ties << ','
                << format_g17(row.accuracy) << '\n';
        }
    } else {
        for (const ReportRow& row : table.rows) {
            if (row.key.size() != table.group_keys.size()) {
                throw std::invalid_argument("emit_report: row key width mismatch");
            }
            nlohmann::json record;
            for (std::size_t i = 0; i < table.group_keys.size(); ++i) {
                record[table.group_keys[i]] = row.key[i];
            }
            record["seed"] = row.seed;
            record["items"] = row.items;
            record["ties"] = row.ties;
            record["accuracy"] = row.accuracy;
            out << record.dump() << '\n';
        }
    }
    if (!out) throw std::runtime_error("report: write failed");
}

void emit_report(const std::string& path, const AccuracyTable& table, ReportFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    emit_report(out, table, format);
}

AccuracyTable load_report(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("report: empty file");
    }
    const std::vector<std::string> header = parse_csv_line(line, 1);
    static const std::vector<std::string> tail = {"seed", "items", "ties", "accuracy"};
    if (header.size() < tail.size() ||
        !std::equal(tail.begin(), tail.end(), header.end() - tail.size())) {
        throw std::runtime_error(
            "report: header must end with seed,items,ties,accuracy");
    }
    AccuracyTable table;
    table.group_keys.assign(header.begin(), header.end() - tail.size());

    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> fields = parse_csv_line(line, line_no);
        if (fields.size() != header.size()) {
            throw std::runtime_error("report line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(header.size()) + " fields, got " +
                                     std::to_string(fields.size()));
        }
        ReportRow row;
        row.key.assign(fields.begin(), fields.end() - tail.size());
        row.seed = fields[fields.size() - 4];
        long long items = 0, ties = 0;
        if (!parse_int_value(fields[fields.size() - 3], items) ||
            !parse_int_value(fields[fields.size() - 2], ties)) {
            throw std::runtime_error("report line " + std::to_string(line_no) +
                                     ": bad item/tie count");
        }
        row.items = items;
        row.ties = ties;
        const std::string& acc = fields.back();
        char* end = nullptr;
        row.accuracy = std::strtod(acc.c_str(), &end);
        if (acc.empty() || end == nullptr || *end != '\0') {
            throw std::runtime_error("report line " + std::to_string(line_no) +
                                     ": bad accuracy value '" + acc + "'");
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

AccuracyTable load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return load_report(in);
}

}  // namespace lmagree
