// Command-line driver: preprocess raw text, train models, measure perplexity,
// generate agreement suites, score them, re-emit reports, and self-check
// gradients. One subcommand per invocation; diagnostics go to stderr and data
// only to the declared outputs.

#include "lmagree/checkpoint.hpp"
#include "lmagree/corpus.hpp"
#include "lmagree/evaluator.hpp"
#include "lmagree/lstm.hpp"
#include "lmagree/numerics.hpp"
#include "lmagree/testgen.hpp"
#include "lmagree/trainer.hpp"

#include "CLI11.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#ifndef LMAGREE_TRAIN_SCALAR
#define LMAGREE_TRAIN_SCALAR double
#endif

namespace {

using namespace lmagree;
namespace fs = std::filesystem;

// Training runs in this scalar type (a build-time choice); scoring and
// perplexity always run in double so results are independent of it.
using TrainScalar = LMAGREE_TRAIN_SCALAR;

struct PreprocessArgs {
    std::string train_path, valid_path, test_path, merge_path, out_dir;
    std::int64_t cap = 50000;
};

int run_preprocess(const PreprocessArgs& a) {
    MergeMap merges;
    if (!a.merge_path.empty()) merges = load_merge_map(a.merge_path);
    const MergeMap* merge_ptr = a.merge_path.empty() ? nullptr : &merges;

    const auto train_lines = read_normalized_lines(a.train_path, merge_ptr);
    const Vocabulary vocab = Vocabulary::build(count_tokens(train_lines), a.cap);
    fs::create_directories(a.out_dir);
    vocab.save(a.out_dir + "/vocab.txt");
    std::cerr << "vocabulary size: " << vocab.size() << '\n';

    save_encoded(encode(train_lines, vocab, Split::train), a.out_dir + "/train.bin");
    if (!a.valid_path.empty()) {
        const auto lines = read_normalized_lines(a.valid_path, merge_ptr);
        save_encoded(encode(lines, vocab, Split::valid), a.out_dir + "/valid.bin");
    }
    if (!a.test_path.empty()) {
        const auto lines = read_normalized_lines(a.test_path, merge_ptr);
        save_encoded(encode(lines, vocab, Split::test), a.out_dir + "/test.bin");
    }
    return 0;
}

struct TrainArgs {
    std::string train_bin, valid_bin, vocab_path, out_dir;
    std::vector<std::uint64_t> seeds{0};
    TrainConfig cfg;
};

int run_train(const TrainArgs& a) {
    if (a.seeds.empty()) throw std::runtime_error("train: seed list must be non-empty");
    const Vocabulary vocab = Vocabulary::load(a.vocab_path);
    const EncodedCorpus train_corpus = load_encoded(a.train_bin);
    const EncodedCorpus valid_corpus = load_encoded(a.valid_bin);
    fs::create_directories(a.out_dir);

    for (const std::uint64_t seed : a.seeds) {
        TrainConfig cfg = a.cfg;
        cfg.seed = seed;
        std::cerr << "training seed " << seed << " (" << cfg.num_layers << "x"
                  << cfg.hidden << ", batch " << cfg.batch_size << ")\n";
        const auto progress = [seed](const EpochStats& e) {
            std::cerr << "seed " << seed << " epoch " << e.epoch << " lr " << e.lr
                      << " train_loss " << e.train_loss << " valid_ppl " << e.valid_ppl
                      << '\n';
        };
        const TrainResult<TrainScalar> result = train<TrainScalar>(
            cfg, train_corpus, valid_corpus, static_cast<Index>(vocab.size()), progress);

        const std::string tag = "seed" + std::to_string(seed);
        save_checkpoint(a.out_dir + "/model_" + tag + ".ckpt", result.params, vocab);
        std::ofstream log(a.out_dir + "/train_" + tag + ".csv", std::ios::binary);
        if (!log) throw std::runtime_error("cannot open training log for writing");
        result.log.to_csv(log);
        std::cerr << "seed " << seed << " best epoch " << result.best_epoch
                  << " valid_ppl " << result.best_valid_ppl << '\n';
    }
    return 0;
}

struct PplArgs {
    std::string model, data_bin, text_path, out_path;
    Index bptt_len = 35;
};

int run_ppl(const PplArgs& a) {
    if (a.data_bin.empty() == a.text_path.empty()) {
        throw std::runtime_error("ppl: give exactly one of --data and --text");
    }
    const Checkpoint<double> ckpt = load_checkpoint<double>(a.model);
    std::vector<std::int32_t> ids;
    if (!a.data_bin.empty()) {
        ids = load_encoded(a.data_bin).ids;
    } else {
        ids = encode(read_normalized_lines(a.text_path, nullptr), ckpt.vocab, Split::test).ids;
    }
    const double ppl = perplexity(ckpt.params, ids, a.bptt_len);
    if (a.out_path.empty() || a.out_path == "-") {
        std::cout << format_g17(ppl) << '\n';
    } else {
        std::ofstream out(a.out_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + a.out_path + " for writing");
        out << format_g17(ppl) << '\n';
    }
    return 0;
}

struct GenArgs {
    std::string lexicon, out_path, vocab_path, main_gender;
    std::vector<std::string> conditions;
    std::vector<int> lengths;
    std::vector<std::string> numbers;
    bool lenient = false;
};

int run_gen_testset(const GenArgs& a) {
    Vocabulary vocab;
    const Vocabulary* vocab_ptr = nullptr;
    if (!a.vocab_path.empty()) {
        vocab = Vocabulary::load(a.vocab_path);
        vocab_ptr = &vocab;
    }
    const Lexicon lex = load_lexicon(a.lexicon, vocab_ptr, !a.lenient, &std::cerr);

    std::vector<Condition> conds;
    if (a.conditions.empty()) {
        conds = all_conditions();
    } else {
        for (const std::string& c : a.conditions) conds.push_back(parse_condition(c));
    }
    std::vector<Number> numbers;
    if (a.numbers.empty()) {
        numbers = {Number::singular, Number::plural};
    } else {
        for (const std::string& n : a.numbers) numbers.push_back(parse_number(n));
    }
    const std::vector<int> lengths =
        a.lengths.empty() ? lex.available_lengths() : a.lengths;
    std::optional<Gender> main_gender;
    if (!a.main_gender.empty()) main_gender = parse_gender(a.main_gender);

    const std::vector<MinimalPair> suite =
        generate_suite(lex, conds, lengths, numbers, main_gender, &std::cerr);
    save_suite(a.out_path, suite);
    std::cerr << "wrote " << suite.size() << " pairs to " << a.out_path << '\n';
    return 0;
}

struct ScoreArgs {
    std::vector<std::string> models;
    std::string suite_path, report_path, structured_path;
    bool lenient = false;
};

int run_score(const ScoreArgs& a) {
    if (a.models.empty()) throw std::runtime_error("score: need at least one --model");
    const std::vector<MinimalPair> suite = load_external_suite(a.suite_path);

    std::vector<std::pair<std::string, std::vector<PairOutcome>>> per_seed;
    for (const std::string& model : a.models) {
        const Checkpoint<double> ckpt = load_checkpoint<double>(model);
        SuiteOutcomes<double> result =
            evaluate_suite(ckpt.params, ckpt.vocab, suite, !a.lenient);
        const std::string label = fs::path(model).stem().string();
        if (result.skipped > 0) {
            std::cerr << label << ": skipped " << result.skipped
                      << " out-of-vocabulary pairs\n";
        }
        per_seed.emplace_back(label, std::move(result.outcomes));
    }

    const AccuracyTable table = aggregate(per_seed);
    emit_report(a.report_path, table, ReportFormat::csv);
    if (!a.structured_path.empty()) {
        emit_report(a.structured_path, table, ReportFormat::structured);
    }
    std::cerr << "scored " << suite.size() << " pairs with " << a.models.size()
              << " model(s); report: " << a.report_path << '\n';
    return 0;
}

struct ReportArgs {
    std::string input, output = "-", format = "structured";
};

int run_report(const ReportArgs& a) {
    const AccuracyTable table = load_report(a.input);
    const ReportFormat fmt =
        a.format == "csv" ? ReportFormat::csv : ReportFormat::structured;
    if (a.output == "-") {
        emit_report(std::cout, table, fmt);
    } else {
        emit_report(a.output, table, fmt);
    }
    return 0;
}

struct GradcheckArgs {
    double eps = 1e-5;
    double tolerance = 1e-4;
    bool inject_bug = false;
};

// Small fixed double-precision model; the analytic block gradients are
// compared against central finite differences of the evaluation-mode loss.
int run_gradcheck(const GradcheckArgs& a) {
    const Index vocab = 17, embed = 6, hidden = 6, layers = 2;
    const std::int32_t batch = 2, steps = 5;

    Rng rng(42);
    ModelParams<double> params = ModelParams<double>::sized(vocab, embed, hidden, layers);
    params.init_uniform(rng);

    BatchBlock block;
    block.input.rows = block.target.rows = batch;
    block.input.cols = block.target.cols = steps;
    for (int i = 0; i < batch * steps; ++i) {
        block.input.ids.push_back(static_cast<std::int32_t>(rng.below(vocab)));
        block.target.ids.push_back(static_cast<std::int32_t>(rng.below(vocab)));
    }

    Hidden<double> state = Hidden<double>::zeros(layers, hidden, batch);
    Rng unused(0);
    BlockResult<double> result = loss_and_grads(params, block, state, 0.0, unused);
    if (a.inject_bug) {
        result.grads.layers[0].w_rec *= 1.01;  // test hook: corrupt one gradient block
    }

    // The probe loss runs in extended precision: the difference of two nearly
    // equal losses must stay accurate enough for the 1e-4 error budget.
    Vec<double> flat = params.flatten();
    const auto loss_at = [&](const Vec<double>& theta) -> long double {
        ModelParams<long double> probe =
            ModelParams<long double>::sized(vocab, embed, hidden, layers);
        probe.assign_from_flat(theta);
        Hidden<long double> fresh = Hidden<long double>::zeros(layers, hidden, batch);
        return block_loss(probe, block, fresh);
    };
    const double err = finite_diff_check(loss_at, flat, result.grads.flatten(), a.eps);

    std::cout << "max relative error: " << format_g17(err) << '\n';
    if (err < a.tolerance) {
        std::cerr << "gradient check passed (tolerance " << a.tolerance << ")\n";
        return 0;
    }
    std::cerr << "gradient check FAILED (tolerance " << a.tolerance << ")\n";
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"word-level LSTM language models with targeted agreement evaluation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "lmagree 0.1.0");
    app.set_config("--config", "", "INI-style config file with one section per subcommand");

    PreprocessArgs pre;
    CLI::App* cmd_pre = app.add_subcommand(
        "preprocess", "normalize raw text, build the vocabulary, encode the splits");
    cmd_pre->add_option("--train", pre.train_path, "raw training text")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_pre->add_option("--valid", pre.valid_path, "raw validation text")
        ->check(CLI::ExistingFile);
    cmd_pre->add_option("--test", pre.test_path, "raw test text")->check(CLI::ExistingFile);
    cmd_pre->add_option("--merge-map", pre.merge_path, "token merge map (tab-separated)")
        ->check(CLI::ExistingFile);
    cmd_pre->add_option("--cap", pre.cap, "vocabulary cap (most frequent tokens kept)")
        ->capture_default_str();
    cmd_pre->add_option("--out-dir", pre.out_dir, "output directory")->required();

    TrainArgs tr;
    CLI::App* cmd_train =
        app.add_subcommand("train", "train one model per seed on encoded corpora");
    cmd_train->add_option("--train", tr.train_bin, "encoded training ids")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_train->add_option("--valid", tr.valid_bin, "encoded validation ids")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_train->add_option("--vocab", tr.vocab_path, "vocabulary file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_train->add_option("--out-dir", tr.out_dir, "checkpoint/log output directory")
        ->required();
    cmd_train->add_option("--seeds", tr.seeds, "comma-separated seed list")
        ->delimiter(',')
        ->capture_default_str();
    cmd_train->add_option("--layers", tr.cfg.num_layers, "LSTM layer count")
        ->capture_default_str();
    cmd_train->add_option("--embed", tr.cfg.embed_dim, "embedding size")
        ->capture_default_str();
    cmd_train->add_option("--hidden", tr.cfg.hidden, "hidden units per layer")
        ->capture_default_str();
    cmd_train->add_option("--batch", tr.cfg.batch_size, "batch size")->capture_default_str();
    cmd_train->add_option("--bptt", tr.cfg.bptt_len, "truncated backprop length")
        ->capture_default_str();
    cmd_train->add_option("--dropout", tr.cfg.dropout, "dropout probability")
        ->capture_default_str();
    cmd_train->add_option("--lr", tr.cfg.lr_initial, "initial learning rate")
        ->capture_default_str();
    cmd_train->add_option("--anneal", tr.cfg.anneal_factor,
                          "learning-rate divisor on non-improving epochs")
        ->capture_default_str();
    cmd_train->add_option("--clip", tr.cfg.clip_norm, "global gradient-norm clip")
        ->capture_default_str();
    cmd_train->add_option("--epochs", tr.cfg.max_epochs, "epoch count")
        ->capture_default_str();

    PplArgs pp;
    CLI::App* cmd_ppl = app.add_subcommand("ppl", "perplexity of a corpus under a model");
    cmd_ppl->add_option("--model", pp.model, "checkpoint file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_ppl->add_option("--data", pp.data_bin, "encoded ids file")->check(CLI::ExistingFile);
    cmd_ppl->add_option("--text", pp.text_path, "raw text (encoded with the model's vocabulary)")
        ->check(CLI::ExistingFile);
    cmd_ppl->add_option("--bptt", pp.bptt_len, "stream chunk length")->capture_default_str();
    cmd_ppl->add_option("--out", pp.out_path, "output file ('-' = stdout)");

    GenArgs gen;
    CLI::App* cmd_gen =
        app.add_subcommand("gen-testset", "expand a lexicon into a minimal-pair suite");
    cmd_gen->add_option("--lexicon", gen.lexicon, "lexicon file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_gen->add_option("--out", gen.out_path, "suite output file")->required();
    cmd_gen->add_option("--vocab", gen.vocab_path, "check surface forms against this vocabulary")
        ->check(CLI::ExistingFile);
    cmd_gen->add_option("--conditions", gen.conditions,
                        "conditions to generate (default: all six)")
        ->delimiter(',');
    cmd_gen->add_option("--lengths", gen.lengths,
                        "distractor lengths (default: all in the lexicon)")
        ->delimiter(',');
    cmd_gen->add_option("--numbers", gen.numbers, "sg, pl, or both (default)")
        ->delimiter(',');
    cmd_gen->add_option("--main-gender", gen.main_gender,
                        "restrict the main noun to one gender (f or m)");
    cmd_gen->add_flag("--lenient", gen.lenient,
                      "drop lexicon entries with out-of-vocabulary forms instead of failing");

    ScoreArgs sc;
    CLI::App* cmd_score = app.add_subcommand("score", "score a suite under trained models");
    cmd_score->add_option("--model", sc.models, "checkpoint file (repeat per seed)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_score->add_option("--suite", sc.suite_path, "minimal-pair suite")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_score->add_option("--report", sc.report_path, "CSV report output")->required();
    cmd_score->add_option("--structured", sc.structured_path,
                          "also write the line-structured report here");
    cmd_score->add_flag("--lenient", sc.lenient,
                        "skip pairs with out-of-vocabulary tokens instead of failing");

    ReportArgs rep;
    CLI::App* cmd_report =
        app.add_subcommand("report", "re-emit a CSV report in another format");
    cmd_report->add_option("--input", rep.input, "report CSV")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_report->add_option("--format", rep.format, "csv or structured")
        ->check(CLI::IsMember({"csv", "structured"}))
        ->capture_default_str();
    cmd_report->add_option("--output", rep.output, "output file ('-' = stdout)")
        ->capture_default_str();

    GradcheckArgs gc;
    CLI::App* cmd_gc = app.add_subcommand(
        "gradcheck", "verify analytic gradients against finite differences");
    cmd_gc->add_option("--eps", gc.eps, "finite-difference step")->capture_default_str();
    cmd_gc->add_option("--tolerance", gc.tolerance, "maximum relative error accepted")
        ->capture_default_str();
    cmd_gc->add_flag("--inject-bug", gc.inject_bug,
                     "deliberately corrupt a gradient (harness self-test)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (cmd_pre->parsed()) return run_preprocess(pre);
        if (cmd_train->parsed()) return run_train(tr);
        if (cmd_ppl->parsed()) return run_ppl(pp);
        if (cmd_gen->parsed()) return run_gen_testset(gen);
        if (cmd_score->parsed()) return run_score(sc);
        if (cmd_report->parsed()) return run_report(rep);
        if (cmd_gc->parsed()) return run_gradcheck(gc);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
