#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <string>
#include <vector>

#include "nsc/baselines.hpp"
#include "nsc/checkpoint.hpp"
#include "nsc/config.hpp"
#include "nsc/datasim.hpp"
#include "nsc/decoder.hpp"
#include "nsc/error.hpp"
#include "nsc/gradcheck.hpp"
#include "nsc/metrics.hpp"
#include "nsc/model.hpp"
#include "nsc/text.hpp"
#include "nsc/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kArtifactVersion = "0.1.0";

// --- logging (NSC_LOG = error | info | debug; default info) ----------------

int log_level() {
    static const int level = [] {
        const char* env = std::getenv("NSC_LOG");
        if (env == nullptr) return 1;
        const std::string v = env;
        if (v == "error") return 0;
        if (v == "debug") return 2;
        return 1;
    }();
    return level;
}

void log_error(const std::string& msg) { std::fprintf(stderr, "[nsc] %s\n", msg.c_str()); }
void log_info(const std::string& msg) {
    if (log_level() >= 1) std::fprintf(stderr, "[nsc] %s\n", msg.c_str());
}
void log_debug(const std::string& msg) {
    if (log_level() >= 2) std::fprintf(stderr, "[nsc] %s\n", msg.c_str());
}

std::string fmt(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string fmt_sci(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

// --- run manifest -----------------------------------------------------------

std::string now_iso8601() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

// Collects the inputs/outputs of one command and writes manifest.json next to
// the outputs. Everything but duration/timestamp is reproducible.
class Run {
  public:
    explicit Run(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

    void input(const std::string& key, const std::string& path) { inputs_[key] = path; }
    void output(const std::string& key, const std::string& path) { outputs_[key] = path; }
    void extra(const std::string& key, const json& value) { extras_[key] = value; }

    void write(const fs::path& out_dir, const json& config, uint64_t seed) const {
        json m;
        m["command"] = command_;
        m["config"] = config;
        m["seed"] = seed;
        m["inputs"] = inputs_;
        m["outputs"] = outputs_;
        m["versions"] = {{"artifact", kArtifactVersion}, {"checkpoint_format", "NSC1"}};
        for (const auto& [k, v] : extras_.items()) m[k] = v;
        m["duration_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        m["timestamp"] = now_iso8601();
        nsc::write_text((out_dir / "manifest.json").string(), m.dump(2) + "\n");
    }

  private:
    std::string command_;
    std::chrono::steady_clock::time_point start_;
    json inputs_ = json::object();
    json outputs_ = json::object();
    json extras_ = json::object();
};

// --- shared flag groups -----------------------------------------------------

std::string read_file(const std::string& path) {
    std::string text;
    for (const std::string& line : nsc::read_lines(path)) {
        text += line;
        text += '\n';
    }
    return text;
}

// preset -> config file -> explicit flags, later wins
struct ConfigFlags {
    std::string preset = "desk";
    std::string config_path;
    uint64_t seed = 0;
    size_t threads = 1;
    bool use_source = true;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* use_source_opt = nullptr;

    void attach(CLI::App* cmd) {
        cmd->add_option("--preset", preset, "configuration preset: desk or paper");
        cmd->add_option("--config", config_path, "key=value configuration file");
        seed_opt = cmd->add_option("--seed", seed, "master random seed");
        cmd->add_option("--threads", threads, "worker threads");
        use_source_opt = cmd->add_option("--use-source", use_source, "attend the source sentence (true/false)");
    }

    nsc::ModelConfig resolve() const {
        nsc::ModelConfig cfg = nsc::ModelConfig::preset(preset);
        if (!config_path.empty()) cfg = nsc::parse_model_config(read_file(config_path), cfg);
        if (seed_opt != nullptr && seed_opt->count() > 0) cfg.seed = seed;
        if (use_source_opt != nullptr && use_source_opt->count() > 0) cfg.use_source = use_source;
        cfg.validate();
        return cfg;
    }
};

struct DecodeFlags {
    size_t beam = 0;
    bool greedy = false;
    size_t threads = 1;
    CLI::Option* beam_opt = nullptr;
    CLI::Option* greedy_opt = nullptr;

    void attach(CLI::App* cmd) {
        beam_opt = cmd->add_option("--beam", beam, "beam width");
        greedy_opt = cmd->add_flag("--greedy", greedy, "greedy decoding (beam width 1)");
        cmd->add_option("--threads", threads, "worker threads");
    }

    nsc::DecodeConfig resolve(const nsc::ModelConfig& cfg) const {
        nsc::DecodeConfig d;
        d.beam = cfg.beam;
        d.length_norm = cfg.length_norm;
        if (beam_opt->count() > 0) d.beam = beam;
        if (greedy_opt->count() > 0) {
            if (beam_opt->count() > 0 && beam != 1) {
                throw nsc::ConfigError("--greedy contradicts --beam " + std::to_string(beam));
            }
            d.beam = 1;
        }
        if (d.beam < 1) throw nsc::ConfigError("beam must be at least 1");
        return d;
    }
};

// --- small shared helpers ---------------------------------------------------

nsc::ParallelCorpus read_parallel(const fs::path& dir) {
    nsc::ParallelCorpus corpus;
    corpus.sources = nsc::read_sentences((dir / "source.txt").string());
    corpus.targets = nsc::read_sentences((dir / "target.txt").string());
    if (corpus.sources.size() != corpus.targets.size()) {
        throw nsc::DataError("source.txt has " + std::to_string(corpus.sources.size()) + " lines, target.txt has " +
                             std::to_string(corpus.targets.size()) + " in " + dir.string());
    }
    return corpus;
}

nsc::Sentence hyp_words(const nsc::Hypothesis& h, const nsc::Vocabulary& vocab) {
    nsc::TokenSeq toks = h.tokens;
    if (h.complete && !toks.empty()) toks.pop_back();
    return vocab.decode(toks);
}

void write_hypotheses(const fs::path& out_dir, const std::vector<nsc::Hypothesis>& hyps,
                      const nsc::Vocabulary& vocab) {
    std::vector<nsc::Sentence> words;
    words.reserve(hyps.size());
    size_t truncated = 0;
    for (const auto& h : hyps) {
        words.push_back(hyp_words(h, vocab));
        truncated += h.truncated;
    }
    nsc::write_sentences((out_dir / "hypotheses.txt").string(), words);
    log_info("decoded " + std::to_string(hyps.size()) + " sentences (" + std::to_string(truncated) + " truncated)");
}

json config_json(const nsc::ModelConfig& cfg) { return json(cfg.to_map()); }

// --- gen --------------------------------------------------------------------

struct GenArgs {
    ConfigFlags common;
    std::string task = "copy";
    size_t vocab = 30;
    size_t min_len = 3;
    size_t max_len = 12;
    size_t count = 1000;
    std::string out = "gen_out";
};

void cmd_gen(const GenArgs& a) {
    Run run("gen");
    nsc::ModelConfig cfg = a.common.resolve();
    nsc::SynthTask task = nsc::parse_task(a.task);
    nsc::ParallelCorpus corpus = nsc::synthetic_task_generate(task, a.vocab, a.min_len, a.max_len, a.count, cfg.seed);
    fs::create_directories(a.out);
    nsc::write_sentences((fs::path(a.out) / "source.txt").string(), corpus.sources);
    nsc::write_sentences((fs::path(a.out) / "target.txt").string(), corpus.targets);
    run.output("source", (fs::path(a.out) / "source.txt").string());
    run.output("target", (fs::path(a.out) / "target.txt").string());
    run.extra("task", a.task);
    run.extra("count", a.count);
    run.extra("synthetic_vocab", a.vocab);
    run.write(a.out, config_json(cfg), cfg.seed);
    log_info("generated " + std::to_string(a.count) + " sentence pairs (task " + a.task + ") into " + a.out);
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
    ConfigFlags common;
    std::string data;
    std::string out = "sim_out";
    std::vector<std::string> profiles;
    bool crossfold = false;
    size_t systems = 1;
    size_t toy_epochs = 60;
};

void cmd_simulate(const SimulateArgs& a) {
    Run run("simulate");
    nsc::ModelConfig cfg = a.common.resolve();
    if (a.profiles.empty() == !a.crossfold) {
        throw nsc::ConfigError("choose exactly one simulation mode: --profiles or --crossfold");
    }
    nsc::ParallelCorpus corpus = read_parallel(a.data);
    run.input("corpus", a.data);

    nsc::CombinationCorpus combo;
    if (!a.profiles.empty()) {
        std::vector<nsc::CorruptionProfile> profiles;
        for (const std::string& name : a.profiles) profiles.push_back(nsc::CorruptionProfile::by_name(name));
        combo = nsc::simulate_corruption(corpus, profiles, cfg.seed);
        run.extra("mode", "profiles");
    } else {
        std::vector<nsc::ToyNmtAdapter> adapters;
        for (size_t k = 0; k < a.systems; ++k) {
            nsc::ToyNmtAdapter adapter;
            adapter.base.max_epochs = a.toy_epochs;
            adapter.seed = nsc::substream_seed(cfg.seed, "system", k);
            adapter.tag = "toy-nmt-" + std::to_string(k + 1);
            adapters.push_back(std::move(adapter));
        }
        log_info("cross-fold training " + std::to_string(a.systems) + " toy system(s), 2 folds each");
        combo = nsc::crossfold_simulate(corpus, adapters, cfg.seed);
        run.extra("mode", "crossfold");
        run.extra("toy_epochs", a.toy_epochs);
    }

    fs::create_directories(a.out);
    nsc::write_combination_corpus(a.out, combo);
    run.output("source", (fs::path(a.out) / "source.txt").string());
    for (size_t k = 0; k < combo.num_systems(); ++k) {
        std::string name = "system" + std::to_string(k + 1);
        run.output(name, (fs::path(a.out) / (name + ".txt")).string());
    }
    run.output("reference", (fs::path(a.out) / "reference.txt").string());
    run.output("provenance", (fs::path(a.out) / "provenance.tsv").string());
    run.write(a.out, config_json(cfg), cfg.seed);
    log_info("simulated " + std::to_string(combo.num_systems()) + " system outputs for " +
             std::to_string(combo.size()) + " sentences into " + a.out);
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
    ConfigFlags common;
    std::string data;
    std::string dev;
    std::string out = "train_out";
};

void cmd_train(const TrainArgs& a) {
    Run run("train");
    nsc::ModelConfig cfg = a.common.resolve();
    nsc::CombinationCorpus corpus = nsc::read_combination_corpus(a.data, cfg.num_systems);
    run.input("data", a.data);

    std::vector<nsc::Sentence> target_side = corpus.reference;
    for (const auto& sys : corpus.systems) target_side.insert(target_side.end(), sys.begin(), sys.end());
    nsc::Vocabulary tgt_vocab = nsc::build_vocab(target_side, cfg.tgt_vocab_limit);
    nsc::Vocabulary src_vocab;
    size_t src_size = 0;
    if (cfg.use_source) {
        src_vocab = nsc::build_vocab(corpus.source, cfg.src_vocab_limit);
        src_size = src_vocab.size();
    }
    auto train_data = nsc::encode_combination(corpus, src_vocab, tgt_vocab, cfg.use_source);
    std::vector<nsc::CombinationExample> dev_data;
    if (!a.dev.empty()) {
        dev_data = nsc::encode_combination(nsc::read_combination_corpus(a.dev, cfg.num_systems), src_vocab,
                                           tgt_vocab, cfg.use_source);
        run.input("dev", a.dev);
    }
    log_info("training on " + std::to_string(train_data.size()) + " sentences, vocab " +
             std::to_string(tgt_vocab.size()) + " target / " + std::to_string(src_size) + " source");

    std::vector<std::string> log_lines;
    nsc::TrainOptions opt;
    opt.threads = a.common.threads;
    opt.on_epoch = [&](const nsc::EpochLog& l) {
        std::string line = "epoch " + std::to_string(l.epoch) + " loss " + fmt(l.loss, 6);
        if (l.dev_bleu >= 0) {
            line += " dev_bleu " + fmt(l.dev_bleu, 2);
            if (l.improved) line += " *";
        }
        log_lines.push_back(line);
        log_info(line);
    };
    auto result = nsc::train(nsc::init_params<float>(cfg, src_size, tgt_vocab.size(), cfg.seed), train_data,
                             dev_data, opt);

    fs::create_directories(a.out);
    fs::path ckpt = fs::path(a.out) / "model.nsc";
    nsc::save_checkpoint(result.best, src_vocab, tgt_vocab, ckpt.string());
    nsc::write_lines((fs::path(a.out) / "train.log").string(), log_lines);
    run.output("checkpoint", ckpt.string());
    run.output("log", (fs::path(a.out) / "train.log").string());
    run.extra("epochs_run", result.history.size());
    run.extra("best_epoch", result.best_epoch);
    run.extra("best_dev_bleu", result.best_bleu);
    run.extra("early_stopped", result.early_stopped);
    run.write(a.out, config_json(cfg), cfg.seed);
    log_info("saved checkpoint " + ckpt.string() + (result.early_stopped ? " (early stop)" : ""));
}

// --- translate --------------------------------------------------------------

struct TranslateArgs {
    DecodeFlags decode;
    std::string model;
    std::string input;
    std::string out = "decode_out";
};

void cmd_translate(const TranslateArgs& a) {
    Run run("translate");
    auto ck = nsc::load_checkpoint<float>(a.model);
    run.input("model", a.model);
    run.input("input", a.input);
    const nsc::ModelConfig& cfg = ck.params.cfg;
    if (cfg.num_systems != 1 || cfg.use_source) {
        throw nsc::ConfigError("translate drives a single-sequence model (num_systems=1, use_source=false); "
                               "this checkpoint wants `combine`");
    }
    nsc::DecodeConfig dcfg = a.decode.resolve(cfg);

    std::vector<nsc::Sentence> lines = nsc::read_sentences(a.input);
    std::vector<nsc::CombinationExample> data;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) throw nsc::InputError("empty line " + std::to_string(i + 1) + " in " + a.input);
        nsc::CombinationExample ex;
        ex.systems.push_back(ck.tgt_vocab.encode(lines[i]));
        data.push_back(std::move(ex));
    }
    auto hyps = nsc::decode_corpus(ck.params, data, dcfg, a.decode.threads);

    fs::create_directories(a.out);
    write_hypotheses(a.out, hyps, ck.tgt_vocab);
    run.output("hypotheses", (fs::path(a.out) / "hypotheses.txt").string());
    nsc::ModelConfig effective = cfg;
    effective.beam = dcfg.beam;
    run.write(a.out, config_json(effective), cfg.seed);
}

// --- combine ----------------------------------------------------------------

struct CombineArgs {
    DecodeFlags decode;
    std::string model;
    std::string policy;
    std::string data;
    std::string out = "combine_out";
};

void cmd_combine(const CombineArgs& a) {
    Run run("combine");
    if (a.model.empty() == a.policy.empty()) {
        throw nsc::ConfigError("provide exactly one of --model (neural combination) and --policy (baseline)");
    }
    run.input("data", a.data);
    fs::create_directories(a.out);

    if (!a.policy.empty()) {
        nsc::SelectionPolicy policy = nsc::SelectionPolicy::parse(a.policy);
        size_t num_systems = 0;
        while (fs::exists(fs::path(a.data) / ("system" + std::to_string(num_systems + 1) + ".txt"))) ++num_systems;
        if (num_systems == 0) throw nsc::DataError("no system1.txt under " + a.data);
        nsc::CombinationCorpus corpus = nsc::read_combination_corpus(a.data, num_systems);
        auto picked = nsc::select_corpus(corpus.systems, &corpus.reference, policy);
        nsc::write_sentences((fs::path(a.out) / "hypotheses.txt").string(), picked);
        run.output("hypotheses", (fs::path(a.out) / "hypotheses.txt").string());
        run.extra("policy", policy.name());
        run.extra("num_systems", num_systems);
        run.write(a.out, json::object(), 0);
        log_info("selected " + std::to_string(picked.size()) + " hypotheses with policy " + policy.name());
        return;
    }

    auto ck = nsc::load_checkpoint<float>(a.model);
    run.input("model", a.model);
    const nsc::ModelConfig& cfg = ck.params.cfg;
    nsc::DecodeConfig dcfg = a.decode.resolve(cfg);
    nsc::CombinationCorpus corpus = nsc::read_combination_corpus(a.data, cfg.num_systems);
    auto data = nsc::encode_combination(corpus, ck.src_vocab, ck.tgt_vocab, cfg.use_source);
    auto hyps = nsc::decode_corpus(ck.params, data, dcfg, a.decode.threads);

    write_hypotheses(a.out, hyps, ck.tgt_vocab);
    run.output("hypotheses", (fs::path(a.out) / "hypotheses.txt").string());
    nsc::ModelConfig effective = cfg;
    effective.beam = dcfg.beam;
    run.write(a.out, config_json(effective), cfg.seed);
}

// --- ensemble ---------------------------------------------------------------

struct EnsembleArgs {
    DecodeFlags decode;
    std::vector<std::string> models;
    std::string data;
    std::string out = "ensemble_out";
};

void cmd_ensemble(const EnsembleArgs& a) {
    Run run("ensemble");
    if (a.models.empty()) throw nsc::ConfigError("ensemble needs at least one --models checkpoint");
    std::vector<nsc::Checkpoint<float>> members;
    for (const std::string& path : a.models) {
        members.push_back(nsc::load_checkpoint<float>(path));
        run.input("model" + std::to_string(members.size()), path);
    }
    const nsc::ModelConfig& cfg = members[0].params.cfg;
    for (size_t m = 1; m < members.size(); ++m) {
        const nsc::ModelConfig& other = members[m].params.cfg;
        if (other.num_systems != cfg.num_systems || other.use_source != cfg.use_source) {
            throw nsc::ConfigError("ensemble member " + std::to_string(m + 1) +
                                   " disagrees on num_systems/use_source");
        }
        if (members[m].tgt_vocab.contents() != members[0].tgt_vocab.contents() ||
            members[m].src_vocab.contents() != members[0].src_vocab.contents()) {
            throw nsc::ConfigError("ensemble member " + std::to_string(m + 1) + " was trained on a different "
                                   "vocabulary");
        }
    }
    nsc::DecodeConfig dcfg = a.decode.resolve(cfg);
    nsc::CombinationCorpus corpus = nsc::read_combination_corpus(a.data, cfg.num_systems);
    run.input("data", a.data);
    auto data = nsc::encode_combination(corpus, members[0].src_vocab, members[0].tgt_vocab, cfg.use_source);

    std::vector<const nsc::ModelParams<float>*> params;
    for (const auto& m : members) params.push_back(&m.params);
    auto hyps = nsc::ensemble_decode_corpus(params, data, dcfg, a.decode.threads);

    fs::create_directories(a.out);
    write_hypotheses(a.out, hyps, members[0].tgt_vocab);
    run.output("hypotheses", (fs::path(a.out) / "hypotheses.txt").string());
    run.extra("members", a.models.size());
    nsc::ModelConfig effective = cfg;
    effective.beam = dcfg.beam;
    run.write(a.out, config_json(effective), cfg.seed);
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
    std::string hyp;
    std::string ref;
    std::vector<std::string> metrics = {"bleu", "ribes", "unk"};
    bool smooth_add1 = false;
    bool case_sensitive = false;
    std::string out;
};

void cmd_eval(const EvalArgs& a) {
    Run run("eval");
    for (const std::string& m : a.metrics) {
        if (m != "bleu" && m != "ribes" && m != "unk") {
            throw nsc::ConfigError("unknown metric '" + m + "' (bleu, ribes, unk)");
        }
    }
    auto hyps = nsc::read_sentences(a.hyp);
    auto refs = nsc::read_sentences(a.ref);
    run.input("hyp", a.hyp);
    run.input("ref", a.ref);

    auto wants = [&](const char* name) {
        return std::find(a.metrics.begin(), a.metrics.end(), name) != a.metrics.end();
    };
    std::vector<std::string> report;
    if (wants("bleu")) {
        nsc::BleuOptions opt;
        opt.smooth_add1 = a.smooth_add1;
        opt.case_insensitive = !a.case_sensitive;
        nsc::BleuReport b = nsc::corpus_bleu(hyps, refs, opt);
        report.push_back("bleu=" + fmt(b.score, 4));
        for (size_t n = 0; n < b.precisions.size(); ++n) {
            report.push_back("p" + std::to_string(n + 1) + "=" + fmt(b.precisions[n], 4));
        }
        report.push_back("bp=" + fmt(b.brevity_penalty, 4));
        report.push_back("hyp_len=" + std::to_string(b.hyp_len));
        report.push_back("ref_len=" + std::to_string(b.ref_len));
        log_info("BLEU " + fmt(b.score, 2) + "  (BP " + fmt(b.brevity_penalty, 3) + ", hyp " +
                 std::to_string(b.hyp_len) + " ref " + std::to_string(b.ref_len) + ")");
    }
    if (wants("ribes")) {
        nsc::CorpusRibes r = nsc::corpus_ribes(hyps, refs);
        report.push_back("ribes=" + fmt(r.score, 6));
        report.push_back("ribes_degenerate=" + std::to_string(r.degenerate));
        log_info("RIBES " + fmt(r.score, 4) + "  (" + std::to_string(r.degenerate) + " degenerate)");
    }
    if (wants("unk")) {
        size_t unk = nsc::count_unk(hyps);
        report.push_back("unk=" + std::to_string(unk));
        log_info("UNK " + std::to_string(unk));
    }

    for (const std::string& line : report) std::printf("%s\n", line.c_str());
    if (!a.out.empty()) {
        fs::create_directories(a.out);
        nsc::write_lines((fs::path(a.out) / "report.txt").string(), report);
        run.output("report", (fs::path(a.out) / "report.txt").string());
        json cfg{{"metrics", a.metrics}, {"smooth_add1", a.smooth_add1}, {"case_sensitive", a.case_sensitive}};
        run.write(a.out, cfg, 0);
    }
}

// --- gradcheck --------------------------------------------------------------

struct GradcheckArgs {
    std::string config_path;
    uint64_t seed = 1;
    size_t samples = 240;
    double eps = 3e-5;
    double threshold = 1e-6;
    bool inject_fault = false;
};

int cmd_gradcheck(const GradcheckArgs& a) {
    // tiny full model: every architectural feature on, 64-bit throughout
    nsc::ModelConfig cfg;
    cfg.hidden = 8;
    cfg.embedding = 6;
    cfg.num_systems = 3;
    cfg.use_source = true;
    cfg.src_vocab_limit = 20;
    cfg.tgt_vocab_limit = 20;
    cfg.seed = a.seed;
    if (!a.config_path.empty()) cfg = nsc::parse_model_config(read_file(a.config_path), cfg);
    cfg.validate();

    const size_t src_vocab = cfg.use_source ? cfg.src_vocab_limit : 0;
    const size_t tgt_vocab = cfg.tgt_vocab_limit;
    auto params = nsc::init_params<double>(cfg, src_vocab, tgt_vocab, cfg.seed);

    nsc::Rng rng = nsc::substream(cfg.seed, "gradcheck-data");
    auto random_seq = [&](size_t lo, size_t hi, size_t vocab) {
        nsc::TokenSeq seq;
        size_t len = lo + rng.below(hi - lo + 1);
        for (size_t i = 0; i < len; ++i) {
            seq.push_back(nsc::TokenId(nsc::kNumReserved + rng.below(vocab - nsc::kNumReserved)));
        }
        return seq;
    };
    std::vector<nsc::CombinationExample> batch;
    for (int i = 0; i < 2; ++i) {
        nsc::CombinationExample ex;
        if (cfg.use_source) ex.source = random_seq(3, 5, src_vocab);
        for (size_t k = 0; k < cfg.num_systems; ++k) ex.systems.push_back(random_seq(2, 5, tgt_vocab));
        ex.reference = random_seq(2, 4, tgt_vocab);
        batch.push_back(std::move(ex));
    }

    auto reg = params.registry();
    auto loss_fn = [&]() {
        nsc::Tape<double> tape;
        tape.inject_tanh_fault = a.inject_fault;
        auto bound = nsc::bind_model(tape, params, false);
        return tape.value(nsc::batch_loss(tape, bound, batch))[0];
    };
    auto grad_fn = [&]() {
        nsc::Tape<double> tape;
        tape.inject_tanh_fault = a.inject_fault;
        auto bound = nsc::bind_model(tape, params, true);
        tape.backward(nsc::batch_loss(tape, bound, batch));
        return nsc::collect_grads(tape, bound);
    };
    auto report = nsc::grad_check<double>(loss_fn, grad_fn, reg, a.eps, a.samples, cfg.seed);

    bool pass = report.passed(a.threshold);
    std::printf("max_rel=%s\n", fmt_sci(report.max_rel_error).c_str());
    std::printf("worst=%s[%zu]\n", report.worst_param.c_str(), report.worst_index);
    std::printf("analytic=%s\n", fmt_sci(report.worst_analytic).c_str());
    std::printf("numeric=%s\n", fmt_sci(report.worst_numeric).c_str());
    std::printf("samples=%zu\n", report.samples);
    std::printf("threshold=%s\n", fmt_sci(a.threshold).c_str());
    std::printf("result=%s\n", pass ? "pass" : "fail");
    log_info(std::string("gradient check ") + (pass ? "passed" : "FAILED") + ", worst " + report.worst_param + "[" +
             std::to_string(report.worst_index) + "] rel " + fmt_sci(report.max_rel_error));
    return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neural multi-source system combination for machine translation"};
    app.require_subcommand(1);
    int exit_code = 0;

    GenArgs gen_args;
    auto* gen = app.add_subcommand("gen", "generate a synthetic parallel corpus");
    gen_args.common.attach(gen);
    gen->add_option("--task", gen_args.task, "copy, reverse, or lexmap");
    gen->add_option("--vocab", gen_args.vocab, "synthetic vocabulary size");
    gen->add_option("--min-len", gen_args.min_len, "minimum sentence length");
    gen->add_option("--max-len", gen_args.max_len, "maximum sentence length");
    gen->add_option("--count", gen_args.count, "number of sentence pairs");
    gen->add_option("--out", gen_args.out, "output directory");
    gen->callback([&] { cmd_gen(gen_args); });

    SimulateArgs sim_args;
    auto* sim = app.add_subcommand("simulate", "derive system outputs for combination training");
    sim_args.common.attach(sim);
    sim->add_option("--data", sim_args.data, "parallel corpus directory (source.txt/target.txt)")->required();
    sim->add_option("--out", sim_args.out, "output directory");
    sim->add_option("--profiles", sim_args.profiles, "corruption profiles, e.g. nmt-like,smt-like,pbmt-like")
        ->delimiter(',');
    sim->add_flag("--crossfold", sim_args.crossfold, "cross-fold translate with the built-in toy NMT");
    sim->add_option("--systems", sim_args.systems, "number of cross-fold toy systems");
    sim->add_option("--toy-epochs", sim_args.toy_epochs, "training epochs per toy system");
    sim->callback([&] { cmd_simulate(sim_args); });

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "train the combination model");
    train_args.common.attach(train);
    train->add_option("--data", train_args.data, "combination corpus directory")->required();
    train->add_option("--dev", train_args.dev, "development corpus directory for early stopping");
    train->add_option("--out", train_args.out, "output directory");
    train->callback([&] { cmd_train(train_args); });

    TranslateArgs tr_args;
    auto* tr = app.add_subcommand("translate", "decode a plain text file with a single-input model");
    tr_args.decode.attach(tr);
    tr->add_option("--model", tr_args.model, "checkpoint path")->required();
    tr->add_option("--input", tr_args.input, "input text file")->required();
    tr->add_option("--out", tr_args.out, "output directory");
    tr->callback([&] { cmd_translate(tr_args); });

    CombineArgs comb_args;
    auto* comb = app.add_subcommand("combine", "combine system outputs (neural model or selection baseline)");
    comb_args.decode.attach(comb);
    comb->add_option("--model", comb_args.model, "checkpoint path");
    comb->add_option("--policy", comb_args.policy, "selection baseline: fixed:K, oracle, or heuristic");
    comb->add_option("--data", comb_args.data, "combination corpus directory")->required();
    comb->add_option("--out", comb_args.out, "output directory");
    comb->callback([&] { cmd_combine(comb_args); });

    EnsembleArgs ens_args;
    auto* ens = app.add_subcommand("ensemble", "decode with an averaged ensemble of checkpoints");
    ens_args.decode.attach(ens);
    ens->add_option("--models", ens_args.models, "comma-separated checkpoint paths")->delimiter(',')->required();
    ens->add_option("--data", ens_args.data, "combination corpus directory")->required();
    ens->add_option("--out", ens_args.out, "output directory");
    ens->callback([&] { cmd_ensemble(ens_args); });

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "score hypotheses against references");
    eval->add_option("--hyp", eval_args.hyp, "hypothesis file")->required();
    eval->add_option("--ref", eval_args.ref, "reference file")->required();
    eval->add_option("--metrics", eval_args.metrics, "bleu, ribes, unk")->delimiter(',');
    eval->add_flag("--smooth-add1", eval_args.smooth_add1, "add-one smoothing on higher-order n-grams");
    eval->add_flag("--case-sensitive", eval_args.case_sensitive, "disable lowercasing before BLEU");
    eval->add_option("--out", eval_args.out, "also write report.txt + manifest here");
    eval->callback([&] { cmd_eval(eval_args); });

    GradcheckArgs gc_args;
    auto* gc = app.add_subcommand("gradcheck", "compare analytic gradients with central finite differences");
    gc->add_option("--config", gc_args.config_path, "key=value overrides of the tiny check model");
    gc->add_option("--seed", gc_args.seed, "master random seed");
    gc->add_option("--samples", gc_args.samples, "minimum sampled parameter entries");
    gc->add_option("--eps", gc_args.eps, "finite-difference step");
    gc->add_option("--threshold", gc_args.threshold, "maximum passing relative error");
    gc->add_flag("--inject-fault", gc_args.inject_fault, "corrupt one backward rule to prove the check can fail");
    gc->callback([&] { exit_code = cmd_gradcheck(gc_args); });

    try {
        app.parse(argc, argv);
        return exit_code;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the parse failure
        return 2;
    } catch (const nsc::ConfigError& e) {
        log_error(e.what());
        return 2;
    } catch (const nsc::DataError& e) {
        log_error(e.what());
        return 3;
    } catch (const nsc::LoadError& e) {
        log_error(e.what());
        return 3;
    } catch (const nsc::VocabError& e) {
        log_error(e.what());
        return 3;
    } catch (const nsc::InputError& e) {
        log_error(e.what());
        return 3;
    } catch (const std::exception& e) {
        log_error(e.what());
        return 4;
    }
}
