// Acceptance gate: one check per release criterion, one pass/fail line each.
// Library-level properties run in process; pipeline-level ones drive the CLI
// binary (NSC_BIN) and the reproduction script (NSC_REPRO_SH).
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nsc/attention.hpp"
#include "nsc/config.hpp"
#include "nsc/datasim.hpp"
#include "nsc/decoder.hpp"
#include "nsc/metrics.hpp"
#include "nsc/model.hpp"
#include "nsc/rng.hpp"
#include "nsc/text.hpp"
#include "nsc/token.hpp"

namespace fs = std::filesystem;

using nsc::AttentionOutput;
using nsc::beam_search;
using nsc::bind_model;
using nsc::BleuReport;
using nsc::BoundModel;
using nsc::CombinationCorpus;
using nsc::CombinationExample;
using nsc::corpus_bleu;
using nsc::corpus_ribes;
using nsc::CorpusRibes;
using nsc::count_unk;
using nsc::crossfold_simulate;
using nsc::DecodeConfig;
using nsc::Hypothesis;
using nsc::init_params;
using nsc::kBos;
using nsc::kEos;
using nsc::ModelConfig;
using nsc::ModelParams;
using nsc::ModelScorer;
using nsc::ParallelCorpus;
using nsc::parse_task;
using nsc::read_lines;
using nsc::read_sentences;
using nsc::Rng;
using nsc::Sentence;
using nsc::synthetic_task_generate;
using nsc::Tape;
using nsc::Tensor;
using nsc::TokenId;
using nsc::TokenSeq;
using nsc::ToyNmtAdapter;
using nsc::VarId;
using nsc::write_lines;

namespace {

const std::string kBin = NSC_BIN;
const std::string kReproScript = NSC_REPRO_SH;

fs::path work() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "nsc_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

struct CmdResult {
    int code = -1;
    std::string out;
    std::string err;
};

CmdResult run_shell(std::string cmd) {
    static int n = 0;
    fs::path o = work() / ("stdout." + std::to_string(n));
    fs::path e = work() / ("stderr." + std::to_string(n));
    ++n;
    cmd += " >" + o.string() + " 2>" + e.string();
    int status = std::system(cmd.c_str());
    CmdResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(o);
    r.err = slurp(e);
    return r;
}

CmdResult run_cli(const std::string& args) { return run_shell(kBin + " " + args); }

CmdResult require_cli(const std::string& args) {
    CmdResult r = run_cli(args);
    if (r.code != 0) {
        throw std::runtime_error("`nsc " + args.substr(0, args.find(' ')) + "` exited " +
                                 std::to_string(r.code) + ": " + r.err);
    }
    return r;
}

double parse_metric(const std::string& report, const std::string& key) {
    std::istringstream in(report);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind(key + "=", 0) == 0) return std::stod(line.substr(key.size() + 1));
    }
    throw std::runtime_error("metric '" + key + "' missing from report");
}

struct Stopwatch {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double secs() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

std::string fmt(const char* pattern, ...) {
    char buf[512];
    va_list args;
    va_start(args, pattern);
    std::vsnprintf(buf, sizeof buf, pattern, args);
    va_end(args);
    return buf;
}

void note(const std::string& msg) { std::fprintf(stderr, "[acceptance] %s\n", msg.c_str()); }

struct Outcome {
    bool ok = false;
    std::string detail;
};

struct Gate {
    int failed = 0;
    int total = 0;

    template <typename Fn>
    void criterion(int num, const std::string& title, Fn fn) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        ++total;
        if (!o.ok) ++failed;
        std::printf("criterion %2d  %-34s %s  %s\n", num, title.c_str(), o.ok ? "pass" : "FAIL",
                    o.detail.c_str());
        std::fflush(stdout);
    }
};

// ---------------------------------------------------------------------------
// Shared workspace for the directional criteria: the lexmap combination
// experiment (vocab 100, 5k/500/500, three corruption systems), plus every
// model variant those criteria compare.
struct Desk {
    fs::path root = work() / "desk";
    fs::path sim_train = root / "sim_train";
    fs::path sim_dev = root / "sim_dev";
    fs::path sim_test = root / "sim_test";
    std::map<std::string, double> bleu;  // per trained model, on the test set
    double best_single = 0;
    double oracle_bleu = 0;
    double build_secs = 0;  // data + first model + its evaluation

    fs::path model_file(const std::string& name) const { return root / name / "model.nsc"; }
    fs::path decode_dir(const std::string& name) const { return root / ("dec_" + name); }

    void build_data() {
        note("desk data: generating and corrupting the lexmap corpus");
        require_cli("gen --task lexmap --vocab 100 --min-len 3 --max-len 12 --count 6000 --seed 404 --out " +
                    (root / "all").string());
        std::vector<std::string> src = read_lines((root / "all" / "source.txt").string());
        std::vector<std::string> tgt = read_lines((root / "all" / "target.txt").string());
        auto split = [&](const std::string& name, size_t lo, size_t hi) {
            fs::path dir = root / ("raw_" + name);
            fs::create_directories(dir);
            write_lines((dir / "source.txt").string(), {src.begin() + lo, src.begin() + hi});
            write_lines((dir / "target.txt").string(), {tgt.begin() + lo, tgt.begin() + hi});
            require_cli("simulate --data " + dir.string() + " --profiles nmt-like,smt-like,pbmt-like --seed 405" +
                        " --out " + (root / ("sim_" + name)).string());
        };
        split("train", 0, 5000);
        split("dev", 5000, 5500);
        split("test", 5500, 6000);
    }

    void train_model(const std::string& name, uint64_t seed, bool use_source) {
        if (fs::exists(model_file(name))) return;
        note("desk training: model " + name);
        require_cli("train --data " + sim_train.string() + " --dev " + sim_dev.string() +
                    " --preset desk" + (use_source ? "" : " --use-source false") + " --seed " +
                    std::to_string(seed) + " --threads 1 --out " + (root / name).string());
    }

    // Decode the test set with one model and score it; cached per model.
    double test_bleu(const std::string& name) {
        auto hit = bleu.find(name);
        if (hit != bleu.end()) return hit->second;
        note("desk decoding: model " + name + " on the test set");
        require_cli("combine --model " + model_file(name).string() + " --data " + sim_test.string() +
                    " --threads 1 --out " + decode_dir(name).string());
        CmdResult r = require_cli("eval --hyp " + (decode_dir(name) / "hypotheses.txt").string() +
                                  " --ref " + (sim_test / "reference.txt").string());
        return bleu[name] = parse_metric(r.out, "bleu");
    }

    double file_bleu(const fs::path& hyp) {
        CmdResult r = require_cli("eval --hyp " + hyp.string() + " --ref " +
                                  (sim_test / "reference.txt").string());
        return parse_metric(r.out, "bleu");
    }
};

}  // namespace

int main() {
    Gate gate;
    std::optional<Desk> desk;

    // 1. Full-model gradients agree with central finite differences.
    gate.criterion(1, "gradient fidelity", [&]() -> Outcome {
        Stopwatch sw;
        CmdResult r = run_cli("gradcheck");
        double wall = sw.secs();
        double max_rel = parse_metric(r.out, "max_rel");
        bool ok = r.code == 0 && max_rel < 1e-6 && wall < 60.0;
        return {ok, fmt("max_rel=%.3e wall=%.1fs", max_rel, wall)};
    });

    // 2. Word- and system-level attention are distributions at every step, and
    // the fused context is exactly the beta-weighted sum of the per-input ones.
    gate.criterion(2, "attention contracts", [&]() -> Outcome {
        Rng rng(929);
        size_t steps = 0;
        size_t bad_shape = 0;
        double worst_sum = 0, worst_fuse = 0, min_weight = 1;
        while (steps < 1000) {
            ModelConfig cfg;
            cfg.hidden = 5 + rng.below(10);
            cfg.embedding = 3 + rng.below(8);
            cfg.num_systems = 1 + rng.below(4);
            cfg.use_source = rng.below(2) == 1;
            const size_t src_vocab = cfg.use_source ? 9 : 0;
            const size_t tgt_vocab = 12;
            ModelParams<double> params = init_params<double>(cfg, src_vocab, tgt_vocab, rng.below(1u << 30));
            for (int e = 0; e < 2 && steps < 1000; ++e) {
                CombinationExample ex;
                if (cfg.use_source) {
                    for (size_t i = 1 + rng.below(5); i > 0; --i) ex.source.push_back(TokenId(rng.below(src_vocab)));
                }
                for (size_t k = 0; k < cfg.num_systems; ++k) {
                    ex.systems.emplace_back();
                    for (size_t i = 1 + rng.below(6); i > 0; --i) {
                        ex.systems.back().push_back(TokenId(rng.below(tgt_vocab)));
                    }
                }
                Tape<double> tape;
                BoundModel<double> bound = bind_model(tape, params, false);
                ModelScorer<double> scorer(tape, bound, ex);
                VarId state = scorer.start();
                TokenId prev = kBos;
                for (int t = 0; t < 5 && steps < 1000; ++t) {
                    VarId next{};
                    scorer.step(state, prev, next);
                    const AttentionOutput& at = scorer.last_attention();
                    if (at.word_weights.size() != cfg.num_inputs() || at.contexts.size() != cfg.num_inputs()) {
                        ++bad_shape;
                    }
                    for (VarId w : at.word_weights) {
                        const Tensor<double>& alpha = tape.value(w);
                        double sum = 0;
                        for (size_t i = 0; i < alpha.numel(); ++i) {
                            sum += alpha[i];
                            min_weight = std::min(min_weight, alpha[i]);
                        }
                        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
                    }
                    const Tensor<double>& beta = tape.value(at.system_weights);
                    if (beta.numel() != at.contexts.size()) ++bad_shape;
                    double bsum = 0;
                    for (size_t k = 0; k < beta.numel(); ++k) {
                        bsum += beta[k];
                        min_weight = std::min(min_weight, beta[k]);
                    }
                    worst_sum = std::max(worst_sum, std::abs(bsum - 1.0));
                    const Tensor<double>& fused = tape.value(at.fused);
                    for (size_t i = 0; i < fused.numel(); ++i) {
                        double manual = 0;
                        for (size_t k = 0; k < at.contexts.size(); ++k) {
                            manual += beta[k] * tape.value(at.contexts[k])[i];
                        }
                        worst_fuse = std::max(worst_fuse, std::abs(manual - fused[i]));
                    }
                    ++steps;
                    state = next;
                    prev = TokenId(rng.below(tgt_vocab));
                }
            }
        }
        bool ok = bad_shape == 0 && worst_sum <= 1e-6 && worst_fuse <= 1e-6 && min_weight >= 0.0;
        return {ok, fmt("steps=%zu sum_dev=%.1e fuse_dev=%.1e min_w=%.1e", steps, worst_sum, worst_fuse,
                        min_weight)};
    });

    // 3. With the beam wide enough to hold every prefix, beam search must return
    // the argmax of brute-force enumeration (model vocabulary 3, length cap 4).
    gate.criterion(3, "beam equals exhaustive argmax", [&]() -> Outcome {
        const size_t kVocab = 3, kMaxLen = 4;
        size_t matches = 0, enumerated = 0;
        for (uint64_t inst = 0; inst < 100; ++inst) {
            ModelConfig cfg;
            cfg.hidden = 6;
            cfg.embedding = 4;
            cfg.num_systems = 1;
            cfg.use_source = false;
            ModelParams<double> params = init_params<double>(cfg, 0, kVocab, 7000 + inst);
            Rng drng(8000 + inst);
            CombinationExample ex;
            ex.systems.emplace_back();
            for (size_t i = 2 + drng.below(3); i > 0; --i) ex.systems[0].push_back(TokenId(drng.below(kVocab)));

            Tape<double> tape;
            BoundModel<double> bound = bind_model(tape, params, false);
            ModelScorer<double> scorer(tape, bound, ex);
            DecodeConfig dc;
            dc.beam = 81;  // 3^4: room for every prefix, so nothing is ever pruned
            dc.max_len = kMaxLen;
            Hypothesis best = beam_search(scorer, dc);

            struct Cand {
                TokenSeq toks;
                double score;
                bool complete;
            };
            std::vector<Cand> all;
            TokenSeq prefix;
            std::function<void(VarId, TokenId, double, size_t)> expand = [&](VarId state, TokenId prev,
                                                                             double score, size_t depth) {
                VarId next{};
                std::vector<double> dist = scorer.step(state, prev, next);
                for (TokenId v = 0; v < kVocab; ++v) {
                    double sc = score + std::log(dist[v]);
                    prefix.push_back(v);
                    if (v == kEos) {
                        all.push_back({prefix, sc, true});
                    } else if (depth + 1 == kMaxLen) {
                        all.push_back({prefix, sc, false});
                    } else {
                        expand(next, v, sc, depth + 1);
                    }
                    prefix.pop_back();
                }
            };
            expand(scorer.start(), kBos, 0.0, 0);
            enumerated += all.size();

            // Rank exactly as the decoder does: finished hypotheses beat
            // truncated ones, then normalized log-probability decides.
            const Cand* top = nullptr;
            for (const Cand& c : all) {
                if (top == nullptr) {
                    top = &c;
                } else if (c.complete != top->complete) {
                    if (c.complete) top = &c;
                } else if (c.score / double(c.toks.size()) > top->score / double(top->toks.size())) {
                    top = &c;
                }
            }
            bool match = top != nullptr && top->toks == best.tokens &&
                         std::abs(top->score / double(top->toks.size()) - best.ranking_score(true)) < 1e-9;
            matches += match;
        }
        bool ok = matches == 100 && enumerated == 100 * 31;  // 15 finished + 16 truncated per instance
        return {ok, fmt("instances=100 matches=%zu", matches)};
    });

    // 4. The trained combination beats the best single system by a clear margin
    // and is at least as good as oracle selection, within the desk-scale budget.
    gate.criterion(4, "combination beats best single", [&]() -> Outcome {
        Stopwatch sw;
        desk.emplace();
        fs::create_directories(desk->root);
        desk->build_data();
        desk->train_model("on_1", 1, true);
        double combo = desk->test_bleu("on_1");

        double best_single = 0;
        for (int k = 1; k <= 3; ++k) {
            best_single = std::max(best_single,
                                   desk->file_bleu(desk->sim_test / ("system" + std::to_string(k) + ".txt")));
        }
        desk->best_single = best_single;

        require_cli("combine --policy oracle --data " + desk->sim_test.string() + " --out " +
                    (desk->root / "dec_oracle").string());
        desk->oracle_bleu = desk->file_bleu(desk->root / "dec_oracle" / "hypotheses.txt");
        desk->build_secs = sw.secs();

        bool ok = combo >= best_single + 5.0 && combo >= desk->oracle_bleu &&
                  desk->build_secs < 1800.0;  // the budget is 30 min on 4 cores; this is one
        return {ok, fmt("combo=%.2f best_single=%.2f oracle=%.2f wall=%.0fs", combo, best_single,
                        desk->oracle_bleu, desk->build_secs)};
    });

    // 5. Attending the source on top of the system outputs helps: on >= off for
    // a majority of matched seeds.
    gate.criterion(5, "source ablation direction", [&]() -> Outcome {
        if (!desk) throw std::runtime_error("desk workspace missing (criterion 4 failed early)");
        int wins = 0;
        std::string detail;
        for (uint64_t seed : {1, 2, 3}) {
            std::string on = "on_" + std::to_string(seed), off = "off_" + std::to_string(seed);
            desk->train_model(on, seed, true);
            desk->train_model(off, seed, false);
            double b_on = desk->test_bleu(on), b_off = desk->test_bleu(off);
            wins += b_on >= b_off;
            detail += fmt("%ss%llu %.2f/%.2f", detail.empty() ? "" : " ", (unsigned long long)seed, b_on, b_off);
        }
        return {wins >= 2, fmt("on/off: %s wins=%d/3", detail.c_str(), wins)};
    });

    // 6. The combination emits strictly fewer UNKs than its nmt-like input.
    gate.criterion(6, "UNK reduction", [&]() -> Outcome {
        if (!desk) throw std::runtime_error("desk workspace missing (criterion 4 failed early)");
        size_t combo_unk = count_unk(read_sentences((desk->decode_dir("on_1") / "hypotheses.txt").string()));
        size_t nmt_unk = count_unk(read_sentences((desk->sim_test / "system1.txt").string()));
        return {combo_unk < nmt_unk, fmt("combination=%zu nmt-like=%zu", combo_unk, nmt_unk)};
    });

    // 7. Averaging four differently-seeded models beats their mean, and an
    // ensemble of four copies of one checkpoint degenerates to that model.
    gate.criterion(7, "ensemble gains", [&]() -> Outcome {
        if (!desk) throw std::runtime_error("desk workspace missing (criterion 4 failed early)");
        desk->train_model("on_4", 4, true);
        double mean = 0;
        std::string members;
        for (int s = 1; s <= 4; ++s) {
            std::string name = "on_" + std::to_string(s);
            mean += desk->test_bleu(name) / 4.0;
            members += (s > 1 ? "," : "") + desk->model_file(name).string();
        }
        note("desk decoding: 4-model ensemble on the test set");
        require_cli("ensemble --models " + members + " --data " + desk->sim_test.string() +
                    " --threads 1 --out " + (desk->root / "dec_ens").string());
        double ens = desk->file_bleu(desk->root / "dec_ens" / "hypotheses.txt");

        note("desk decoding: self-ensemble of model on_1");
        std::string self = desk->model_file("on_1").string();
        require_cli("ensemble --models " + self + "," + self + "," + self + "," + self + " --data " +
                    desk->sim_test.string() + " --threads 1 --out " + (desk->root / "dec_self").string());
        bool identical = slurp(desk->root / "dec_self" / "hypotheses.txt") ==
                         slurp(desk->decode_dir("on_1") / "hypotheses.txt");
        bool ok = ens >= mean && identical;
        return {ok, fmt("ensemble=%.2f mean_singles=%.2f self_ensemble_identical=%s", ens, mean,
                        identical ? "yes" : "no")};
    });

    // 8. The scorers reproduce their worked examples.
    gate.criterion(8, "metric worked examples", [&]() -> Outcome {
        BleuReport b = corpus_bleu({{"a", "b", "c", "d"}}, {{"a", "b", "c", "d", "e", "f", "g", "h"}});
        bool bleu_ok = std::abs(b.score - 36.79) <= 0.01;  // p_n = 1, BP = e^-1

        CorpusRibes r = corpus_ribes({{"b", "a", "c"}}, {{"a", "b", "c"}});
        bool ribes_ok = std::abs(r.score - 2.0 / 3.0) <= 1e-9;

        std::vector<Sentence> same = {{"a", "b", "c", "d"}, {"e", "f", "g"}, {"h", "i", "j", "k", "l"}};
        bool perfect_ok = corpus_bleu(same, same).score == 100.0 && corpus_ribes(same, same).score == 1.0;

        bool ok = bleu_ok && ribes_ok && perfect_ok;
        return {ok, fmt("bleu=%.4f ribes=%.9f perfect=%s", b.score, r.score, perfect_ok ? "exact" : "off")};
    });

    // 9. Cross-fold simulation covers every sentence exactly once and never lets
    // a model translate a sentence from its own training fold.
    gate.criterion(9, "cross-fold fidelity", [&]() -> Outcome {
        note("cross-fold: training the toy system on both folds of 2000 sentences");
        ParallelCorpus corpus = synthetic_task_generate(parse_task("copy"), 40, 3, 10, 2000, 909);
        ToyNmtAdapter adapter;
        adapter.base.max_epochs = 8;  // fold bookkeeping is under test here, not toy quality
        adapter.seed = 5;
        CombinationCorpus out = crossfold_simulate(corpus, std::vector<ToyNmtAdapter>{adapter}, 910);

        std::vector<int> seen(corpus.sources.size(), 0);
        size_t self_fold = 0, fold_a = 0, bad_tag = 0;
        for (const auto& e : out.provenance) {
            if (e.id < seen.size()) ++seen[e.id];
            self_fold += e.fold == e.translated_by;
            fold_a += e.fold == 'A';
            bad_tag += e.tag != adapter.tag;
        }
        bool covered = out.size() == 2000 && out.provenance.size() == 2000 &&
                       std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; });
        bool ok = covered && self_fold == 0 && bad_tag == 0 && fold_a == 1000;
        return {ok, fmt("sentences=2000 self_fold=%zu folds=%zu/%zu", self_fold, fold_a, 2000 - fold_a)};
    });

    // 10. The end-to-end pipeline is bitwise reproducible.
    gate.criterion(10, "pipeline reproducibility", [&]() -> Outcome {
        fs::path r1 = work() / "repro_1", r2 = work() / "repro_2";
        note("repro script: first run");
        CmdResult a = run_shell("NSC_BIN=" + kBin + " bash " + kReproScript + " " + r1.string());
        note("repro script: second run");
        CmdResult b = run_shell("NSC_BIN=" + kBin + " bash " + kReproScript + " " + r2.string());
        if (a.code != 0 || b.code != 0) {
            return {false, fmt("script exited %d / %d", a.code, b.code)};
        }
        bool hyps = slurp(r1 / "combined" / "hypotheses.txt") == slurp(r2 / "combined" / "hypotheses.txt");
        bool reports = slurp(r1 / "eval" / "report.txt") == slurp(r2 / "eval" / "report.txt");
        double bleu = parse_metric(slurp(r1 / "eval" / "report.txt"), "bleu");
        bool ok = hyps && reports && !slurp(r1 / "combined" / "hypotheses.txt").empty();
        return {ok, fmt("hypotheses=%s reports=%s bleu=%.2f", hyps ? "identical" : "DIFFER",
                        reports ? "identical" : "DIFFER", bleu)};
    });

    std::printf("acceptance: %d of %d criteria passed\n", gate.total - gate.failed, gate.total);
    return gate.failed == 0 ? 0 : 1;
}
