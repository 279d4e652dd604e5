#pragma once

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "nsc/adadelta.hpp"
#include "nsc/config.hpp"
#include "nsc/decoder.hpp"
#include "nsc/error.hpp"
#include "nsc/metrics.hpp"
#include "nsc/model.hpp"
#include "nsc/rng.hpp"
#include "nsc/tape.hpp"
#include "nsc/token.hpp"

namespace nsc {

struct EpochLog {
    size_t epoch = 0;       // 1-based
    double loss = 0;        // nats per target position
    double total_loss = 0;  // summed over the epoch
    double dev_bleu = -1;   // <0: no dev evaluation this epoch
    bool improved = false;
};

struct TrainOptions {
    size_t threads = 1;                             // data-parallel gradient workers
    std::function<void(const EpochLog&)> on_epoch;  // optional logging hook
};

template <typename Real>
struct TrainResult {
    ModelParams<Real> best;  // best dev BLEU; final params when no dev set
    ModelParams<Real> last;
    std::vector<EpochLog> history;
    size_t best_epoch = 0;  // 1-based
    double best_bleu = -1;
    bool early_stopped = false;
};

namespace detail {

inline void run_sharded(size_t count, size_t threads, const std::function<void(size_t, size_t, size_t)>& work) {
    threads = std::max<size_t>(1, std::min(threads, count));
    if (threads == 1) {
        work(0, 0, count);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (size_t s = 0; s < threads; ++s) {
        size_t lo = count * s / threads, hi = count * (s + 1) / threads;
        pool.emplace_back([&, s, lo, hi] {
            try {
                work(s, lo, hi);
            } catch (...) {
                errors[s] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace detail

// Decode every example in corpus order; sentence i of the result belongs to
// example i regardless of thread count.
template <typename Real>
std::vector<Hypothesis> decode_corpus(const ModelParams<Real>& params, const std::vector<CombinationExample>& data,
                                      const DecodeConfig& dcfg, size_t threads = 1) {
    std::vector<Hypothesis> out(data.size());
    detail::run_sharded(data.size(), threads, [&](size_t, size_t lo, size_t hi) {
        for (size_t i = lo; i < hi; ++i) out[i] = translate_example(params, data[i], dcfg);
    });
    return out;
}

// Same, averaging the member models' per-step distributions.
template <typename Real>
std::vector<Hypothesis> ensemble_decode_corpus(const std::vector<const ModelParams<Real>*>& members,
                                               const std::vector<CombinationExample>& data, const DecodeConfig& dcfg,
                                               size_t threads = 1) {
    std::vector<Hypothesis> out(data.size());
    detail::run_sharded(data.size(), threads, [&](size_t, size_t lo, size_t hi) {
        for (size_t i = lo; i < hi; ++i) out[i] = ensemble_translate(members, data[i], dcfg);
    });
    return out;
}

// Decode every example and score the id-level corpus BLEU against the
// references (EOS stripped from complete hypotheses, PAD from references).
template <typename Real>
double decode_bleu(const ModelParams<Real>& params, const std::vector<CombinationExample>& dev,
                   const DecodeConfig& dcfg, size_t threads = 1) {
    if (dev.empty()) throw InputError("BLEU evaluation over an empty set");
    std::vector<Sentence> hyps(dev.size()), refs(dev.size());
    std::vector<Hypothesis> decoded = decode_corpus(params, dev, dcfg, threads);
    for (size_t i = 0; i < dev.size(); ++i) {
        TokenSeq toks = decoded[i].tokens;
        if (decoded[i].complete) toks.pop_back();
        for (TokenId t : toks) hyps[i].push_back(std::to_string(t));
        for (TokenId t : dev[i].reference) {
            if (t != kPad) refs[i].push_back(std::to_string(t));
        }
    }
    BleuOptions opt;
    opt.case_insensitive = false;  // ids, not words
    return corpus_bleu(hyps, refs, opt).score;
}

// Seeded epoch shuffle, then sort-by-length bucketing inside chunks of 20
// batches so one batch holds similar lengths but batch contents still vary
// across epochs.
inline std::vector<std::vector<size_t>> epoch_batches(const std::vector<size_t>& lengths, size_t batch_size,
                                                      uint64_t seed, size_t epoch) {
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    std::vector<size_t> idx(lengths.size());
    std::iota(idx.begin(), idx.end(), size_t(0));
    Rng rng = substream(seed, "shuffle", epoch);
    rng.shuffle(idx);
    const size_t chunk = batch_size * 20;
    for (size_t lo = 0; lo < idx.size(); lo += chunk) {
        size_t hi = std::min(idx.size(), lo + chunk);
        std::stable_sort(idx.begin() + lo, idx.begin() + hi,
                         [&](size_t a, size_t b) { return lengths[a] < lengths[b]; });
    }
    std::vector<std::vector<size_t>> batches;
    for (size_t lo = 0; lo < idx.size(); lo += batch_size) {
        size_t hi = std::min(idx.size(), lo + batch_size);
        batches.emplace_back(idx.begin() + lo, idx.begin() + hi);
    }
    return batches;
}

// Loss and summed gradients of one batch. With several threads the batch is
// split into contiguous shards, each worker runs its own graph, and shard
// gradients are reduced in worker order — one deterministic result per
// thread count.
template <typename Real>
double batch_gradients(const ModelParams<Real>& params, const std::vector<CombinationExample>& batch,
                       size_t threads, std::vector<Tensor<Real>>& grads_out) {
    if (batch.empty()) throw InputError("gradient step over an empty batch");
    threads = std::max<size_t>(1, std::min(threads, batch.size()));
    std::vector<std::vector<Tensor<Real>>> shard_grads(threads);
    std::vector<double> shard_loss(threads, 0.0);
    detail::run_sharded(batch.size(), threads, [&](size_t s, size_t lo, size_t hi) {
        if (lo == hi) return;
        Tape<Real> tape;
        BoundModel<Real> bound = bind_model(tape, params, true);
        std::vector<CombinationExample> shard(batch.begin() + lo, batch.begin() + hi);
        VarId loss = batch_loss(tape, bound, shard);
        shard_loss[s] = double(tape.value(loss)[0]);
        if (!std::isfinite(shard_loss[s])) return;  // caller reports; no backward pass
        tape.backward(loss);
        shard_grads[s] = collect_grads(tape, bound);
    });
    double total = 0;
    grads_out.clear();
    for (size_t s = 0; s < threads; ++s) {
        total += shard_loss[s];
        if (shard_grads[s].empty()) continue;
        if (grads_out.empty()) {
            grads_out = std::move(shard_grads[s]);
        } else {
            for (size_t p = 0; p < grads_out.size(); ++p) {
                Tensor<Real>& acc = grads_out[p];
                const Tensor<Real>& g = shard_grads[s][p];
                for (size_t i = 0; i < acc.numel(); ++i) acc[i] += g[i];
            }
        }
    }
    return total;
}

// Mini-batch Adadelta with per-epoch dev BLEU model selection and patience.
// The shuffle stream is derived from cfg.seed and the epoch number, so a
// (params, corpus, config) triple fixes the whole run.
template <typename Real>
TrainResult<Real> train(ModelParams<Real> params, const std::vector<CombinationExample>& train_set,
                        const std::vector<CombinationExample>& dev_set, const TrainOptions& opt = {}) {
    const ModelConfig& cfg = params.cfg;
    if (train_set.empty()) throw DataError("training corpus is empty");

    // fail fast on malformed data instead of mid-epoch
    std::vector<size_t> lengths;
    size_t target_tokens = 0;
    for (const CombinationExample& ex : train_set) {
        if (ex.systems.size() != cfg.num_systems) {
            throw DataError("training example carries " + std::to_string(ex.systems.size()) +
                            " system outputs, configuration expects " + std::to_string(cfg.num_systems));
        }
        lengths.push_back(reference_length(ex.reference));
        target_tokens += lengths.back() + 1;
    }

    ParamRegistry<Real> reg = params.registry();
    AdadeltaState<Real> state = AdadeltaState<Real>::for_registry(reg);
    DecodeConfig dcfg;
    dcfg.beam = cfg.beam;
    dcfg.length_norm = cfg.length_norm;

    TrainResult<Real> result;
    size_t bad_evals = 0;
    for (size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        auto batches = epoch_batches(lengths, cfg.batch_size, cfg.seed, epoch);
        double total = 0;
        for (size_t b = 0; b < batches.size(); ++b) {
            std::vector<CombinationExample> batch;
            for (size_t i : batches[b]) batch.push_back(train_set[i]);
            std::vector<Tensor<Real>> grads;
            double loss = batch_gradients(params, batch, opt.threads, grads);
            if (!std::isfinite(loss)) {
                throw TrainingError("loss is not finite at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(b + 1));
            }
            for (size_t p = 0; p < grads.size(); ++p) {
                for (size_t i = 0; i < grads[p].numel(); ++i) {
                    if (!std::isfinite(double(grads[p][i]))) {
                        throw TrainingError("gradient of " + reg[p].name + " is not finite at epoch " +
                                            std::to_string(epoch) + ", batch " + std::to_string(b + 1));
                    }
                }
            }
            adadelta_update(reg, grads, state);
            total += loss;
        }

        EpochLog log;
        log.epoch = epoch;
        log.total_loss = total;
        log.loss = total / double(target_tokens);
        if (!dev_set.empty()) {
            log.dev_bleu = decode_bleu(params, dev_set, dcfg, opt.threads);
            log.improved = log.dev_bleu > result.best_bleu;
            if (log.improved) {
                result.best = params;
                result.best_epoch = epoch;
                result.best_bleu = log.dev_bleu;
                bad_evals = 0;
            } else if (++bad_evals >= cfg.patience) {
                result.history.push_back(log);
                if (opt.on_epoch) opt.on_epoch(log);
                result.early_stopped = true;
                break;
            }
        }
        result.history.push_back(log);
        if (opt.on_epoch) opt.on_epoch(log);
    }

    result.last = params;
    if (dev_set.empty() || result.best_epoch == 0) {
        result.best = std::move(params);
        result.best_epoch = result.history.empty() ? 0 : result.history.back().epoch;
    }
    return result;
}

}  // namespace nsc
