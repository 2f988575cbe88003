#include "verinf/detcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace verinf::detcore {

// ---- registry ----

const ArchRegistry& ArchRegistry::defaults() {
    static const ArchRegistry reg = [] {
        ArchRegistry r;
        r.add({"archA", ReductionOrder::canonical_tree, FmaEmulation::fused});
        r.add({"archB", ReductionOrder::sequential, FmaEmulation::split});
        return r;
    }();
    return reg;
}

void ArchRegistry::add(ArchProfile profile) {
    profiles_[profile.name] = std::move(profile);
}

const ArchProfile* ArchRegistry::find(std::string_view name) const {
    auto it = profiles_.find(name);
    return it == profiles_.end() ? nullptr : &it->second;
}

std::vector<std::string> ArchRegistry::names() const {
    std::vector<std::string> out;
    out.reserve(profiles_.size());
    for (const auto& [name, _] : profiles_) out.push_back(name);
    return out;
}

// ---- decode policy ----

DecodePolicy DecodePolicy::greedy(uint32_t max_tokens) {
    return DecodePolicy{DecodeKind::greedy, std::nullopt, std::nullopt, max_tokens};
}

DecodePolicy DecodePolicy::top_k(uint32_t k, uint32_t max_tokens) {
    return DecodePolicy{DecodeKind::top_k, k, std::nullopt, max_tokens};
}

DecodePolicy DecodePolicy::nucleus(float p, uint32_t max_tokens) {
    return DecodePolicy{DecodeKind::nucleus, std::nullopt, p, max_tokens};
}

std::string DecodePolicy::validate() const {
    switch (kind) {
        case DecodeKind::greedy:
            if (k || p) return "greedy policy must not carry k or p";
            return "";
        case DecodeKind::top_k:
            if (!k) return "top_k policy requires k";
            if (*k == 0) return "top_k k must be positive";
            if (p) return "top_k policy must not carry p";
            return "";
        case DecodeKind::nucleus:
            if (!p) return "nucleus policy requires p";
            if (!(*p > 0.0f) || *p > 1.0f) return "nucleus p must be in (0,1]";
            if (k) return "nucleus policy must not carry k";
            return "";
    }
    return "unknown decode kind";
}

// ---- canonical output encoding ----

Bytes encode_canonical_output(const std::vector<uint32_t>& tokens,
                              const std::vector<std::vector<float>>& logits_trace) {
    Bytes out;
    put_le32(out, uint32_t(tokens.size()));
    for (uint32_t t : tokens) put_le32(out, t);
    put_le32(out, uint32_t(logits_trace.size()));
    for (const auto& step : logits_trace) {
        put_le32(out, uint32_t(step.size()));
        for (float v : step) put_le32(out, f32_bits(v));
    }
    return out;
}

std::optional<InferenceOutput> decode_canonical_output(std::span<const uint8_t> bytes) {
    size_t pos = 0;
    auto need = [&](size_t n) { return pos + n <= bytes.size(); };
    auto take_u32 = [&]() -> std::optional<uint32_t> {
        if (!need(4)) return std::nullopt;
        uint32_t v = load_le32(bytes.data() + pos);
        pos += 4;
        return v;
    };

    InferenceOutput out;
    auto count = take_u32();
    if (!count) return std::nullopt;
    out.tokens.reserve(*count);
    for (uint32_t i = 0; i < *count; ++i) {
        auto t = take_u32();
        if (!t) return std::nullopt;
        out.tokens.push_back(*t);
    }
    auto steps = take_u32();
    if (!steps) return std::nullopt;
    out.logits_trace.reserve(*steps);
    for (uint32_t s = 0; s < *steps; ++s) {
        auto vocab = take_u32();
        if (!vocab) return std::nullopt;
        std::vector<float> row;
        row.reserve(*vocab);
        for (uint32_t i = 0; i < *vocab; ++i) {
            auto b = take_u32();
            if (!b) return std::nullopt;
            row.push_back(f32_from_bits(*b));
        }
        out.logits_trace.push_back(std::move(row));
    }
    if (pos != bytes.size()) return std::nullopt;
    out.canonical_bytes.assign(bytes.begin(), bytes.end());
    return out;
}

// ---- reductions ----

static void check_finite(std::span<const float> values, const char* what) {
    for (float v : values) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument(std::string(what) + ": non-finite value");
        }
    }
}

static float tree_reduce(std::span<const float> values) {
    if (values.empty()) return 0.0f;
    std::vector<float> level(values.begin(), values.end());
    size_t n = level.size();
    while (n > 1) {
        size_t half = n / 2;
        for (size_t i = 0; i < half; ++i) level[i] = level[2 * i] + level[2 * i + 1];
        if (n % 2 != 0) {
            level[half] = level[n - 1];  // odd tail promoted unchanged
            n = half + 1;
        } else {
            n = half;
        }
    }
    return level[0];
}

static float sequential_reduce(std::span<const float> values) {
    if (values.empty()) return 0.0f;
    float acc = values[0];
    for (size_t i = 1; i < values.size(); ++i) acc += values[i];
    return acc;
}

float canonical_reduce(std::span<const float> values, const ArchProfile& profile) {
    check_finite(values, "canonical_reduce");
    return profile.reduction_order == ReductionOrder::canonical_tree ? tree_reduce(values)
                                                                     : sequential_reduce(values);
}

std::vector<float> det_matvec(std::span<const float> matrix, size_t rows, size_t cols,
                              std::span<const float> vec, const ArchProfile& profile) {
    if (matrix.size() != rows * cols || vec.size() != cols) {
        throw std::invalid_argument("det_matvec: dimension mismatch");
    }
    std::vector<float> out(rows);
    std::vector<float> products(cols);
    for (size_t r = 0; r < rows; ++r) {
        const float* row = matrix.data() + r * cols;
        if (profile.reduction_order == ReductionOrder::sequential &&
            profile.fma_emulation == FmaEmulation::fused && cols > 0) {
            float acc = row[0] * vec[0];
            for (size_t c = 1; c < cols; ++c) acc = std::fmaf(row[c], vec[c], acc);
            out[r] = acc;
        } else {
            for (size_t c = 0; c < cols; ++c) products[c] = row[c] * vec[c];
            out[r] = canonical_reduce(products, profile);
        }
    }
    return out;
}

std::vector<float> det_softmax(std::span<const float> logits) {
    if (logits.empty()) throw std::invalid_argument("det_softmax: empty input");
    check_finite(logits, "det_softmax");
    float maxv = logits[0];
    for (float v : logits) maxv = std::max(maxv, v);
    std::vector<float> exps(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) exps[i] = std::exp(logits[i] - maxv);
    float sum = tree_reduce(exps);
    std::vector<float> out(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) out[i] = exps[i] / sum;
    return out;
}

// ---- decoding ----

static uint32_t argmax_smallest_index(std::span<const float> probs) {
    uint32_t best = 0;
    for (uint32_t i = 1; i < probs.size(); ++i) {
        if (probs[i] > probs[best]) best = i;
    }
    return best;
}

uint32_t decode_with_draw(std::span<const float> probs, const DecodePolicy& policy, float r) {
    if (probs.empty()) throw std::invalid_argument("decode: empty distribution");
    check_finite(probs, "decode");
    for (float v : probs) {
        if (v < 0.0f) throw std::invalid_argument("decode: negative probability");
    }
    if (auto err = policy.validate(); !err.empty()) throw std::invalid_argument("decode: " + err);

    if (policy.kind == DecodeKind::greedy) return argmax_smallest_index(probs);

    // Candidates in (probability desc, index asc) order.
    std::vector<uint32_t> order(probs.size());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        if (probs[a] != probs[b]) return probs[a] > probs[b];
        return a < b;
    });

    size_t kept = order.size();
    if (policy.kind == DecodeKind::top_k) {
        kept = std::min<size_t>(*policy.k, order.size());
    } else {  // nucleus: smallest prefix with cumulative mass >= p
        float cum = 0.0f;
        kept = order.size();
        for (size_t i = 0; i < order.size(); ++i) {
            cum += probs[order[i]];
            if (cum >= *policy.p) {
                kept = i + 1;
                break;
            }
        }
    }

    std::vector<float> kept_probs(kept);
    for (size_t i = 0; i < kept; ++i) kept_probs[i] = probs[order[i]];
    float mass = tree_reduce(kept_probs);
    if (!(mass > 0.0f)) throw std::invalid_argument("decode: zero probability mass after truncation");

    float cum = 0.0f;
    for (size_t i = 0; i < kept; ++i) {
        cum += kept_probs[i] / mass;
        if (cum >= r) return order[i];
    }
    return order[kept - 1];  // rounding left cum slightly below r
}

DecodeStep decode_step(std::span<const float> probs, const DecodePolicy& policy, PrngState prng) {
    // One step per token, drawn before the policy branch: greedy discards the
    // draw, which keeps the stream position independent of the policy mix.
    float r = prng.next_unit_f32();
    uint32_t token = decode_with_draw(probs, policy, r);
    return DecodeStep{token, prng};
}

// ---- toy model ----

static uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Weights are uniform in [-1,1) scaled by 2^e, e in [-3,3]; the exponent
// spread makes accumulation-order rounding differences dense, which is what
// lets distinct profiles diverge on real prompts.
static std::vector<float> gen_weights(PrngState& prng, size_t count) {
    std::vector<float> w(count);
    for (auto& v : w) {
        float u = prng.next_symmetric_f32();
        int e = int(prng.next_below(7)) - 3;
        v = std::ldexp(u, e);
    }
    return w;
}

ToyModel ToyModel::from_model_id(std::string_view model_id) {
    ToyModel m;
    PrngState prng = PrngState::seeded(fnv1a64(model_id));
    m.embed = gen_weights(prng, size_t(kVocab) * kDim);
    m.recur = gen_weights(prng, size_t(kDim) * kDim);
    m.hidden = gen_weights(prng, size_t(kDim) * kDim);
    m.project = gen_weights(prng, size_t(kVocab) * kDim);
    return m;
}

static float softsign(float x) { return x / (1.0f + std::fabs(x)); }

// state <- softsign(recur * state + embed[token])
static void advance_state(const ToyModel& model, std::vector<float>& state, uint32_t token,
                          const ArchProfile& profile) {
    std::vector<float> next =
        det_matvec(model.recur, ToyModel::kDim, ToyModel::kDim, state, profile);
    const float* emb = model.embed.data() + size_t(token) * ToyModel::kDim;
    for (size_t i = 0; i < ToyModel::kDim; ++i) next[i] = softsign(next[i] + emb[i]);
    state = std::move(next);
}

static std::vector<float> step_logits(const ToyModel& model, const std::vector<float>& state,
                                      const ArchProfile& profile) {
    std::vector<float> h = det_matvec(model.hidden, ToyModel::kDim, ToyModel::kDim, state, profile);
    for (auto& v : h) v = softsign(v);
    return det_matvec(model.project, ToyModel::kVocab, ToyModel::kDim, h, profile);
}

namespace {

// Per-tuple decode state for the batch runner; also used by infer() with a
// batch of one so single and batched paths share the exact same code.
struct ActiveRun {
    const ExecutionTuple* exec;
    const ArchProfile* profile;
    ToyModel model;
    std::vector<float> state;
    PrngState prng;
    std::vector<uint32_t> tokens;
    std::vector<std::vector<float>> trace;
    uint32_t remaining;
};

ActiveRun start_run(const ExecutionTuple& exec, const ArchRegistry& registry) {
    const ArchProfile* profile = registry.find(exec.arch);
    if (profile == nullptr) {
        throw std::invalid_argument("infer: unknown arch profile '" + exec.arch + "'");
    }
    if (auto err = exec.decode_policy.validate(); !err.empty()) {
        throw std::invalid_argument("infer: " + err);
    }
    for (uint32_t t : exec.prompt) {
        if (t >= ToyModel::kVocab) throw std::invalid_argument("infer: prompt token out of vocabulary");
    }

    ActiveRun run{&exec,
                  profile,
                  ToyModel::from_model_id(exec.model_id),
                  std::vector<float>(ToyModel::kDim, 0.0f),
                  PrngState::seeded(exec.seed),
                  {},
                  {},
                  exec.decode_policy.max_tokens};
    for (uint32_t t : exec.prompt) advance_state(run.model, run.state, t, *profile);
    return run;
}

// One decode step; returns false once the run is exhausted.
bool step_run(ActiveRun& run) {
    if (run.remaining == 0) return false;
    std::vector<float> logits = step_logits(run.model, run.state, *run.profile);
    std::vector<float> probs = det_softmax(logits);
    DecodeStep step = decode_step(probs, run.exec->decode_policy, run.prng);
    run.prng = step.prng;
    run.tokens.push_back(step.token);
    run.trace.push_back(std::move(logits));
    advance_state(run.model, run.state, step.token, *run.profile);
    --run.remaining;
    return run.remaining > 0;
}

InferenceOutput finish_run(ActiveRun& run) {
    InferenceOutput out;
    out.tokens = std::move(run.tokens);
    out.logits_trace = std::move(run.trace);
    out.canonical_bytes = encode_canonical_output(out.tokens, out.logits_trace);
    return out;
}

}  // namespace

InferenceOutput infer(const ExecutionTuple& exec, const ArchRegistry& registry) {
    ActiveRun run = start_run(exec, registry);
    while (step_run(run)) {
    }
    return finish_run(run);
}

std::vector<InferenceOutput> infer_batch(std::span<const ExecutionTuple> execs, size_t batch_size,
                                         const ArchRegistry& registry) {
    if (batch_size == 0) throw std::invalid_argument("infer_batch: batch_size must be positive");
    std::vector<InferenceOutput> results(execs.size());
    for (size_t base = 0; base < execs.size(); base += batch_size) {
        size_t count = std::min(batch_size, execs.size() - base);
        std::vector<ActiveRun> runs;
        runs.reserve(count);
        for (size_t i = 0; i < count; ++i) runs.push_back(start_run(execs[base + i], registry));
        // Round-robin one token at a time across the batch.
        bool any = true;
        while (any) {
            any = false;
            for (auto& run : runs) {
                if (run.remaining > 0) {
                    step_run(run);
                    any = any || run.remaining > 0;
                }
            }
        }
        for (size_t i = 0; i < count; ++i) results[base + i] = finish_run(runs[i]);
    }
    return results;
}

}  // namespace verinf::detcore
