#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "verinf/bytes.hpp"
#include "verinf/prng.hpp"

// Bit-deterministic toy inference engine. Every operation here is a pure
// function of its arguments; re-running any of them with equal inputs yields
// equal output bits. Architecture profiles emulate the cross-architecture
// divergence of real accelerators by switching the floating-point
// accumulation order.

namespace verinf::detcore {

enum class ReductionOrder : uint8_t { canonical_tree = 0, sequential = 1 };
enum class FmaEmulation : uint8_t { fused = 0, split = 1 };

struct ArchProfile {
    std::string name;
    ReductionOrder reduction_order = ReductionOrder::canonical_tree;
    FmaEmulation fma_emulation = FmaEmulation::split;

    friend bool operator==(const ArchProfile&, const ArchProfile&) = default;
};

// Approved architecture profiles. Inference rejects names that are not
// registered; the default set models two GPU generations with different
// accumulation behavior.
class ArchRegistry {
public:
    ArchRegistry() = default;

    static const ArchRegistry& defaults();

    void add(ArchProfile profile);
    const ArchProfile* find(std::string_view name) const;
    bool contains(std::string_view name) const { return find(name) != nullptr; }
    std::vector<std::string> names() const;

private:
    std::map<std::string, ArchProfile, std::less<>> profiles_;
};

enum class DecodeKind : uint8_t { greedy = 0, top_k = 1, nucleus = 2 };

struct DecodePolicy {
    DecodeKind kind = DecodeKind::greedy;
    std::optional<uint32_t> k;  // top_k only, >= 1
    std::optional<float> p;     // nucleus only, in (0,1]
    uint32_t max_tokens = 0;    // 0 is a permitted degenerate length

    static DecodePolicy greedy(uint32_t max_tokens);
    static DecodePolicy top_k(uint32_t k, uint32_t max_tokens);
    static DecodePolicy nucleus(float p, uint32_t max_tokens);

    // Empty on success, otherwise a diagnostic. Parameters must be present
    // iff the kind requires them.
    std::string validate() const;

    friend bool operator==(const DecodePolicy&, const DecodePolicy&) = default;
};

struct ExecutionTuple {
    std::string model_id;
    Hash32 container_digest{};
    std::string arch;  // ArchProfile name
    std::string driver_tag;
    DecodePolicy decode_policy;
    uint64_t seed = 0;
    std::vector<uint32_t> prompt;

    friend bool operator==(const ExecutionTuple&, const ExecutionTuple&) = default;
};

struct InferenceOutput {
    std::vector<uint32_t> tokens;
    std::vector<std::vector<float>> logits_trace;  // one vector per decode step
    Bytes canonical_bytes;

    friend bool operator==(const InferenceOutput&, const InferenceOutput&) = default;
};

// Normative byte layout of an inference output (little-endian):
//   [u32 token_count][token u32]... [u32 step_count][u32 vocab_size, logit f32 raw bits ...] per step
Bytes encode_canonical_output(const std::vector<uint32_t>& tokens,
                              const std::vector<std::vector<float>>& logits_trace);
std::optional<InferenceOutput> decode_canonical_output(std::span<const uint8_t> bytes);

// ---- deterministic arithmetic ----

// Sum of 32-bit floats under the profile's accumulation order.
//   canonical_tree: pairwise level-by-level fold (odd tail promoted unchanged)
//   sequential:     strict left-to-right accumulation
// Empty input sums to +0.0f; a singleton is returned bit-exactly.
// Throws std::invalid_argument on non-finite input.
float canonical_reduce(std::span<const float> values, const ArchProfile& profile);

// matrix is row-major m x k. Each output element is the dot product of a row
// with the vector. Under canonical_tree the per-element products are rounded
// individually and tree-reduced; under sequential the accumulation is
// left-to-right, either as a fused multiply-add chain (fused) or with the
// product rounded before each add (split). fma_emulation therefore has no
// effect under canonical_tree.
std::vector<float> det_matvec(std::span<const float> matrix, size_t rows, size_t cols,
                              std::span<const float> vec, const ArchProfile& profile);

// Max-subtracted exponentials normalized by a canonical_tree sum. Outputs lie
// in [0,1] and sum to 1 within a few ulps. Throws on empty or non-finite
// input.
std::vector<float> det_softmax(std::span<const float> logits);

// One decode step. Advances the generator exactly once regardless of policy
// (the draw is discarded under greedy), so batch composition cannot shift the
// stream. Greedy picks the argmax with smallest-index tie-break. Stochastic
// policies sort candidates by (probability desc, index asc), truncate,
// renormalize with a canonical_tree sum, then select the first candidate in
// sorted order whose inclusive cumulative probability reaches the draw.
struct DecodeStep {
    uint32_t token;
    PrngState prng;
};
DecodeStep decode_step(std::span<const float> probs, const DecodePolicy& policy, PrngState prng);

// The selection rule of decode_step with the uniform draw supplied directly;
// exposed so the cumulative rule can be tested against hand-worked values.
uint32_t decode_with_draw(std::span<const float> probs, const DecodePolicy& policy, float r);

// ---- toy model ----

// A fixed-shape 2-layer recurrent token predictor whose weights are generated
// from model_id via the fixed PRNG. Shapes are compile-time constants so the
// canonical output layout is stable across models.
struct ToyModel {
    static constexpr uint32_t kVocab = 32;
    static constexpr uint32_t kDim = 16;

    std::vector<float> embed;    // kVocab x kDim
    std::vector<float> recur;    // kDim x kDim
    std::vector<float> hidden;   // kDim x kDim
    std::vector<float> project;  // kVocab x kDim

    static ToyModel from_model_id(std::string_view model_id);
};

// Autoregressive inference: consume the prompt into the recurrent state, then
// emit decode_policy.max_tokens tokens. Pure function of the tuple; repeated
// calls yield identical canonical_bytes. Throws std::invalid_argument for an
// unknown arch profile, malformed policy, or out-of-vocabulary prompt token.
InferenceOutput infer(const ExecutionTuple& exec,
                      const ArchRegistry& registry = ArchRegistry::defaults());

// Evaluates many tuples with decode steps interleaved round-robin inside
// batches of batch_size. Per-tuple results are byte-identical to individual
// infer() calls; the batch runner exists so that invariance is demonstrated,
// not assumed.
std::vector<InferenceOutput> infer_batch(std::span<const ExecutionTuple> execs, size_t batch_size,
                                         const ArchRegistry& registry = ArchRegistry::defaults());

}  // namespace verinf::detcore
