#pragma once

// Brute-force references for tests and the `check` subcommand. Shares no code with the
// attention kernel: masks, register and softmax are rebuilt here with long double math.

#include "dopobc/matrix.hpp"
#include "dopobc/register_attention.hpp"

namespace dopobc::oracle {

AttentionResult naive_compose_attention(const AttentionInputs& inputs);

// Row softmax over j <= i with -inf future logits.
Matrix vanilla_causal_attention(const Matrix& scores);

// Kernel adapter: vanilla attention of diag(alpha) S, ignoring sigma.
AttentionResult vanilla_kernel(const AttentionInputs& inputs);

}  // namespace dopobc::oracle
