#pragma once

// Umbrella header for the full dialogue-state-tracking stack.

#include "gem/config.hpp"
#include "gem/core/error.hpp"
#include "gem/core/text.hpp"
#include "gem/dialogue/corpus.hpp"
#include "gem/dialogue/types.hpp"
#include "gem/autodiff/checkpoint.hpp"
#include "gem/autodiff/optimizer.hpp"
#include "gem/autodiff/tape.hpp"
#include "gem/autodiff/tensor.hpp"
#include "gem/gat/graph.hpp"
#include "gem/gat/model.hpp"
#include "gem/gat/train.hpp"
#include "gem/seq/expert.hpp"
#include "gem/router/router.hpp"
#include "gem/retrieval/embedding.hpp"
#include "gem/retrieval/index.hpp"
#include "gem/valuegen/generate.hpp"
#include "gem/valuegen/llm_client.hpp"
#include "gem/valuegen/prompt.hpp"
#include "gem/eval/ablation.hpp"
#include "gem/eval/metrics.hpp"
#include "gem/eval/pipeline.hpp"
