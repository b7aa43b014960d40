#pragma once

#include "aoa/tensor.hpp"
#include "aoa/util.hpp"
#include "aoa/autodiff.hpp"
#include "aoa/nn.hpp"
#include "aoa/gradcheck.hpp"
#include "aoa/checkpoint.hpp"
#include "aoa/tokenizer.hpp"
#include "aoa/corpus.hpp"
#include "aoa/encoder.hpp"
#include "aoa/scores.hpp"
#include "aoa/aoa_reader.hpp"
#include "aoa/sent_reader.hpp"
#include "aoa/trainer.hpp"
#include "aoa/ensemble.hpp"
#include "aoa/evalkit.hpp"
