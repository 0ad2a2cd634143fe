#pragma once

#include "kgdl/backprop.hpp"
#include "kgdl/checkpoint.hpp"
#include "kgdl/common.hpp"
#include "kgdl/config.hpp"
#include "kgdl/cooccur.hpp"
#include "kgdl/corpus.hpp"
#include "kgdl/embedding.hpp"
#include "kgdl/jointembed.hpp"
#include "kgdl/kg.hpp"
#include "kgdl/kvl.hpp"
#include "kgdl/lstm.hpp"
#include "kgdl/metrics.hpp"
#include "kgdl/model.hpp"
#include "kgdl/pipeline.hpp"
#include "kgdl/text.hpp"
#include "kgdl/train.hpp"
