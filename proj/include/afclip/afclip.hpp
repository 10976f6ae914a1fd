#pragma once

#include "afclip/adapter.hpp"
#include "afclip/aggregation.hpp"
#include "afclip/backbone.hpp"
#include "afclip/checkpoint.hpp"
#include "afclip/config.hpp"
#include "afclip/dataset.hpp"
#include "afclip/errors.hpp"
#include "afclip/evaluate.hpp"
#include "afclip/image_io.hpp"
#include "afclip/imaging.hpp"
#include "afclip/losses.hpp"
#include "afclip/memory_bank.hpp"
#include "afclip/metrics.hpp"
#include "afclip/model.hpp"
#include "afclip/pipeline.hpp"
#include "afclip/prompts.hpp"
#include "afclip/scoring.hpp"
#include "afclip/synthetic.hpp"
#include "afclip/trainer.hpp"
#include "afclip/types.hpp"
