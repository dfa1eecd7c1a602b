#pragma once

#include "maskmend/components.hpp"
#include "maskmend/config.hpp"
#include "maskmend/corpus.hpp"
#include "maskmend/ensemble.hpp"
#include "maskmend/epoch_detector.hpp"
#include "maskmend/error.hpp"
#include "maskmend/grid.hpp"
#include "maskmend/io.hpp"
#include "maskmend/learner.hpp"
#include "maskmend/metrics.hpp"
#include "maskmend/noise_synth.hpp"
#include "maskmend/pipeline.hpp"
#include "maskmend/relabel.hpp"
#include "maskmend/uncertainty.hpp"
