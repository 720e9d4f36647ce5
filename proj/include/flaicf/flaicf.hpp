#pragma once

#include "flaicf/attention.hpp"
#include "flaicf/checkpoint.hpp"
#include "flaicf/config.hpp"
#include "flaicf/data.hpp"
#include "flaicf/error.hpp"
#include "flaicf/eval.hpp"
#include "flaicf/gradcheck.hpp"
#include "flaicf/gradients.hpp"
#include "flaicf/parameters.hpp"
#include "flaicf/pipeline.hpp"
#include "flaicf/predictors.hpp"
#include "flaicf/run_config.hpp"
#include "flaicf/tensor.hpp"
#include "flaicf/training.hpp"
