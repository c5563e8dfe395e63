#pragma once

// Single include for the whole library.

#include "ken/adam.hpp"
#include "ken/balanced.hpp"
#include "ken/config.hpp"
#include "ken/dataset.hpp"
#include "ken/emotion.hpp"
#include "ken/errors.hpp"
#include "ken/harness.hpp"
#include "ken/io.hpp"
#include "ken/knowledge.hpp"
#include "ken/metrics.hpp"
#include "ken/model.hpp"
#include "ken/nn.hpp"
#include "ken/ops.hpp"
#include "ken/params.hpp"
#include "ken/rng.hpp"
#include "ken/tape.hpp"
#include "ken/tensor.hpp"
#include "ken/train.hpp"
