// Umbrella header.

#pragma once

#include "egopair/builder.hpp"
#include "egopair/corpus.hpp"
#include "egopair/errors.hpp"
#include "egopair/evalharness.hpp"
#include "egopair/modelgw.hpp"
#include "egopair/planner.hpp"
#include "egopair/promptkit.hpp"
#include "egopair/records.hpp"
#include "egopair/sampling.hpp"
#include "egopair/types.hpp"
