#pragma once

#include "slopeflow/error.hpp"
#include "slopeflow/func_model.hpp"
#include "slopeflow/subdiff.hpp"
#include "slopeflow/geometry.hpp"
#include "slopeflow/descent.hpp"
#include "slopeflow/report.hpp"
#include "slopeflow/flow.hpp"
#include "slopeflow/verify.hpp"
