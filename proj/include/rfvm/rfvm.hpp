#pragma once

#include "rfvm/commands.hpp"
#include "rfvm/data.hpp"
#include "rfvm/distributions.hpp"
#include "rfvm/error.hpp"
#include "rfvm/inference.hpp"
#include "rfvm/model.hpp"
#include "rfvm/model_io.hpp"
#include "rfvm/model_state.hpp"
#include "rfvm/predict.hpp"
