#pragma once

#include "asap/checkpoint.hpp"
#include "asap/config.hpp"
#include "asap/data.hpp"
#include "asap/error.hpp"
#include "asap/estimator.hpp"
#include "asap/harness.hpp"
#include "asap/linalg.hpp"
#include "asap/methods.hpp"
#include "asap/model.hpp"
#include "asap/random.hpp"
#include "asap/scheduler.hpp"
#include "asap/shift.hpp"
