#pragma once

#include "trust_pomdp/model.hpp"
#include "trust_pomdp/rng.hpp"
#include "trust_pomdp/iohmm.hpp"
#include "trust_pomdp/solver.hpp"
#include "trust_pomdp/simulant.hpp"
#include "trust_pomdp/eval.hpp"
#include "trust_pomdp/io.hpp"
