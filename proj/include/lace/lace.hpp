#pragma once

#include "lace/classifier.hpp"
#include "lace/csv.hpp"
#include "lace/energy.hpp"
#include "lace/errors.hpp"
#include "lace/eval.hpp"
#include "lace/expr_parser.hpp"
#include "lace/ndmath.hpp"
#include "lace/oracle.hpp"
#include "lace/parallel.hpp"
#include "lace/rng.hpp"
#include "lace/samplers.hpp"
#include "lace/worldgen.hpp"
