#pragma once

#include "prunekit/depgraph.hpp"
#include "prunekit/dims.hpp"
#include "prunekit/dot.hpp"
#include "prunekit/engine.hpp"
#include "prunekit/error.hpp"
#include "prunekit/footprint.hpp"
#include "prunekit/gates.hpp"
#include "prunekit/hash.hpp"
#include "prunekit/model.hpp"
#include "prunekit/model_io.hpp"
#include "prunekit/parallel.hpp"
#include "prunekit/plan.hpp"
#include "prunekit/pruner.hpp"
#include "prunekit/scheduler.hpp"
#include "prunekit/shapes.hpp"
#include "prunekit/tensor.hpp"
#include "prunekit/tensor_io.hpp"
#include "prunekit/toygen.hpp"
