#pragma once

#include "dclike/bench.hpp"
#include "dclike/core.hpp"
#include "dclike/io.hpp"
#include "dclike/solver.hpp"
#include "dclike/sparse.hpp"
#include "dclike/tsne.hpp"
