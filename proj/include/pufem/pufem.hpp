#pragma once

#include "assembly.hpp"
#include "common.hpp"
#include "experiments.hpp"
#include "fields.hpp"
#include "grid.hpp"
#include "mesh.hpp"
#include "mollifier.hpp"
#include "partition.hpp"
#include "quadrature.hpp"
#include "solver.hpp"
#include "space.hpp"
#include "sparse.hpp"
#include "version.hpp"
