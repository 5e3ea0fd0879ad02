#pragma once

#include "moat/errors.hpp"
#include "moat/core_graph.hpp"
#include "moat/parallel.hpp"
#include "moat/matrix_io.hpp"
#include "moat/association.hpp"
#include "moat/extraction.hpp"
#include "moat/analysis.hpp"
#include "moat/inference.hpp"
#include "moat/cca.hpp"
#include "moat/simulation.hpp"
