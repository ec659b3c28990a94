#pragma once

#include "nmfsem/errors.hpp"
#include "nmfsem/matrix.hpp"
#include "nmfsem/model.hpp"
#include "nmfsem/metrics.hpp"
#include "nmfsem/parallel.hpp"
#include "nmfsem/estimation.hpp"
#include "nmfsem/bootstrap.hpp"
#include "nmfsem/selection.hpp"
#include "nmfsem/simulation.hpp"
#include "nmfsem/io.hpp"
#include "nmfsem/artifact.hpp"
#include "nmfsem/diagram.hpp"
