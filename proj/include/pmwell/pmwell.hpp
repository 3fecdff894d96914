#pragma once

#include <pmwell/error.hpp>
#include <pmwell/mesh.hpp>
#include <pmwell/nonlinearity.hpp>
#include <pmwell/operators.hpp>
#include <pmwell/linalg.hpp>
#include <pmwell/variational.hpp>
#include <pmwell/evolve.hpp>
#include <pmwell/config.hpp>
#include <pmwell/harness.hpp>
