#pragma once

#include "error.hpp"
#include "tolerances.hpp"
#include "random.hpp"
#include "linalg.hpp"
#include "base_dynamics.hpp"
#include "cocycle.hpp"
#include "lyapunov.hpp"
#include "domination.hpp"
#include "analysis.hpp"
#include "perturbation.hpp"
#include "accessibility.hpp"
#include "transfer_operator.hpp"
#include "serialize.hpp"
