#pragma once

#include "koopmankit/errors.hpp"
#include "koopmankit/numerics.hpp"
#include "koopmankit/polynomial.hpp"
#include "koopmankit/dynamics.hpp"
#include "koopmankit/lifting.hpp"
#include "koopmankit/identification.hpp"
#include "koopmankit/spectral.hpp"
#include "koopmankit/control.hpp"
#include "koopmankit/io.hpp"
