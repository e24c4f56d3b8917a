#pragma once
//
// h2 : umbrella header
//

#include "h2/algebra.hpp"
#include "h2/construction.hpp"
#include "h2/inversion.hpp"
#include "h2/serialize.hpp"

#include "h2/oracles/dense_assemble.hpp"
#include "h2/oracles/registry.hpp"
