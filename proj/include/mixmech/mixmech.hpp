#ifndef MIXMECH_MIXMECH_HPP
#define MIXMECH_MIXMECH_HPP

#include "mixmech/discretize.hpp"
#include "mixmech/divergences.hpp"
#include "mixmech/experiments.hpp"
#include "mixmech/gmm.hpp"
#include "mixmech/langevin.hpp"
#include "mixmech/measure.hpp"
#include "mixmech/npmle.hpp"
#include "mixmech/parallel.hpp"
#include "mixmech/polymer.hpp"
#include "mixmech/quadrature.hpp"
#include "mixmech/rng.hpp"
#include "mixmech/stats.hpp"
#include "mixmech/types.hpp"

#endif
