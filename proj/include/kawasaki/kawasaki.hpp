#ifndef KAWASAKI_KAWASAKI_HPP
#define KAWASAKI_KAWASAKI_HPP

#include "kawasaki/params.hpp"
#include "kawasaki/config.hpp"
#include "kawasaki/rng.hpp"
#include "kawasaki/io.hpp"
#include "kawasaki/lattice.hpp"
#include "kawasaki/kmc.hpp"
#include "kawasaki/geometry.hpp"
#include "kawasaki/gibbs.hpp"
#include "kawasaki/toymodel.hpp"
#include "kawasaki/harness.hpp"

#endif
