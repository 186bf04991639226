#ifndef QIMEX_QIMEX_HPP
#define QIMEX_QIMEX_HPP

#include "spectral_core.hpp"
#include "imex_engine.hpp"
#include "richardson_embed.hpp"
#include "schrodingerizer.hpp"
#include "evoltime_bounds.hpp"
#include "pde_frontends.hpp"
#include "complexity_model.hpp"

#endif // QIMEX_QIMEX_HPP
