#pragma once

#include "ssp4/cli.hpp"
#include "ssp4/fespace.hpp"
#include "ssp4/mesh.hpp"
#include "ssp4/poly.hpp"
#include "ssp4/schemes.hpp"
#include "ssp4/verify.hpp"
#include "ssp4/vtk.hpp"
#include "ssp4/weakops.hpp"
