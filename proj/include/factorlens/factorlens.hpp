#pragma once

#include "factorlens/decompose.hpp"
#include "factorlens/embed.hpp"
#include "factorlens/error.hpp"
#include "factorlens/extract.hpp"
#include "factorlens/factor_grid.hpp"
#include "factorlens/feature_set.hpp"
#include "factorlens/fset_io.hpp"
#include "factorlens/image.hpp"
#include "factorlens/linalg.hpp"
#include "factorlens/parallel.hpp"
#include "factorlens/png.hpp"
#include "factorlens/retrieve.hpp"
#include "factorlens/stimuli.hpp"
#include "factorlens/summation.hpp"

#define FACTORLENS_VERSION "0.1.0"
