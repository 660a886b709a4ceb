#pragma once

#include "entclt/numeric.hpp"
#include "entclt/smoothed_core.hpp"
#include "entclt/info_functionals.hpp"
#include "entclt/mixing.hpp"
#include "entclt/processes.hpp"
#include "entclt/experiments.hpp"
