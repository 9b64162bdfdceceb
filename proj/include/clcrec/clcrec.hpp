#pragma once

#include "clcrec/config.hpp"
#include "clcrec/corpus.hpp"
#include "clcrec/errors.hpp"
#include "clcrec/eval.hpp"
#include "clcrec/matrix.hpp"
#include "clcrec/model.hpp"
#include "clcrec/objective.hpp"
#include "clcrec/optim.hpp"
#include "clcrec/rng.hpp"
