#pragma once

#include "mier/adam.hpp"
#include "mier/data.hpp"
#include "mier/distributions.hpp"
#include "mier/error.hpp"
#include "mier/exact_oracle.hpp"
#include "mier/gradcheck.hpp"
#include "mier/io.hpp"
#include "mier/model.hpp"
#include "mier/objectives.hpp"
#include "mier/rng.hpp"
#include "mier/run.hpp"
#include "mier/tensor.hpp"
#include "mier/training.hpp"
#include "mier/verify.hpp"
