#pragma once

#include "ebomlc/error.hpp"
#include "ebomlc/tensor.hpp"
#include "ebomlc/param_set.hpp"
#include "ebomlc/autodiff.hpp"
#include "ebomlc/gradcheck.hpp"
#include "ebomlc/rng.hpp"
#include "ebomlc/models.hpp"
#include "ebomlc/data.hpp"
#include "ebomlc/objectives.hpp"
#include "ebomlc/barrier.hpp"
#include "ebomlc/optim.hpp"
#include "ebomlc/algorithms.hpp"
#include "ebomlc/toy.hpp"
#include "ebomlc/config.hpp"
#include "ebomlc/report.hpp"
#include "ebomlc/experiment.hpp"
#include "ebomlc/probes.hpp"
