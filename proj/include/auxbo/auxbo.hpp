#pragma once

#include "auxbo/numerics/errors.hpp"
#include "auxbo/numerics/tensor.hpp"
#include "auxbo/numerics/rng.hpp"
#include "auxbo/numerics/autodiff.hpp"
#include "auxbo/numerics/ops.hpp"
#include "auxbo/numerics/attention.hpp"
#include "auxbo/numerics/gaussian.hpp"
#include "auxbo/numerics/adamw.hpp"
#include "auxbo/numerics/early_stopping.hpp"

#include "auxbo/tasks/dataset.hpp"
#include "auxbo/tasks/simulator.hpp"
#include "auxbo/tasks/dataset_io.hpp"
#include "auxbo/tasks/generate.hpp"
#include "auxbo/tasks/sampler.hpp"

#include "auxbo/model/types.hpp"
#include "auxbo/model/config.hpp"
#include "auxbo/model/layers.hpp"
#include "auxbo/model/surrogate_model.hpp"
#include "auxbo/model/checkpoint.hpp"

#include "auxbo/gp/kernel.hpp"
#include "auxbo/gp/posterior.hpp"
#include "auxbo/gp/stgp.hpp"
#include "auxbo/gp/dgp.hpp"

#include "auxbo/engine/surrogate.hpp"
#include "auxbo/engine/train.hpp"
#include "auxbo/engine/evaluate.hpp"
#include "auxbo/engine/acquisition.hpp"
#include "auxbo/engine/bayesopt.hpp"
#include "auxbo/engine/aggregate.hpp"

#include "auxbo/cli/run_config.hpp"
#include "auxbo/cli/svg.hpp"
#include "auxbo/cli/tables.hpp"
