#pragma once

#include "svl/survival.hpp"
#include "svl/grouped_time.hpp"
#include "svl/likelihood.hpp"
#include "svl/dataset_io.hpp"
#include "svl/hazard_head.hpp"
#include "svl/tabular_hazard.hpp"
#include "svl/lowrank_net.hpp"
#include "svl/hazard_model.hpp"
#include "svl/trainer.hpp"
#include "svl/gridworld.hpp"
#include "svl/hsvl.hpp"
#include "svl/checkpoint.hpp"
