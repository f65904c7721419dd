#pragma once

// Umbrella header for the whole toolkit.

#include "eot/backbone.hpp"
#include "eot/common.hpp"
#include "eot/component_checks.hpp"
#include "eot/config.hpp"
#include "eot/data.hpp"
#include "eot/encoding.hpp"
#include "eot/engine.hpp"
#include "eot/eot_weights.hpp"
#include "eot/gradcheck.hpp"
#include "eot/graph.hpp"
#include "eot/head.hpp"
#include "eot/image.hpp"
#include "eot/layers.hpp"
#include "eot/model.hpp"
#include "eot/module.hpp"
#include "eot/patches.hpp"
#include "eot/random.hpp"
#include "eot/serialize.hpp"
#include "eot/tensor.hpp"
