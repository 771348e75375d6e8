#pragma once

/// @file topoevo.hpp
/// Everything in one include.

#include "topoevo/analysis.hpp"
#include "topoevo/constructor.hpp"
#include "topoevo/dataset.hpp"
#include "topoevo/engine.hpp"
#include "topoevo/errors.hpp"
#include "topoevo/gradcheck.hpp"
#include "topoevo/ids.hpp"
#include "topoevo/knowledge.hpp"
#include "topoevo/mutation.hpp"
#include "topoevo/nn.hpp"
#include "topoevo/selection.hpp"
#include "topoevo/topology.hpp"
#include "topoevo/train.hpp"
