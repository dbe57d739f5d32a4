#pragma once

#include "gnn_esr/autodiff.hpp"
#include "gnn_esr/embedding.hpp"
#include "gnn_esr/graph.hpp"
#include "gnn_esr/model.hpp"
#include "gnn_esr/optim.hpp"
#include "gnn_esr/pooling.hpp"
#include "gnn_esr/random.hpp"
#include "gnn_esr/synth.hpp"
#include "gnn_esr/train.hpp"
#include "gnn_esr/tu_format.hpp"
#include "gnn_esr/types.hpp"
