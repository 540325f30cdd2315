#pragma once

#include "dmaps/csv.hpp"
#include "dmaps/dataset.hpp"
#include "dmaps/ddm.hpp"
#include "dmaps/diffusion.hpp"
#include "dmaps/embedding.hpp"
#include "dmaps/error.hpp"
#include "dmaps/gram_target.hpp"
#include "dmaps/kernel_graph.hpp"
#include "dmaps/metrics.hpp"
#include "dmaps/nystrom.hpp"
#include "dmaps/random.hpp"
#include "dmaps/spectral.hpp"
