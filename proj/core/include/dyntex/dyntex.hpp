#pragma once

#include "dyntex/container.hpp"
#include "dyntex/error.hpp"
#include "dyntex/gram.hpp"
#include "dyntex/layers.hpp"
#include "dyntex/lbfgs.hpp"
#include "dyntex/loss.hpp"
#include "dyntex/network.hpp"
#include "dyntex/synthesis.hpp"
#include "dyntex/tensor.hpp"
#include "dyntex/video_io.hpp"
