#pragma once

#include "sgcam/errors.hpp"
#include "sgcam/gradients.hpp"
#include "sgcam/imageio.hpp"
#include "sgcam/modelio.hpp"
#include "sgcam/network.hpp"
#include "sgcam/random.hpp"
#include "sgcam/saliency.hpp"
#include "sgcam/tensor.hpp"
