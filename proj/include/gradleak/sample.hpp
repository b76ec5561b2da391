#pragma once

#include <cstddef>

#include "gradleak/tensor.hpp"

namespace gradleak {

/// One labelled image, pixels in [0,1], shape [C,H,W].
struct Sample {
    Tensor image;
    std::size_t label = 0;
};

}  // namespace gradleak
