#pragma once

#define FREQDENO_VERSION "0.1.0"

#include "freqdeno/attention.hpp"
#include "freqdeno/bands.hpp"
#include "freqdeno/denoiser.hpp"
#include "freqdeno/errors.hpp"
#include "freqdeno/harness.hpp"
#include "freqdeno/imageio.hpp"
#include "freqdeno/ops.hpp"
#include "freqdeno/params.hpp"
#include "freqdeno/spectral.hpp"
#include "freqdeno/tape.hpp"
#include "freqdeno/tensor.hpp"
