#ifndef FREQLENS_FREQLENS_HPP
#define FREQLENS_FREQLENS_HPP

#include "freqlens/aggregate.hpp"
#include "freqlens/dataset.hpp"
#include "freqlens/embedder.hpp"
#include "freqlens/error.hpp"
#include "freqlens/importance.hpp"
#include "freqlens/metrics.hpp"
#include "freqlens/report.hpp"
#include "freqlens/spectral.hpp"
#include "freqlens/synthfix.hpp"

#endif  // FREQLENS_FREQLENS_HPP
