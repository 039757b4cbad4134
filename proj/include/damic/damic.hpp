#pragma once

#include "damic/activations.hpp"
#include "damic/config.hpp"
#include "damic/core.hpp"
#include "damic/data.hpp"
#include "damic/gradcheck.hpp"
#include "damic/kmeans.hpp"
#include "damic/layers.hpp"
#include "damic/losses.hpp"
#include "damic/metrics.hpp"
#include "damic/model.hpp"
#include "damic/optimizer.hpp"
#include "damic/serialize.hpp"
#include "damic/train.hpp"
