#pragma once

#include "emotrig/reprlab/dump.hpp"
#include "emotrig/reprlab/matrix.hpp"
#include "emotrig/reprlab/pca.hpp"
#include "emotrig/reprlab/projection.hpp"
#include "emotrig/reprlab/separation.hpp"
#include "emotrig/reprlab/tsne.hpp"
