#pragma once

#include "reifenberg/beta.hpp"
#include "reifenberg/cloud.hpp"
#include "reifenberg/core.hpp"
#include "reifenberg/extend.hpp"
#include "reifenberg/flow.hpp"
#include "reifenberg/geom.hpp"
#include "reifenberg/grid.hpp"
#include "reifenberg/io.hpp"
#include "reifenberg/nets.hpp"
#include "reifenberg/profile.hpp"
#include "reifenberg/sets.hpp"
#include "reifenberg/unity.hpp"
