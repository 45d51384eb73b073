#pragma once

#include "rangescore/adtree.hpp"
#include "rangescore/capec.hpp"
#include "rangescore/catalog.hpp"
#include "rangescore/errors.hpp"
#include "rangescore/io.hpp"
#include "rangescore/matching.hpp"
#include "rangescore/posture.hpp"
#include "rangescore/reports.hpp"
#include "rangescore/scoring.hpp"
#include "rangescore/simharness.hpp"
#include "rangescore/timestamp.hpp"
