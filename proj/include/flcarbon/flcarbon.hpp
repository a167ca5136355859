#pragma once

#include "flcarbon/compression.hpp"
#include "flcarbon/config.hpp"
#include "flcarbon/csv.hpp"
#include "flcarbon/energy.hpp"
#include "flcarbon/errors.hpp"
#include "flcarbon/harness.hpp"
#include "flcarbon/model.hpp"
#include "flcarbon/protocol_cfa.hpp"
#include "flcarbon/protocol_fa.hpp"
#include "flcarbon/report.hpp"
#include "flcarbon/rng.hpp"
