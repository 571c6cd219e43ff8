#pragma once

/// Umbrella header: the whole simulator in one include.

#include "tradertalk/analysis.hpp"
#include "tradertalk/core.hpp"
#include "tradertalk/gateway.hpp"
#include "tradertalk/http_backend.hpp"
#include "tradertalk/metrics.hpp"
#include "tradertalk/orchestrator.hpp"
#include "tradertalk/reporting.hpp"
#include "tradertalk/scenario.hpp"
#include "tradertalk/version.hpp"
