#pragma once

#include "prefkit/core.hpp"
#include "prefkit/ingest.hpp"
#include "prefkit/stats.hpp"
#include "prefkit/select.hpp"
#include "prefkit/safety.hpp"
#include "prefkit/decontam.hpp"
#include "prefkit/losses.hpp"
#include "prefkit/trainer.hpp"
#include "prefkit/bench.hpp"
#include "prefkit/pipeline.hpp"
