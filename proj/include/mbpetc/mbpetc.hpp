#pragma once

#include "mbpetc/core.hpp"
#include "mbpetc/dynamics.hpp"
#include "mbpetc/integrate.hpp"
#include "mbpetc/keyvalue.hpp"
#include "mbpetc/certificates.hpp"
#include "mbpetc/prediction.hpp"
#include "mbpetc/trigger.hpp"
#include "mbpetc/reference_decay.hpp"
#include "mbpetc/simulator.hpp"
#include "mbpetc/analysis.hpp"
#include "mbpetc/trace_io.hpp"
#include "mbpetc/experiment.hpp"
