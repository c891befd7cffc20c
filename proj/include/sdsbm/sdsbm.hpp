#pragma once

#include "sdsbm/anomaly.hpp"
#include "sdsbm/em.hpp"
#include "sdsbm/error.hpp"
#include "sdsbm/generator.hpp"
#include "sdsbm/golden_section.hpp"
#include "sdsbm/graph_model.hpp"
#include "sdsbm/ingest.hpp"
#include "sdsbm/kalman.hpp"
#include "sdsbm/model_file.hpp"
#include "sdsbm/random.hpp"
#include "sdsbm/ssm.hpp"
