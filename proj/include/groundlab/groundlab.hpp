#pragma once

#include "groundlab/ablation.hpp"
#include "groundlab/agent.hpp"
#include "groundlab/config.hpp"
#include "groundlab/episodes.hpp"
#include "groundlab/experiment.hpp"
#include "groundlab/geometry.hpp"
#include "groundlab/language.hpp"
#include "groundlab/lexicon.hpp"
#include "groundlab/matrix.hpp"
#include "groundlab/metrics.hpp"
#include "groundlab/rng.hpp"
#include "groundlab/scorer.hpp"
#include "groundlab/serialize.hpp"
#include "groundlab/world.hpp"
