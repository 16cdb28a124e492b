#pragma once

#include "railcause/error.hpp"
#include "railcause/time.hpp"
#include "railcause/core.hpp"
#include "railcause/nbayes.hpp"
#include "railcause/setminer.hpp"
#include "railcause/suggestion.hpp"
#include "railcause/evalkit.hpp"
#include "railcause/feateng.hpp"
#include "railcause/cascade.hpp"
#include "railcause/synthfleet.hpp"
#include "railcause/artifact.hpp"
#include "railcause/pipeline.hpp"
#include "railcause/datastore.hpp"
#include "railcause/diagsvc.hpp"
