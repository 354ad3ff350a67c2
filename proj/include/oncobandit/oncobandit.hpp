#ifndef ONCOBANDIT_ONCOBANDIT_HPP
#define ONCOBANDIT_ONCOBANDIT_HPP

#include "oncobandit/core.hpp"
#include "oncobandit/ingest.hpp"
#include "oncobandit/synth.hpp"
#include "oncobandit/rewards.hpp"
#include "oncobandit/guidelines.hpp"
#include "oncobandit/mlp.hpp"
#include "oncobandit/nig.hpp"
#include "oncobandit/bbb.hpp"
#include "oncobandit/agent_spec.hpp"
#include "oncobandit/agents.hpp"
#include "oncobandit/runner.hpp"
#include "oncobandit/reports.hpp"
#include "oncobandit/config.hpp"

#endif // ONCOBANDIT_ONCOBANDIT_HPP
