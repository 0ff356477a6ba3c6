#pragma once

#include "errors.hpp"
#include "text.hpp"
#include "rollout_grammar.hpp"
#include "key_info_store.hpp"
#include "retrieval_env.hpp"
#include "reward_engine.hpp"
#include "curriculum.hpp"
#include "grpo_core.hpp"
#include "toy_policy.hpp"
#include "protocol_game.hpp"
#include "proximity_analysis.hpp"
#include "eval_harness.hpp"
#include "judge_client.hpp"
#include "scripted_agent.hpp"
#include "config.hpp"
