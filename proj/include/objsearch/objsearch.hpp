#ifndef OBJSEARCH_OBJSEARCH_HPP
#define OBJSEARCH_OBJSEARCH_HPP

#include "objsearch/checkpoint.hpp"
#include "objsearch/detector.hpp"
#include "objsearch/env.hpp"
#include "objsearch/error.hpp"
#include "objsearch/eval.hpp"
#include "objsearch/export.hpp"
#include "objsearch/nn.hpp"
#include "objsearch/policy.hpp"
#include "objsearch/reward.hpp"
#include "objsearch/rng.hpp"
#include "objsearch/scene.hpp"
#include "objsearch/scene_io.hpp"
#include "objsearch/trainer.hpp"

#endif // OBJSEARCH_OBJSEARCH_HPP
