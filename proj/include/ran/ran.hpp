// Copyright 2026 The RAN Authors.
// SPDX-License-Identifier: Apache-2.0

// Umbrella header.

#pragma once

#include "ran/anova.hpp"
#include "ran/benchmarks.hpp"
#include "ran/dataset.hpp"
#include "ran/deep.hpp"
#include "ran/discovery.hpp"
#include "ran/dynamics.hpp"
#include "ran/io.hpp"
#include "ran/loss.hpp"
#include "ran/mlp.hpp"
#include "ran/optim.hpp"
#include "ran/params.hpp"
#include "ran/polynomial.hpp"
#include "ran/rational.hpp"
#include "ran/rng.hpp"
#include "ran/snap.hpp"
#include "ran/stability.hpp"
#include "ran/topology.hpp"
#include "ran/train.hpp"
