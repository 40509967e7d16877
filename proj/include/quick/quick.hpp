// SPDX-License-Identifier: Apache-2.0
/**
 * @file   quick.hpp
 * @brief  Umbrella header.
 */
#pragma once

#include "quick/container.hpp"
#include "quick/costmodel.hpp"
#include "quick/error.hpp"
#include "quick/fragment.hpp"
#include "quick/half.hpp"
#include "quick/layout.hpp"
#include "quick/permutation.hpp"
#include "quick/quantcore.hpp"
#include "quick/rng.hpp"
#include "quick/schedule.hpp"
#include "quick/smem.hpp"
#include "quick/warpsim.hpp"
