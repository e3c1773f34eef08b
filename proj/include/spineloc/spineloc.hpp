/*
 *  Copyright 2026 The spineloc Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */


#pragma once

#include "spineloc/aggregate.hpp"
#include "spineloc/centroids.hpp"
#include "spineloc/checkpoint.hpp"
#include "spineloc/config.hpp"
#include "spineloc/dense_label.hpp"
#include "spineloc/elastic.hpp"
#include "spineloc/error.hpp"
#include "spineloc/evaluate.hpp"
#include "spineloc/geometry.hpp"
#include "spineloc/inference.hpp"
#include "spineloc/nets.hpp"
#include "spineloc/pipeline.hpp"
#include "spineloc/plot.hpp"
#include "spineloc/predictors.hpp"
#include "spineloc/sampler.hpp"
#include "spineloc/stubs.hpp"
#include "spineloc/synthetic.hpp"
#include "spineloc/training.hpp"
#include "spineloc/version.hpp"
#include "spineloc/vertebra.hpp"
#include "spineloc/volume_io.hpp"
