#pragma once

#include "sfoda/autodiff.hpp"
#include "sfoda/consistency.hpp"
#include "sfoda/csv.hpp"
#include "sfoda/data.hpp"
#include "sfoda/error.hpp"
#include "sfoda/matrix.hpp"
#include "sfoda/metrics.hpp"
#include "sfoda/model.hpp"
#include "sfoda/optim.hpp"
#include "sfoda/pseudolabel.hpp"
#include "sfoda/trainer.hpp"
#include "sfoda/config.hpp"
#include "sfoda/oracle.hpp"
#include "sfoda/pipeline.hpp"
#include "sfoda/random.hpp"
#include "sfoda/text.hpp"
#include "sfoda/verify.hpp"
