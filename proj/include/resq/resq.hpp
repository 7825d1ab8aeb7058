#pragma once

#include "resq/circle_fit.hpp"
#include "resq/cli.hpp"
#include "resq/constants.hpp"
#include "resq/core_model.hpp"
#include "resq/errors.hpp"
#include "resq/io.hpp"
#include "resq/least_squares.hpp"
#include "resq/pipeline.hpp"
#include "resq/svg.hpp"
#include "resq/synth.hpp"
#include "resq/tls_analysis.hpp"
#include "resq/transport_analysis.hpp"
#include "resq/xrd_analysis.hpp"
