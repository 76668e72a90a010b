#pragma once

#include "data.hpp"
#include "ddc_system.hpp"
#include "errors.hpp"
#include "exclusion.hpp"
#include "genericity.hpp"
#include "model.hpp"
#include "panel.hpp"
#include "parallel.hpp"
#include "system.hpp"
