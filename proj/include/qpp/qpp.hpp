#pragma once

#include "qpp/core.hpp"
#include "qpp/operator_space.hpp"
#include "qpp/channels.hpp"
#include "qpp/properties.hpp"
#include "qpp/control_field.hpp"
#include "qpp/landscape.hpp"
#include "qpp/control.hpp"
#include "qpp/ode.hpp"
#include "qpp/dynamics.hpp"
#include "qpp/breakdown.hpp"
