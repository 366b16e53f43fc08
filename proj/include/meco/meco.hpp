#ifndef MECO_MECO_HPP
#define MECO_MECO_HPP

#include "meco/channel.hpp"
#include "meco/closed_form.hpp"
#include "meco/delay.hpp"
#include "meco/error.hpp"
#include "meco/harness.hpp"
#include "meco/io.hpp"
#include "meco/oracle.hpp"
#include "meco/rng.hpp"
#include "meco/scenario.hpp"
#include "meco/solver_report.hpp"
#include "meco/subgradient.hpp"
#include "meco/units.hpp"

#endif  // MECO_MECO_HPP
