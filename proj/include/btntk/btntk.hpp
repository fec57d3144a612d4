#ifndef BTNTK_BTNTK_HPP
#define BTNTK_BTNTK_HPP

#include "btntk/bounds.hpp"
#include "btntk/bt_loss.hpp"
#include "btntk/common.hpp"
#include "btntk/data.hpp"
#include "btntk/errors.hpp"
#include "btntk/experiment.hpp"
#include "btntk/lindyn.hpp"
#include "btntk/linear_model.hpp"
#include "btntk/network.hpp"
#include "btntk/ntk.hpp"
#include "btntk/trainer.hpp"

#endif
