#pragma once

#include <treecast/bms.hpp>
#include <treecast/bp_layer.hpp>
#include <treecast/criticality.hpp>
#include <treecast/dynamics.hpp>
#include <treecast/errors.hpp>
#include <treecast/oracle.hpp>
#include <treecast/quantize.hpp>
