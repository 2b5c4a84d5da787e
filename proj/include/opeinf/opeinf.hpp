#pragma once

#include "opeinf/core.hpp"
#include "opeinf/diagnostics.hpp"
#include "opeinf/domains.hpp"
#include "opeinf/influence_report.hpp"
#include "opeinf/is_estimators.hpp"
#include "opeinf/kernel_fqe.hpp"
#include "opeinf/kernel_influence.hpp"
#include "opeinf/linear_fqe.hpp"
#include "opeinf/oracle.hpp"
#include "opeinf/pipeline.hpp"
#include "opeinf/reproduce.hpp"
