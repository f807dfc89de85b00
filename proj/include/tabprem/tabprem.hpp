#pragma once

#include "tabprem/error.hpp"
#include "tabprem/table.hpp"
#include "tabprem/renderer.hpp"
#include "tabprem/embedding.hpp"
#include "tabprem/relevance.hpp"
#include "tabprem/gateway.hpp"
#include "tabprem/knowledge.hpp"
#include "tabprem/pipeline.hpp"
